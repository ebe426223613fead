#![no_main]

use beamjam_core::formats::{decode_trial_binary, encode_trial_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(obs) = decode_trial_binary(data) {
        assert_eq!(encode_trial_binary(&obs), data);
    }
});
