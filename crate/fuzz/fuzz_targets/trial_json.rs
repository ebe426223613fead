#![no_main]

use beamjam_core::formats::{decode_trial_json, encode_trial_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((obs, scn)) = decode_trial_json(text) {
        let (again, _) = decode_trial_json(&encode_trial_json(&obs, scn.as_ref())).expect("re-encoded record decodes");
        assert_eq!(again, obs);
    }
});
