#![no_main]

use beamjam_core::formats::parse_truth_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_truth_csv(text);
});
