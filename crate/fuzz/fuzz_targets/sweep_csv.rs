#![no_main]

use beamjam_core::formats::{parse_sweep_csv, write_sweep_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sweep) = parse_sweep_csv(text) {
        let again = parse_sweep_csv(&write_sweep_csv(&sweep).expect("writes")).expect("rewritten CSV parses");
        assert_eq!(again, sweep);
    }
});
