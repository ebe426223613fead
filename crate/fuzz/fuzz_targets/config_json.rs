#![no_main]

use beamjam_core::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json_str(text) {
        let again = ExperimentConfig::from_json_str(&cfg.to_json_string()).expect("serialized config reloads");
        assert_eq!(again, cfg);
    }
});
