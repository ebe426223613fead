#![no_main]

use beamjam_core::eval::ThresholdTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = ThresholdTable::from_json_str(text) {
        let again = ThresholdTable::from_json_str(&table.to_json_string()).expect("serialized table reloads");
        assert_eq!(again, table);
    }
});
