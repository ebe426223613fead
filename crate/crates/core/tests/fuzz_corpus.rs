//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets, and mutates it a little on stable.

use std::fs;
use std::path::{Path, PathBuf};

use beamjam_core::config::ExperimentConfig;
use beamjam_core::eval::ThresholdTable;
use beamjam_core::formats::{
    decode_trial_binary, decode_trial_json, encode_trial_binary, encode_trial_json, parse_sweep_csv, parse_trace_csv,
    parse_truth_csv, write_sweep_csv,
};
use proptest::prelude::*;

const TARGETS: [&str; 7] = [
    "config_json",
    "threshold_table",
    "trial_binary",
    "trial_json",
    "sweep_csv",
    "trace_csv",
    "truth_csv",
];

/// Mirrors the fuzz target bodies. Returns whether the input was accepted;
/// panics if a round trip breaks.
fn exercise(target: &str, data: &[u8]) -> bool {
    if target == "trial_binary" {
        return match decode_trial_binary(data) {
            Ok(obs) => {
                assert_eq!(encode_trial_binary(&obs), data);
                true
            }
            Err(_) => false,
        };
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    match target {
        "config_json" => ExperimentConfig::from_json_str(text)
            .map(|cfg| assert_eq!(ExperimentConfig::from_json_str(&cfg.to_json_string()).unwrap(), cfg))
            .is_ok(),
        "threshold_table" => ThresholdTable::from_json_str(text)
            .map(|t| assert_eq!(ThresholdTable::from_json_str(&t.to_json_string()).unwrap(), t))
            .is_ok(),
        "trial_json" => decode_trial_json(text)
            .map(|(obs, scn)| {
                let (again, _) = decode_trial_json(&encode_trial_json(&obs, scn.as_ref())).unwrap();
                assert_eq!(again, obs);
            })
            .is_ok(),
        "sweep_csv" => parse_sweep_csv(text)
            .map(|s| assert_eq!(parse_sweep_csv(&write_sweep_csv(&s).unwrap()).unwrap(), s))
            .is_ok(),
        "trace_csv" => parse_trace_csv(text).is_ok(),
        "truth_csv" => parse_truth_csv(text).is_ok(),
        other => panic!("unknown target {other}"),
    }
}

fn corpus(target: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
}

#[test]
fn corpus_seeds_behave_as_named() {
    for target in TARGETS {
        let files = corpus(target);
        assert!(
            files
                .iter()
                .any(|f| f.file_name().unwrap().to_str().unwrap().starts_with("ok_")),
            "{target}"
        );
        for file in files {
            let name = file.file_name().unwrap().to_str().unwrap().to_owned();
            let accepted = exercise(target, &fs::read(&file).unwrap());
            if name.starts_with("ok_") {
                assert!(accepted, "{target}/{name} should parse");
            } else if name.starts_with("bad_") {
                assert!(!accepted, "{target}/{name} should be rejected");
            }
        }
    }
}

fn all_seeds() -> Vec<(&'static str, Vec<u8>)> {
    TARGETS
        .iter()
        .flat_map(|&t| corpus(t).into_iter().map(move |f| (t, fs::read(f).unwrap())))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mutated_seeds_never_panic(
        pick in any::<prop::sample::Index>(),
        flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 0..8),
        cut in any::<prop::sample::Index>(),
        truncate in any::<bool>(),
    ) {
        let seeds = all_seeds();
        let (target, mut data) = seeds[pick.index(seeds.len())].clone();
        if !data.is_empty() {
            for (at, byte) in flips {
                let i = at.index(data.len());
                data[i] = byte;
            }
            if truncate {
                data.truncate(cut.index(data.len()));
            }
        }
        exercise(target, &data);
    }
}
