//! Calibration and sweep behaviour on a small configuration.

use beamjam_core::config::ExperimentConfig;
use beamjam_core::detector::DetectorId;
use beamjam_core::eval::{
    calibrate_all, calibrate_threshold, false_alarm_rate, null_statistics, run_sweep, ThresholdTable,
};
use beamjam_core::seeding::Phase;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.array.m = 32;
    cfg.array.n = 16;
    cfg.scenario.num_jammers = 2;
    cfg.detection.grid_l = 64;
    cfg.detection.j_max = 3;
    cfg.detection.p_f = 0.05;
    cfg.run.n_calib_trials = 1000;
    cfg.run.n_trials = 100;
    cfg
}

fn thresholds(cfg: &ExperimentConfig) -> ThresholdTable {
    calibrate_all(cfg).unwrap()
}

#[test]
fn calibration_is_deterministic_and_thread_independent() {
    let cfg = small_config();
    let a = calibrate_threshold(DetectorId::GlrtSci, &cfg, 0.05, 1000, 7).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| calibrate_threshold(DetectorId::GlrtSci, &cfg, 0.05, 1000, 7).unwrap());
    assert_eq!(a.to_bits(), b.to_bits());
    let c = calibrate_threshold(DetectorId::GlrtSci, &cfg, 0.05, 1000, 8).unwrap();
    assert_ne!(a, c);
}

#[test]
fn tighter_false_alarm_target_raises_threshold() {
    let cfg = small_config();
    for id in DetectorId::ALL {
        let loose = calibrate_threshold(id, &cfg, 0.1, 2000, 3).unwrap();
        let tight = calibrate_threshold(id, &cfg, 0.025, 2000, 3).unwrap();
        assert!(tight >= loose, "{id}: {tight} < {loose}");
    }
}

#[test]
fn calibration_rejects_small_samples() {
    let cfg = small_config();
    assert!(calibrate_threshold(DetectorId::MsdIs, &cfg, 0.05, 999, 1).is_err());
    assert!(calibrate_threshold(DetectorId::MsdIs, &cfg, 0.0, 1000, 1).is_err());
}

#[test]
fn fresh_null_trials_reproduce_false_alarm_target() {
    let cfg = small_config();
    let (p_f, n) = (0.05, 4000usize);
    let sd = (p_f * (1.0 - p_f) / n as f64).sqrt();
    // The threshold is itself estimated from n samples, so allow for both.
    let half_width = 3.0 * sd * 2f64.sqrt();
    for id in DetectorId::ALL {
        let kappa = calibrate_threshold(id, &cfg, p_f, n, 11).unwrap();
        let fresh = null_statistics(&cfg, &[id], n, 11, Phase::Validation).unwrap();
        let fa = false_alarm_rate(&fresh[0], kappa);
        assert!((fa - p_f).abs() <= half_width, "{id}: FA {fa}");
    }
}

#[test]
fn sweep_shape_determinism_and_bounds() {
    let cfg = small_config();
    let table = thresholds(&cfg);
    let jnrs = [0.0, 10.0, 20.0];
    let a = run_sweep(&cfg, &jnrs, &DetectorId::ALL, &table, 5).unwrap();
    assert_eq!(a.rows.len(), 9);
    let b = run_sweep(&cfg, &jnrs, &DetectorId::ALL, &table, 5).unwrap();
    assert_eq!(a, b);
    let tol = 2.0 / cfg.array.n as f64;
    for row in &a.rows {
        assert!((0.0..=1.0).contains(&row.p_d));
        if let Some(r) = row.rmse {
            assert!(r <= tol + 1e-15, "{row:?}");
        }
    }
    let glrt = |j| a.row(DetectorId::GlrtSci, j).unwrap().p_d;
    assert!(glrt(20.0) > 0.5);
}

#[test]
fn silent_jammers_are_detected_at_false_alarm_rate() {
    let cfg = small_config();
    let table = thresholds(&cfg);
    let res = run_sweep(&cfg, &[-200.0], &DetectorId::ALL, &table, 2).unwrap();
    for row in &res.rows {
        assert!(row.p_d <= 5.0 * cfg.detection.p_f, "{row:?}");
    }
}

#[test]
fn sweep_needs_thresholds() {
    let cfg = small_config();
    let err = run_sweep(&cfg, &[0.0], &DetectorId::ALL, &ThresholdTable::default(), 1).unwrap_err();
    assert!(
        err.to_string().contains("threshold") || err.to_string().contains("configuration"),
        "{err}"
    );
}
