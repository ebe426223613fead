//! Property suites run by `beamjam selftest`. Each suite uses a fixed seed so
//! a failure is reproducible.

use std::time::{Duration, Instant};

use beamjam_core::airsim::{
    make_pilots, project, synth_received_with, Components, ProjectedObservation, ReceivedBlock,
};
use beamjam_core::config::ExperimentConfig;
use beamjam_core::detector::{run_detector, DetectorId};
use beamjam_core::eval::{ThresholdEntry, ThresholdTable};
use beamjam_core::formats::{decode_trial_binary, decode_trial_json, encode_trial_binary, encode_trial_json};
use beamjam_core::glrt::{gamma_mle, glrt_metric, woodbury_inverse_update, BeamspaceGrid, CovModel, GlrtMode, Grid};
use beamjam_core::linalg::{complex_normal, inverse_residual, max_abs_diff, CMat, CVec};
use beamjam_core::model::{
    beamspace_steering, dft_combiner, sample_scenario, ula_response, ArrayConfig, Combiner, ScenarioParams,
    SpatialAngle,
};
use beamjam_core::msd::{msd_metric, msd_projection, MsdVariant};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deliberate defects the self-test must catch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturb every rank-1 inverse update.
    Woodbury,
}

pub type SuiteFn = fn(Option<Fault>) -> Result<(), String>;

pub struct Suite {
    pub name: &'static str,
    pub run: SuiteFn,
}

pub const SUITES: &[Suite] = &[
    Suite {
        name: "woodbury",
        run: woodbury,
    },
    Suite {
        name: "determinant-lemma",
        run: determinant_lemma,
    },
    Suite {
        name: "mle-stationarity",
        run: mle_stationarity,
    },
    Suite {
        name: "metric-identities",
        run: metric_identities,
    },
    Suite {
        name: "projection-nulling",
        run: projection_nulling,
    },
    Suite {
        name: "covariance-order",
        run: covariance_order,
    },
    Suite {
        name: "msd-projectors",
        run: msd_projectors,
    },
    Suite {
        name: "array-model",
        run: array_model,
    },
    Suite {
        name: "formats",
        run: formats,
    },
    Suite {
        name: "detector-determinism",
        run: detector_determinism,
    },
];

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub elapsed: Duration,
    pub outcome: Result<(), String>,
}

pub fn run_suite(suite: &Suite, fault: Option<Fault>) -> SuiteReport {
    let start = Instant::now();
    let outcome = (suite.run)(fault);
    SuiteReport {
        name: suite.name,
        elapsed: start.elapsed(),
        outcome,
    }
}

pub fn run_all(fault: Option<Fault>) -> Vec<SuiteReport> {
    SUITES.iter().map(|s| run_suite(s, fault)).collect()
}

pub fn find(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn angle(rng: &mut ChaCha8Rng) -> SpatialAngle {
    SpatialAngle::new(rng.random_range(-1.0..=1.0)).expect("in range")
}

fn scaled_identity(n: usize, s: f64) -> CMat {
    CMat::identity(n, n) * Complex64::new(s, 0.0)
}

fn rank_one(psi: &CVec, gamma: f64) -> CMat {
    (psi * psi.adjoint()) * Complex64::new(gamma, 0.0)
}

fn woodbury(fault: Option<Fault>) -> Result<(), String> {
    let w = dft_combiner(16, 8).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    for case in 0..100 {
        let sigma2 = rng.random_range(0.05..2.0);
        let mut r = scaled_identity(8, sigma2);
        let mut r_inv = scaled_identity(8, 1.0 / sigma2);
        let mut model = CovModel::noise_only(8, sigma2).map_err(|e| e.to_string())?;
        for _ in 0..rng.random_range(1..=4) {
            let theta = angle(&mut rng);
            let psi = beamspace_steering(theta, &w);
            let gamma = rng.random_range(0.0..20.0);
            r += rank_one(&psi, gamma);
            r_inv = woodbury_inverse_update(&r_inv, &psi, gamma);
            if fault == Some(Fault::Woodbury) {
                r_inv[(0, 0)] += Complex64::new(1e-6, 0.0);
            }
            model = model.update(theta, &psi, gamma).map_err(|e| e.to_string())?;
        }
        let res = inverse_residual(&r, &r_inv);
        check(res < 1e-9, || format!("case {case}: ‖R·R⁻¹ − I‖_max = {res:e}"))?;
        let res = inverse_residual(model.r(), model.r_inv());
        check(res < 1e-9, || format!("case {case}: covariance model residual {res:e}"))?;
        check(max_abs_diff(model.r(), &r) < 1e-12, || {
            format!("case {case}: covariance model drifted")
        })?;
    }
    Ok(())
}

fn ln_det(m: &CMat) -> f64 {
    m.clone().determinant().re.ln()
}

fn random_model(rng: &mut ChaCha8Rng, w: &Combiner) -> Result<(CovModel, CMat), String> {
    let sigma2 = rng.random_range(0.05..2.0);
    let mut model = CovModel::noise_only(w.rf_chains(), sigma2).map_err(|e| e.to_string())?;
    let mut dense = scaled_identity(w.rf_chains(), sigma2);
    for _ in 0..rng.random_range(0..=4) {
        let theta = angle(rng);
        let psi = beamspace_steering(theta, w);
        let gamma = rng.random_range(0.0..20.0);
        model = model.update(theta, &psi, gamma).map_err(|e| e.to_string())?;
        dense += rank_one(&psi, gamma);
    }
    Ok((model, dense))
}

fn determinant_lemma(_: Option<Fault>) -> Result<(), String> {
    let w = dft_combiner(16, 8).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0002);
    for case in 0..100 {
        let (model, dense) = random_model(&mut rng, &w)?;
        let psi = beamspace_steering(angle(&mut rng), &w);
        let gamma = rng.random_range(0.0..10.0);
        let lhs = ln_det(&(&dense + rank_one(&psi, gamma))) - ln_det(&dense);
        let rhs = (1.0 + gamma * model.r_stat(&psi)).ln();
        check((lhs - rhs).abs() < 1e-9, || format!("case {case}: {lhs} vs {rhs}"))?;
    }
    Ok(())
}

fn loglik(gamma: f64, q: f64, r: f64, tp: f64) -> f64 {
    -tp * (1.0 + gamma * r).ln() + gamma * q / (1.0 + gamma * r)
}

fn random_triple(rng: &mut ChaCha8Rng) -> (f64, f64, usize) {
    let tp = rng.random_range(1..=16usize);
    let r = 10f64.powf(rng.random_range(-2.0..2.0));
    let q = tp as f64 * r * rng.random_range(0.2..20.0);
    (q, r, tp)
}

fn mle_stationarity(_: Option<Fault>) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0003);
    for case in 0..1000 {
        let (q, r, tp) = random_triple(&mut rng);
        let g = gamma_mle(q, r, tp).map_err(|e| e.to_string())?;
        let tpf = tp as f64;
        let h = 1e-6 * g.abs().max(1e-3 / r);
        let d = (loglik(g + h, q, r, tpf) - loglik(g - h, q, r, tpf)) / (2.0 * h);
        let rel = (d / (tpf * r / (1.0 + g * r))).abs();
        check(rel < 1e-5, || {
            format!("case {case}: Q={q} R={r} τ'={tp}: relative derivative {rel:e}")
        })?;
    }
    Ok(())
}

fn metric_identities(_: Option<Fault>) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0004);
    for case in 0..1000 {
        let tp = rng.random_range(1..=16usize);
        let r = 10f64.powf(rng.random_range(-3.0..3.0));
        let q = tp as f64 * r * 10f64.powf(rng.random_range(-2.0..2.0));
        let t = glrt_metric(q, r, tp).map_err(|e| e.to_string())?;
        check(t >= 0.0, || format!("case {case}: T = {t} < 0"))?;
        let at_min = glrt_metric(tp as f64 * r, r, tp).map_err(|e| e.to_string())?;
        check(at_min == 0.0, || format!("case {case}: T = {at_min} at Q/R = τ'"))?;
        let g = gamma_mle(q, r, tp).map_err(|e| e.to_string())?;
        if 1.0 + g * r > 0.0 {
            let middle = loglik(g, q, r, tp as f64);
            check((t - middle).abs() <= 1e-10 * middle.abs().max(1.0), || {
                format!("case {case}: T = {t}, substituted form {middle}")
            })?;
        }
    }
    Ok(())
}

fn default_params(num_jammers: usize) -> ScenarioParams {
    let mut params = ExperimentConfig::default().scenario_params(Some(20.0));
    params.num_jammers = num_jammers;
    if num_jammers == 0 {
        params.jnr_db = None;
    }
    params
}

fn projection_nulling(_: Option<Fault>) -> Result<(), String> {
    let cfg = ExperimentConfig::default();
    let w = dft_combiner(cfg.array.m, cfg.array.n).map_err(|e| e.to_string())?;
    let pilots = make_pilots(cfg.pilots.tau).map_err(|e| e.to_string())?;
    let user_only = Components {
        user: true,
        jamming: false,
        noise: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0005);
    for seed in 0..100u64 {
        let params = default_params(rng.random_range(0..=6));
        let scn = sample_scenario(&params, seed).map_err(|e| e.to_string())?;
        let block = synth_received_with(&scn, &pilots, &w, &mut rng, user_only).map_err(|e| e.to_string())?;
        let obs = project(&block, &pilots, scn.user_power).map_err(|e| e.to_string())?;
        let h = (beamspace_steering(scn.user_theta, &w) * scn.user_beta).norm();
        let worst = (0..obs.tau_prime()).map(|i| obs.y(i).norm()).fold(0.0, f64::max);
        check(worst <= 1e-12 * h, || {
            format!("scenario {seed}: residual user energy {worst:e}")
        })?;

        let full =
            synth_received_with(&scn, &pilots, &w, &mut rng, Components::default()).map_err(|e| e.to_string())?;
        let sum = ReceivedBlock { y: &block.y + &full.y };
        let p = |b: &ReceivedBlock| project(b, &pilots, scn.user_power).map(|o| o.matrix().clone());
        let lhs = p(&sum).map_err(|e| e.to_string())?;
        let rhs = p(&block).map_err(|e| e.to_string())? + p(&full).map_err(|e| e.to_string())?;
        let scale = lhs.iter().map(|z| z.norm()).fold(1.0, f64::max);
        check(max_abs_diff(&lhs, &rhs) <= 1e-12 * scale, || {
            format!("scenario {seed}: projection not linear")
        })?;
    }
    Ok(())
}

fn covariance_order(_: Option<Fault>) -> Result<(), String> {
    let w = dft_combiner(16, 8).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0006);
    for case in 0..50 {
        let terms: Vec<(SpatialAngle, f64)> = (0..4).map(|_| (angle(&mut rng), rng.random_range(0.0..10.0))).collect();
        let build = |order: [usize; 4]| -> Result<CovModel, String> {
            order
                .iter()
                .try_fold(CovModel::noise_only(8, 0.3).map_err(|e| e.to_string())?, |m, &i| {
                    let (t, g) = terms[i];
                    m.update(t, &beamspace_steering(t, &w), g).map_err(|e| e.to_string())
                })
        };
        let a = build([0, 1, 2, 3])?;
        let b = build([2, 0, 3, 1])?;
        check(max_abs_diff(a.r(), b.r()) < 1e-10, || {
            format!("case {case}: order changed R")
        })?;
    }
    Ok(())
}

fn msd_projectors(_: Option<Fault>) -> Result<(), String> {
    let w = dft_combiner(16, 8).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0007);
    let eye = CMat::identity(8, 8);
    for case in 0..50 {
        let t = rng.random_range(1..=4);
        let thetas: Vec<SpatialAngle> = (0..t).map(|_| angle(&mut rng)).collect();
        let steer: Vec<CVec> = thetas.iter().map(|&a| beamspace_steering(a, &w)).collect();
        let gammas: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..50.0)).collect();
        let sigma2 = rng.random_range(0.01..1.0);

        let is = msd_projection(MsdVariant::Is, &thetas, &steer, &[], sigma2, 8).map_err(|e| e.to_string())?;
        check(max_abs_diff(&is, &is.adjoint()) < 1e-9, || {
            format!("case {case}: IS projector not Hermitian")
        })?;
        check(max_abs_diff(&(&is * &is), &is) < 1e-9, || {
            format!("case {case}: IS projector not idempotent")
        })?;
        check(steer.iter().all(|s| (&is * s).norm() < 1e-9), || {
            format!("case {case}: IS leaks a detected steering")
        })?;

        let icm = msd_projection(MsdVariant::Icm, &thetas, &steer, &gammas, sigma2, 8).map_err(|e| e.to_string())?;
        let mut cov = scaled_identity(8, sigma2);
        for (s, &g) in steer.iter().zip(&gammas) {
            cov += rank_one(s, g);
        }
        check(max_abs_diff(&(&icm * cov * &icm), &eye) < 1e-9, || {
            format!("case {case}: ICM whitener residual")
        })?;

        let y: Vec<CVec> = (0..3)
            .map(|_| CVec::from_fn(8, |_, _| complex_normal(&mut rng, 1.0)))
            .collect();
        let obs = ProjectedObservation::new(y, sigma2).map_err(|e| e.to_string())?;
        let psi = beamspace_steering(angle(&mut rng), &w);
        for xi in [&is, &icm] {
            let base = msd_metric(&obs, &psi, xi).map_err(|e| e.to_string())?;
            let scaled = msd_metric(&obs, &psi, &(xi * Complex64::new(3.7, 0.0))).map_err(|e| e.to_string())?;
            check((base - scaled).abs() <= 1e-10 * base.abs().max(1e-300), || {
                format!("case {case}: metric changed under scaling of Ξ")
            })?;
        }
    }
    Ok(())
}

fn array_model(_: Option<Fault>) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0008);
    for m in [1usize, 2, 7, 32, 128, 256] {
        for _ in 0..20 {
            let a = ula_response(angle(&mut rng), m).map_err(|e| e.to_string())?;
            check((a.norm() - 1.0).abs() < 1e-12, || {
                format!("M = {m}: ‖a‖ = {}", a.norm())
            })?;
        }
    }
    for m in [4usize, 16, 32] {
        let w = dft_combiner(m, m).map_err(|e| e.to_string())?;
        let gram = w.matrix().ad_mul(w.matrix());
        check(max_abs_diff(&gram, &CMat::identity(m, m)) < 1e-12, || {
            format!("M = N = {m}: W^H W ≠ I")
        })?;
    }
    let params = default_params(6);
    for seed in 0..20 {
        let a = sample_scenario(&params, seed).map_err(|e| e.to_string())?;
        let b = sample_scenario(&params, seed).map_err(|e| e.to_string())?;
        check(a == b, || format!("seed {seed}: scenario sampling is not pure"))?;
        check(a.sigma2 == 1.0 / (a.user_power * a.tau as f64), || {
            format!("seed {seed}: σ² ≠ 1/(Pτ)")
        })?;
    }
    Ok(())
}

fn formats(_: Option<Fault>) -> Result<(), String> {
    let cfg = ExperimentConfig::default();
    let back = ExperimentConfig::from_json_str(&cfg.to_json_string()).map_err(|e| e.to_string())?;
    check(back == cfg, || "config did not survive a round trip".into())?;

    let mut table = ThresholdTable::default();
    for (i, d) in DetectorId::ALL.into_iter().enumerate() {
        table
            .insert(ThresholdEntry {
                detector: d,
                fingerprint: cfg.fingerprint(d),
                p_f: cfg.detection.p_f,
                kappa: 1.25 + i as f64 / 3.0,
                n_trials: cfg.run.n_calib_trials,
                seed: 1,
            })
            .map_err(|e| e.to_string())?;
    }
    let back = ThresholdTable::from_json_str(&table.to_json_string()).map_err(|e| e.to_string())?;
    check(back == table, || "threshold table did not survive a round trip".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0009);
    let y = CMat::from_fn(8, 9, |_, _| complex_normal(&mut rng, 0.37));
    let obs = ProjectedObservation::from_matrix(y, 0.37).map_err(|e| e.to_string())?;
    let bin = decode_trial_binary(&encode_trial_binary(&obs)).map_err(|e| e.to_string())?;
    check(bin == obs, || "binary trial record did not survive a round trip".into())?;
    let (json, _) = decode_trial_json(&encode_trial_json(&obs, None)).map_err(|e| e.to_string())?;
    check(json == obs, || "JSON trial record did not survive a round trip".into())?;
    Ok(())
}

fn detector_determinism(_: Option<Fault>) -> Result<(), String> {
    let params = ScenarioParams {
        array: ArrayConfig {
            m: 32,
            n: 16,
            m_prime: 4,
        },
        tau: 10,
        ..default_params(3)
    };
    let w = dft_combiner(32, 16).map_err(|e| e.to_string())?;
    let pilots = make_pilots(10).map_err(|e| e.to_string())?;
    let bgrid = BeamspaceGrid::new(Grid::uniform(100).map_err(|e| e.to_string())?, &w);
    let scn = sample_scenario(&params, 3).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_000A);
    let block = synth_received_with(&scn, &pilots, &w, &mut rng, Components::default()).map_err(|e| e.to_string())?;
    let obs = project(&block, &pilots, scn.user_power).map_err(|e| e.to_string())?;
    for id in DetectorId::ALL {
        let kappa = if id == DetectorId::GlrtSci { 8.0 } else { 25.0 };
        let a = run_detector(id, &obs, &bgrid, kappa, 6, GlrtMode::Literal).map_err(|e| e.to_string())?;
        let b = run_detector(id, &obs, &bgrid, kappa, 6, GlrtMode::Literal).map_err(|e| e.to_string())?;
        check(a == b, || format!("{id}: two runs on the same input differ"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for report in run_all(None) {
            assert!(report.outcome.is_ok(), "{}: {:?}", report.name, report.outcome);
        }
    }

    #[test]
    fn woodbury_fault_is_caught() {
        let report = run_suite(find("woodbury").unwrap(), Some(Fault::Woodbury));
        assert!(report.outcome.is_err());
        // Other suites do not depend on the hook.
        assert!(run_suite(find("determinant-lemma").unwrap(), Some(Fault::Woodbury))
            .outcome
            .is_ok());
    }
}
