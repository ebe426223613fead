//! Fast-path statistics checked against independent dense evaluations.

use beamjam_core::airsim::ProjectedObservation;
use beamjam_core::glrt::{gamma_mle, glrt_metric, BeamspaceGrid, CovModel, GlrtMode, Grid};
use beamjam_core::linalg::{inverse_residual, max_abs_diff, norm_sqr, CMat, CVec};
use beamjam_core::model::{beamspace_steering, dft_combiner, Combiner, SpatialAngle};
use beamjam_core::msd::{msd_metric, msd_projection, MsdVariant};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn angle(v: f64) -> SpatialAngle {
    SpatialAngle::new(v).unwrap()
}

fn random_angle(rng: &mut ChaCha8Rng) -> SpatialAngle {
    angle(rng.random_range(-1.0..=1.0))
}

fn random_cvec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CVec {
    CVec::from_fn(n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
    })
}

/// Random model with up to `max_terms` rank-1 terms, together with the same
/// covariance assembled densely from its definition.
fn random_model(rng: &mut ChaCha8Rng, w: &Combiner, max_terms: usize) -> (CovModel, CMat) {
    let n = w.rf_chains();
    let sigma2 = rng.random_range(0.05..2.0);
    let mut model = CovModel::noise_only(n, sigma2).unwrap();
    let mut dense = CMat::identity(n, n) * Complex64::new(sigma2, 0.0);
    for _ in 0..rng.random_range(0..=max_terms) {
        let theta = random_angle(rng);
        let psi = beamspace_steering(theta, w);
        let gamma = rng.random_range(0.0..20.0);
        model = model.update(theta, &psi, gamma).unwrap();
        dense += (&psi * psi.adjoint()) * Complex64::new(gamma, 0.0);
    }
    (model, dense)
}

fn dense_inverse(m: &CMat) -> CMat {
    m.clone().try_inverse().expect("invertible")
}

fn ln_det(m: &CMat) -> f64 {
    m.clone().determinant().re.ln()
}

#[test]
fn woodbury_inverse_matches_definition() {
    let w = dft_combiner(16, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    for _ in 0..100 {
        let (model, dense) = random_model(&mut rng, &w, 4);
        assert!(max_abs_diff(model.r(), &dense) < 1e-12);
        assert!(inverse_residual(model.r(), model.r_inv()) < 1e-9);
    }
}

#[test]
fn determinant_lemma() {
    let w = dft_combiner(16, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..100 {
        let (model, dense) = random_model(&mut rng, &w, 4);
        let theta = random_angle(&mut rng);
        let psi = beamspace_steering(theta, &w);
        let gamma = rng.random_range(0.0..10.0);
        let grown = &dense + (&psi * psi.adjoint()) * Complex64::new(gamma, 0.0);
        let lhs = ln_det(&grown) - ln_det(&dense);
        let rhs = (1.0 + gamma * model.r_stat(&psi)).ln();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}

#[test]
fn covariance_is_order_invariant() {
    let w = dft_combiner(16, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let terms: Vec<(SpatialAngle, f64)> = (0..4)
            .map(|_| (random_angle(&mut rng), rng.random_range(0.0..10.0)))
            .collect();
        let build = |order: &[usize]| {
            order.iter().fold(CovModel::noise_only(8, 0.3).unwrap(), |m, &i| {
                let (t, g) = terms[i];
                m.update(t, &beamspace_steering(t, &w), g).unwrap()
            })
        };
        let a = build(&[0, 1, 2, 3]);
        let b = build(&[3, 1, 0, 2]);
        assert!(max_abs_diff(a.r(), b.r()) < 1e-10);
        let scale = a.r_inv().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max_abs_diff(a.r_inv(), b.r_inv()) < 1e-10 * scale);
    }
}

#[test]
fn r_stat_matches_dense_quadratic_form() {
    let w = dft_combiner(16, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let (model, dense) = random_model(&mut rng, &w, 4);
        let inv = dense_inverse(&dense);
        let psi = beamspace_steering(random_angle(&mut rng), &w);
        let want = psi.dotc(&(&inv * &psi)).re;
        let got = model.r_stat(&psi);
        assert!((got - want).abs() < 1e-10 * want.abs(), "{got} vs {want}");
    }
}

/// `y^H K y` for an explicit `τ'N × τ'N` block-diagonal `K = I ⊗ B`.
fn kronecker_form(obs: &ProjectedObservation, block: &CMat) -> f64 {
    let n = obs.rf_chains();
    let tp = obs.tau_prime();
    let mut big = CMat::zeros(tp * n, tp * n);
    for i in 0..tp {
        big.view_mut((i * n, i * n), (n, n)).copy_from(block);
    }
    let y = obs.stacked();
    y.dotc(&(&big * &y)).re
}

#[test]
fn q_stat_matches_kronecker_form() {
    let w = dft_combiner(12, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..30 {
        let (model, dense) = random_model(&mut rng, &w, 3);
        let inv = dense_inverse(&dense);
        let psi = beamspace_steering(random_angle(&mut rng), &w);
        let y: Vec<CVec> = (0..3).map(|_| random_cvec(&mut rng, 6, 1.0)).collect();
        let obs = ProjectedObservation::new(y, model.sigma2()).unwrap();
        let block = &inv * &psi * psi.adjoint() * &inv;
        let want = kronecker_form(&obs, &block);
        let got = model.q_stat(&obs, &psi).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs(), "{got} vs {want}");
    }
}

/// γ-dependent part of the H1 log-likelihood.
fn loglik(gamma: f64, q: f64, r: f64, tp: f64) -> f64 {
    -tp * (1.0 + gamma * r).ln() + gamma * q / (1.0 + gamma * r)
}

#[test]
fn gamma_mle_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 1000 {
        let tp = rng.random_range(1..=16) as f64;
        let r = 10f64.powf(rng.random_range(-2.0..2.0));
        // Keep 1 + γ̂R bounded away from 0 so the likelihood is defined.
        let q = tp * r * rng.random_range(0.2..20.0);
        let g = gamma_mle(q, r, tp as usize).unwrap();
        let h = 1e-6 * g.abs().max(1e-3 / r);
        let d = (loglik(g + h, q, r, tp) - loglik(g - h, q, r, tp)) / (2.0 * h);
        // Relative to the size of either term of the derivative.
        let scale = tp * r / (1.0 + g * r);
        assert!((d / scale).abs() < 1e-5, "q={q} r={r} tp={tp} d={d}");
        checked += 1;
    }
}

#[test]
fn metric_equals_substituted_likelihood_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let tp = rng.random_range(1..=16);
        let r = 10f64.powf(rng.random_range(-3.0..3.0));
        let q = tp as f64 * r * 10f64.powf(rng.random_range(-1.0..2.0));
        let g = gamma_mle(q, r, tp).unwrap();
        let middle = -(tp as f64) * (1.0 + g * r).ln() + g * q / (1.0 + g * r);
        let t = glrt_metric(q, r, tp).unwrap();
        assert!(t >= 0.0);
        assert!((t - middle).abs() <= 1e-10 * middle.abs().max(1.0), "{t} vs {middle}");
    }
}

#[test]
fn accepted_jammer_is_nulled() {
    // N = M keeps every grid point away from the nulls between beams.
    let w = dft_combiner(16, 16).unwrap();
    let grid = BeamspaceGrid::new(Grid::uniform(101).unwrap(), &w);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let k = rng.random_range(0..grid.len());
        let psi = grid.steering(k);
        let sigma2 = 0.01;
        let y: Vec<CVec> = (0..9)
            .map(|_| {
                let a = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                &psi * a + random_cvec(&mut rng, 16, 0.05)
            })
            .collect();
        let obs = ProjectedObservation::new(y, sigma2).unwrap();
        let model = CovModel::noise_only(16, sigma2).unwrap();
        let (q, r) = (model.q_stat(&obs, &psi).unwrap(), model.r_stat(&psi));
        let before = glrt_metric(q, r, 9).unwrap();
        let gamma = gamma_mle(q, r, 9).unwrap().max(0.0);
        assert!(gamma > 0.0);
        let next = model.update(grid.theta(k), &psi, gamma).unwrap();
        let after = beamjam_core::glrt::scan_metric(&next, &obs, &grid, GlrtMode::Literal).unwrap()[k];
        assert!(after < before, "{after} !< {before}");
        // With the exact MLE folded in, Q/R lands on τ' and the metric on 0.
        assert!(after < 1e-8 * before);
    }
}

#[test]
fn msd_metric_matches_kronecker_form() {
    let w = dft_combiner(12, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for round in 0..30 {
        let thetas: Vec<SpatialAngle> = (0..2).map(|_| random_angle(&mut rng)).collect();
        let steer: Vec<CVec> = thetas.iter().map(|&t| beamspace_steering(t, &w)).collect();
        let variant = if round % 2 == 0 {
            MsdVariant::Is
        } else {
            MsdVariant::Icm
        };
        let xi = msd_projection(variant, &thetas, &steer, &[1.5, 0.2], 0.4, 6).unwrap();
        let psi = beamspace_steering(random_angle(&mut rng), &w);
        let y: Vec<CVec> = (0..3).map(|_| random_cvec(&mut rng, 6, 1.0)).collect();
        let obs = ProjectedObservation::new(y, 0.4).unwrap();
        let pi = &xi * &psi;
        let want = kronecker_form(&obs, &(&pi * pi.adjoint())) / norm_sqr(&pi);
        let got = msd_metric(&obs, &psi, &xi).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs(), "{got} vs {want}");

        // Degree-0 homogeneity in Ξ.
        let scaled = msd_metric(&obs, &psi, &(&xi * Complex64::new(7.5, 0.0))).unwrap();
        assert!((scaled - got).abs() < 1e-10 * got.abs());
    }
}

#[test]
fn msd_projection_properties() {
    let w = dft_combiner(16, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let t = rng.random_range(1..=4);
        let thetas: Vec<SpatialAngle> = (0..t).map(|_| random_angle(&mut rng)).collect();
        let steer: Vec<CVec> = thetas.iter().map(|&a| beamspace_steering(a, &w)).collect();
        let gammas: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..50.0)).collect();
        let sigma2 = rng.random_range(0.01..1.0);

        let is = msd_projection(MsdVariant::Is, &thetas, &steer, &[], sigma2, 8).unwrap();
        assert!(max_abs_diff(&is, &is.adjoint()) < 1e-12);
        assert!(max_abs_diff(&(&is * &is), &is) < 1e-9);
        for s in &steer {
            assert!((&is * s).norm() < 1e-9);
        }

        let icm = msd_projection(MsdVariant::Icm, &thetas, &steer, &gammas, sigma2, 8).unwrap();
        let mut cov = CMat::identity(8, 8) * Complex64::new(sigma2, 0.0);
        for (s, &g) in steer.iter().zip(&gammas) {
            cov += (s * s.adjoint()) * Complex64::new(g, 0.0);
        }
        let whitened = &icm * cov * &icm;
        assert!(max_abs_diff(&whitened, &CMat::identity(8, 8)) < 1e-9);
        assert!(max_abs_diff(&icm, &icm.adjoint()) < 1e-12);
    }
}
