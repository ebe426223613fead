//! Matched-subspace benchmark detectors.
//!
//! Both variants scan `T(θ) = Σ_i |Π^H y_i|² / ‖Π‖²` with `Π = ΞΨ(θ)` and
//! differ only in how `Ξ` suppresses the jammers already found:
//!
//! * MSD-IS projects onto the orthogonal complement of their steering
//!   vectors, `Ξ = I - Ψ_d Ψ_d^†`.
//! * MSD-ICM whitens with the estimated interference covariance,
//!   `Ξ = (Ψ_d Γ̂ Ψ_d^H + σ²I)^{-1/2}`.
//!
//! The detectors compare `T / σ²` against their threshold so that a single
//! calibrated value applies whatever the user power.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::airsim::ProjectedObservation;
use crate::error::{Error, Result};
use crate::glrt::{argmax, gamma_mle, BeamspaceGrid, DetectedJammer, DetectionResult, StopReason};
use crate::linalg::{hermitize, norm_sqr, CMat, CVec};
use crate::model::SpatialAngle;

/// Relative rank tolerance for the detected-steering QR factorization.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Eigenvalue floor for the inverse square root, relative to `σ²`.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// `‖Π‖²` below this (relative to the scale of `Ξ` and `Ψ`) means the angle
/// lies inside the suppressed subspace; its metric is 0.
pub const DEGENERATE_PI: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MsdVariant {
    #[serde(rename = "IS")]
    Is,
    #[serde(rename = "ICM")]
    Icm,
}

/// Inputs that determine `Ξ` at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdState {
    pub variant: MsdVariant,
    pub detected_thetas: Vec<SpatialAngle>,
    /// Steering vectors `Ψ(θ̂_p)`, aligned with `detected_thetas`.
    pub detected_steering: Vec<CVec>,
    /// ICM only; aligned with `detected_thetas`.
    pub gamma_hats: Vec<f64>,
    pub sigma2: f64,
}

impl MsdState {
    pub fn new(variant: MsdVariant, sigma2: f64) -> Self {
        MsdState {
            variant,
            detected_thetas: Vec::new(),
            detected_steering: Vec::new(),
            gamma_hats: Vec::new(),
            sigma2,
        }
    }

    pub fn projection(&self, n: usize) -> Result<CMat> {
        msd_projection(
            self.variant,
            &self.detected_thetas,
            &self.detected_steering,
            &self.gamma_hats,
            self.sigma2,
            n,
        )
    }
}

/// Build `Ξ` for the given variant and previously detected jammers.
pub fn msd_projection(
    variant: MsdVariant,
    thetas: &[SpatialAngle],
    steering: &[CVec],
    gamma_hats: &[f64],
    sigma2: f64,
    n: usize,
) -> Result<CMat> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("noise variance {sigma2} must be positive")));
    }
    if thetas.len() != steering.len() {
        return Err(Error::DimensionMismatch {
            what: "detected steering vectors",
            expected: thetas.len(),
            got: steering.len(),
        });
    }
    if let Some(bad) = steering.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "steering vector length",
            expected: n,
            got: bad.len(),
        });
    }
    match variant {
        MsdVariant::Is => interference_projector(thetas, steering, n),
        MsdVariant::Icm => {
            if gamma_hats.len() != steering.len() {
                return Err(Error::DimensionMismatch {
                    what: "JSR estimates",
                    expected: steering.len(),
                    got: gamma_hats.len(),
                });
            }
            if let Some(g) = gamma_hats.iter().find(|g| !(**g >= 0.0)) {
                return Err(Error::invalid(format!("JSR estimate {g} must be non-negative")));
            }
            let mut cov = CMat::identity(n, n) * Complex64::new(sigma2, 0.0);
            for (s, &g) in steering.iter().zip(gamma_hats) {
                cov += (s * s.adjoint()) * Complex64::new(g, 0.0);
            }
            hermitize(&mut cov);
            Ok(inverse_sqrt(cov, sigma2 * EIGEN_FLOOR))
        }
    }
}

/// `I - Ψ_d Ψ_d^†` via a QR factorization of `Ψ_d`.
fn interference_projector(thetas: &[SpatialAngle], steering: &[CVec], n: usize) -> Result<CMat> {
    let t = steering.len();
    if t == 0 {
        return Ok(CMat::identity(n, n));
    }
    for (i, a) in thetas.iter().enumerate() {
        if thetas[..i].contains(a) {
            return Err(Error::NumericalRank(format!("angle {} detected twice", a.value())));
        }
    }
    if t > n {
        return Err(Error::NumericalRank(format!(
            "{t} detected steering vectors cannot be independent in {n} dimensions"
        )));
    }
    let psi_d = CMat::from_columns(steering);
    let scale = psi_d.norm();
    let qr = psi_d.qr();
    let r = qr.r();
    for k in 0..t {
        if r[(k, k)].norm() < RANK_TOLERANCE * scale {
            return Err(Error::NumericalRank(format!(
                "detected steering matrix has numerical rank below {t}"
            )));
        }
    }
    let q = qr.q();
    let mut xi = CMat::identity(n, n) - &q * q.adjoint();
    hermitize(&mut xi);
    Ok(xi)
}

/// Hermitian inverse square root through an eigendecomposition, flooring
/// eigenvalues at `floor`.
fn inverse_sqrt(m: CMat, floor: f64) -> CMat {
    let eig = m.symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = eig
        .eigenvalues
        .map(|lambda| Complex64::new(1.0 / lambda.max(floor).sqrt(), 0.0));
    let mut out = v * CMat::from_diagonal(&d) * v.adjoint();
    hermitize(&mut out);
    out
}

fn degenerate_threshold(xi: &CMat, psi_norm2: f64) -> f64 {
    DEGENERATE_PI * psi_norm2 * xi.norm_squared() / xi.nrows() as f64
}

/// `Σ_i |Π^H y_i|² / ‖Π‖²` with `Π = ΞΨ(θ)`; 0 when `Π` vanishes.
pub fn msd_metric(obs: &ProjectedObservation, psi: &CVec, xi: &CMat) -> Result<f64> {
    let n = obs.rf_chains();
    if psi.len() != n || xi.nrows() != n || xi.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "MSD operand dimension",
            expected: n,
            got: if psi.len() != n { psi.len() } else { xi.nrows() },
        });
    }
    let pi = xi * psi;
    let pi_norm2 = norm_sqr(&pi);
    if pi_norm2 <= degenerate_threshold(xi, norm_sqr(psi)) {
        return Ok(0.0);
    }
    let proj = obs.matrix().ad_mul(&pi);
    Ok(norm_sqr(&proj) / pi_norm2)
}

/// Normalized metric `T(θ) / σ²` over the whole grid.
pub fn scan_metric(xi: &CMat, obs: &ProjectedObservation, bgrid: &BeamspaceGrid) -> Result<Vec<f64>> {
    let n = obs.rf_chains();
    if bgrid.rf_chains() != n || xi.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "RF chains",
            expected: n,
            got: if bgrid.rf_chains() != n {
                bgrid.rf_chains()
            } else {
                xi.nrows()
            },
        });
    }
    let psi = bgrid.steering_matrix();
    let pi = xi * psi;
    // Π^H y_i = Ψ^H (Ξ^H y_i)
    let g = pi.ad_mul(obs.matrix());
    let xi_scale = xi.norm_squared() / n as f64;
    let sigma2 = obs.sigma2();
    Ok((0..bgrid.len())
        .map(|k| {
            let pi_norm2: f64 = pi.column(k).iter().map(|c| c.norm_sqr()).sum();
            let psi_norm2: f64 = psi.column(k).iter().map(|c| c.norm_sqr()).sum();
            if pi_norm2 <= DEGENERATE_PI * psi_norm2 * xi_scale {
                return 0.0;
            }
            let num: f64 = g.row(k).iter().map(|c| c.norm_sqr()).sum();
            num / pi_norm2 / sigma2
        })
        .collect())
}

/// JSR estimate for a newly accepted ICM jammer against the interference
/// covariance in force when it was accepted (`C⁻¹ = Ξ^H Ξ`), clamped at 0.
fn icm_gamma(xi: &CMat, obs: &ProjectedObservation, psi: &CVec) -> Result<f64> {
    let pi = xi * psi;
    let r = norm_sqr(&pi);
    if r <= 0.0 {
        return Ok(0.0);
    }
    let c_inv_psi = xi.ad_mul(&pi);
    let q = norm_sqr(&obs.matrix().ad_mul(&c_inv_psi));
    Ok(gamma_mle(q, r, obs.tau_prime())?.max(0.0))
}

/// Sequential MSD detection with threshold `kappa_sd` on `T / σ²`.
pub fn run_msd(
    obs: &ProjectedObservation,
    bgrid: &BeamspaceGrid,
    kappa_sd: f64,
    j_max: usize,
    variant: MsdVariant,
) -> Result<DetectionResult> {
    if bgrid.is_empty() {
        return Err(Error::invalid("empty angle grid"));
    }
    if !(kappa_sd >= 0.0) {
        return Err(Error::invalid(format!("threshold {kappa_sd} must be non-negative")));
    }
    if j_max == 0 {
        return Err(Error::invalid("j_max must be at least 1"));
    }
    let n = obs.rf_chains();
    let mut state = MsdState::new(variant, obs.sigma2());
    let mut jammers: Vec<DetectedJammer> = Vec::new();
    let mut traces = Vec::new();

    for _ in 0..j_max {
        let xi = state.projection(n)?;
        let metric = scan_metric(&xi, obs, bgrid)?;
        let (best, peak) = argmax(&metric).expect("grid is non-empty");
        traces.push(metric);
        let repeat = jammers.iter().any(|j| j.grid_index == best);
        if !(peak >= kappa_sd) || repeat {
            return Ok(DetectionResult {
                iterations_run: traces.len(),
                jammers,
                traces,
                stopped_by: StopReason::Threshold,
            });
        }
        let theta = bgrid.theta(best);
        let psi = bgrid.steering(best);
        let gamma = match variant {
            MsdVariant::Is => 0.0,
            MsdVariant::Icm => {
                let g = icm_gamma(&xi, obs, &psi)?;
                state.gamma_hats.push(g);
                g
            }
        };
        state.detected_thetas.push(theta);
        state.detected_steering.push(psi);
        jammers.push(DetectedJammer {
            theta,
            grid_index: best,
            gamma_hat: gamma,
            metric_peak: peak,
        });
    }
    Ok(DetectionResult {
        iterations_run: traces.len(),
        jammers,
        traces,
        stopped_by: StopReason::MaxIterations,
    })
}
