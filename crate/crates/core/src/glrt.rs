//! Iterative GLRT with spatial covariance identification (GLRT-SCI).
//!
//! Iteration `t` tests whether one more rank-1 term `γ_t Ψ(θ_t)Ψ^H(θ_t)`
//! explains the projected observation better than the covariance
//! `R̂^(t-1)` built from the jammers already accepted. With `R̂^(t-1)` fixed,
//! the test reduces to two scalars per grid angle:
//!
//! ```text
//! R(θ) = Ψ^H R̂⁻¹ Ψ
//! Q(θ) = Σ_i |Ψ^H R̂⁻¹ y_i|²
//! γ̂(θ) = (Q - τ'R) / (τ'R²)
//! T(θ) = -τ' ln(Q / (τ'R)) + Q/R - τ'
//! ```
//!
//! The maximizer over the grid is accepted if `T ≥ κ`, its covariance term
//! is folded into `R̂` with a rank-1 Woodbury update, and the scan repeats.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::airsim::ProjectedObservation;
use crate::error::{Error, Result};
use crate::linalg::{hermitize, inverse_residual, norm_sqr, CMat, CVec};
use crate::model::{beamspace_steering, Combiner, SpatialAngle};

/// Residual bound `‖R R⁻¹ - I‖_max` above which the cached inverse is
/// recomputed from scratch.
pub const INVERSE_TOLERANCE: f64 = 1e-9;

/// `L` equally spaced angles covering `[-1, 1]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<SpatialAngle>,
}

impl Grid {
    pub fn uniform(l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points, got {l}")));
        }
        let step = 2.0 / (l - 1) as f64;
        let points = (0..l)
            .map(|k| {
                let v = if k == l - 1 { 1.0 } else { -1.0 + k as f64 * step };
                SpatialAngle::new(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Grid { points })
    }

    pub fn points(&self) -> &[SpatialAngle] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A grid together with its precomputed beamspace steering vectors; column
/// `k` of [`BeamspaceGrid::steering_matrix`] is `Ψ(θ_k)`.
#[derive(Debug, Clone)]
pub struct BeamspaceGrid {
    grid: Grid,
    psi: CMat,
}

impl BeamspaceGrid {
    pub fn new(grid: Grid, w: &Combiner) -> Self {
        let mut psi = CMat::zeros(w.rf_chains(), grid.len());
        for (k, &theta) in grid.points().iter().enumerate() {
            psi.set_column(k, &beamspace_steering(theta, w));
        }
        BeamspaceGrid { grid, psi }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn rf_chains(&self) -> usize {
        self.psi.nrows()
    }

    pub fn steering_matrix(&self) -> &CMat {
        &self.psi
    }

    pub fn steering(&self, k: usize) -> CVec {
        self.psi.column(k).into_owned()
    }

    pub fn theta(&self, k: usize) -> SpatialAngle {
        self.grid.points[k]
    }
}

/// Rank-1 Woodbury update of a Hermitian inverse:
/// `(R + γψψ^H)⁻¹ = R⁻¹ - γ/(1 + γψ^H R⁻¹ψ) · R⁻¹ψψ^H R⁻¹`.
pub fn woodbury_inverse_update(r_inv: &CMat, psi: &CVec, gamma: f64) -> CMat {
    let v = r_inv * psi;
    let r = psi.dotc(&v).re;
    let scale = gamma / (1.0 + gamma * r);
    let mut out = r_inv - (&v * v.adjoint()) * Complex64::new(scale, 0.0);
    hermitize(&mut out);
    out
}

/// Running estimate `R̂ = Σ_t γ̂_t Ψ(θ̂_t)Ψ^H(θ̂_t) + σ²I` with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CovModel {
    detected: Vec<(SpatialAngle, f64)>,
    sigma2: f64,
    r: CMat,
    r_inv: CMat,
}

impl CovModel {
    /// `R̂^(0) = σ²I`.
    pub fn noise_only(n: usize, sigma2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("covariance dimension must be positive"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!("noise variance {sigma2} must be positive")));
        }
        Ok(CovModel {
            detected: Vec::new(),
            sigma2,
            r: CMat::identity(n, n) * Complex64::new(sigma2, 0.0),
            r_inv: CMat::identity(n, n) * Complex64::new(1.0 / sigma2, 0.0),
        })
    }

    pub fn detected(&self) -> &[(SpatialAngle, f64)] {
        &self.detected
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn r(&self) -> &CMat {
        &self.r
    }

    pub fn r_inv(&self) -> &CMat {
        &self.r_inv
    }

    /// Fold `γ̂ Ψ(θ̂)Ψ^H(θ̂)` into the model. `psi` must be `Ψ(θ̂)`.
    pub fn update(&self, theta: SpatialAngle, psi: &CVec, gamma: f64) -> Result<CovModel> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("JSR estimate {gamma} must be non-negative")));
        }
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "steering vector length",
                expected: self.dim(),
                got: psi.len(),
            });
        }
        let mut r = &self.r + (psi * psi.adjoint()) * Complex64::new(gamma, 0.0);
        hermitize(&mut r);
        let mut r_inv = woodbury_inverse_update(&self.r_inv, psi, gamma);
        if !(inverse_residual(&r, &r_inv) <= INVERSE_TOLERANCE) {
            r_inv = dense_inverse(&r)?;
        }
        let mut detected = self.detected.clone();
        detected.push((theta, gamma));
        Ok(CovModel {
            detected,
            sigma2: self.sigma2,
            r,
            r_inv,
        })
    }

    /// `R(θ) = Ψ^H R̂⁻¹ Ψ`.
    pub fn r_stat(&self, psi: &CVec) -> f64 {
        psi.dotc(&(&self.r_inv * psi)).re
    }

    /// `Q(θ) = Σ_i |Ψ^H R̂⁻¹ y_i|²`.
    pub fn q_stat(&self, obs: &ProjectedObservation, psi: &CVec) -> Result<f64> {
        if obs.rf_chains() != self.dim() || psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "observation dimension",
                expected: self.dim(),
                got: if psi.len() != self.dim() {
                    psi.len()
                } else {
                    obs.rf_chains()
                },
            });
        }
        let v = &self.r_inv * psi;
        let proj = obs.matrix().ad_mul(&v);
        Ok(norm_sqr(&proj))
    }
}

fn dense_inverse(r: &CMat) -> Result<CMat> {
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalRank("covariance lost positive definiteness".into()))?;
    let mut inv = chol.inverse();
    hermitize(&mut inv);
    Ok(inv)
}

/// Unconstrained MLE `γ̂ = (Q - τ'R) / (τ'R²)`; negative when `Q/R < τ'`.
pub fn gamma_mle(q: f64, r: f64, tau_prime: usize) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("R = {r} must be positive")));
    }
    if tau_prime == 0 {
        return Err(Error::invalid("need at least one unused pilot"));
    }
    let tp = tau_prime as f64;
    Ok((q - tp * r) / (tp * r * r))
}

/// `T = -τ' ln(Q/(τ'R)) + Q/R - τ'`, evaluated as `τ'(u - ln(1+u))` with
/// `u = Q/(τ'R) - 1` so the neighbourhood of the minimum keeps precision.
pub fn glrt_metric(q: f64, r: f64, tau_prime: usize) -> Result<f64> {
    if !(q > 0.0) || !(r > 0.0) {
        return Err(Error::invalid(format!(
            "GLRT metric needs Q > 0 and R > 0 (Q = {q}, R = {r})"
        )));
    }
    if tau_prime == 0 {
        return Err(Error::invalid("need at least one unused pilot"));
    }
    let tp = tau_prime as f64;
    let u = q / (tp * r) - 1.0;
    Ok((tp * (u - u.ln_1p())).max(0.0))
}

/// How the metric treats angles whose `Q/R` falls below `τ'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlrtMode {
    /// The closed form as derived; symmetric-ish about `Q/R = τ'`.
    #[default]
    Literal,
    /// `T = 0` whenever `Q/R ≤ τ'` (the JSR cannot be negative).
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedJammer {
    pub theta: SpatialAngle,
    pub grid_index: usize,
    pub gamma_hat: f64,
    pub metric_peak: f64,
}

/// Output of one detector run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub jammers: Vec<DetectedJammer>,
    /// Metric over the whole grid at each iteration, including the final
    /// iteration that declared H0.
    pub traces: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub stopped_by: StopReason,
}

impl DetectionResult {
    pub fn thetas(&self) -> Vec<SpatialAngle> {
        self.jammers.iter().map(|j| j.theta).collect()
    }
}

/// Per-angle `(Q, R)` for every grid point under `model`.
pub fn scan_qr(model: &CovModel, obs: &ProjectedObservation, bgrid: &BeamspaceGrid) -> Result<Vec<(f64, f64)>> {
    if obs.rf_chains() != model.dim() || bgrid.rf_chains() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "RF chains",
            expected: model.dim(),
            got: if obs.rf_chains() != model.dim() {
                obs.rf_chains()
            } else {
                bgrid.rf_chains()
            },
        });
    }
    let psi = bgrid.steering_matrix();
    // Ψ^H R̂⁻¹ y_i for all (θ, i) at once; R̂⁻¹ is Hermitian.
    let z = model.r_inv() * obs.matrix();
    let g = psi.ad_mul(&z);
    let v = model.r_inv() * psi;
    Ok((0..bgrid.len())
        .map(|k| {
            let q: f64 = g.row(k).iter().map(|c| c.norm_sqr()).sum();
            let r = psi.column(k).dotc(&v.column(k)).re;
            (q, r)
        })
        .collect())
}

fn metric_from_qr(q: f64, r: f64, tau_prime: usize, mode: GlrtMode) -> f64 {
    if q <= 0.0 || r <= 0.0 {
        return 0.0;
    }
    if mode == GlrtMode::OneSided && q <= tau_prime as f64 * r {
        return 0.0;
    }
    glrt_metric(q, r, tau_prime).unwrap_or(0.0)
}

/// `T(θ)` over the whole grid under `model`.
pub fn scan_metric(
    model: &CovModel,
    obs: &ProjectedObservation,
    bgrid: &BeamspaceGrid,
    mode: GlrtMode,
) -> Result<Vec<f64>> {
    let tp = obs.tau_prime();
    Ok(scan_qr(model, obs, bgrid)?
        .into_iter()
        .map(|(q, r)| metric_from_qr(q, r, tp, mode))
        .collect())
}

/// Index and value of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((k, v)),
        }
    }
    best
}

/// Run GLRT-SCI for at most `j_max` iterations.
pub fn run_glrt_sci(
    obs: &ProjectedObservation,
    bgrid: &BeamspaceGrid,
    kappa: f64,
    j_max: usize,
    mode: GlrtMode,
) -> Result<DetectionResult> {
    if bgrid.is_empty() {
        return Err(Error::invalid("empty angle grid"));
    }
    if !(kappa >= 0.0) {
        return Err(Error::invalid(format!("threshold {kappa} must be non-negative")));
    }
    if j_max == 0 {
        return Err(Error::invalid("j_max must be at least 1"));
    }
    let tp = obs.tau_prime();
    let mut model = CovModel::noise_only(obs.rf_chains(), obs.sigma2())?;
    let mut jammers = Vec::new();
    let mut traces = Vec::new();

    for _ in 0..j_max {
        let qr = scan_qr(&model, obs, bgrid)?;
        let metric: Vec<f64> = qr.iter().map(|&(q, r)| metric_from_qr(q, r, tp, mode)).collect();
        let (best, peak) = argmax(&metric).expect("grid is non-empty");
        traces.push(metric);
        // A repeat can only follow a clamped γ̂ = 0, which left the model
        // unchanged; accepting it again would loop until j_max.
        let repeat = jammers.iter().any(|j: &DetectedJammer| j.grid_index == best);
        if !(peak >= kappa) || qr[best].0 <= 0.0 || repeat {
            return Ok(DetectionResult {
                iterations_run: traces.len(),
                jammers,
                traces,
                stopped_by: StopReason::Threshold,
            });
        }
        let (q, r) = qr[best];
        let gamma = gamma_mle(q, r, tp)?.max(0.0);
        let theta = bgrid.theta(best);
        model = model.update(theta, &bgrid.steering(best), gamma)?;
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
