//! Uplink training-phase synthesis and pilot-space projection.
//!
//! The BS correlates the received block with each unused pilot. Orthogonality
//! removes the user's contribution exactly, leaving jamming plus white noise
//! of variance `σ² = 1 / (P τ)` per entry.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_normal, CMat, CVec};
use crate::model::{beamspace_steering, Combiner, Scenario};

/// Orthogonal pilot family; column `i` is pilot `i + 1`, column 0 belongs to
/// the user. Every pilot has squared norm `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    pilots: CMat,
}

impl PilotSet {
    pub fn tau(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn matrix(&self) -> &CMat {
        &self.pilots
    }

    /// Number of unused pilots `τ' = τ - 1`.
    pub fn tau_prime(&self) -> usize {
        self.tau() - 1
    }
}

/// Scaled DFT pilots: `φ_i[k] = e^{-j2π (i-1) k / τ}`.
pub fn make_pilots(tau: usize) -> Result<PilotSet> {
    if tau < 2 {
        return Err(Error::invalid(format!("pilot length {tau} leaves no unused pilot")));
    }
    let pilots = CMat::from_fn(tau, tau, |k, i| {
        Complex64::from_polar(1.0, -2.0 * PI * ((i * k) % tau) as f64 / tau as f64)
    });
    Ok(PilotSet { pilots })
}

/// Post-combiner received block `Y` (N×τ).
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBlock {
    pub y: CMat,
}

/// Which terms of the received signal to synthesize. Everything is on by
/// default; switching terms off is for diagnostics and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Components {
    pub user: bool,
    pub jamming: bool,
    pub noise: bool,
}

impl Default for Components {
    fn default() -> Self {
        Components {
            user: true,
            jamming: true,
            noise: true,
        }
    }
}

/// Synthesize `Y = √P W^H h φ_1^T + Σ_j √Q_j W^H H_j u_j ψ_j^T + W^H N`.
pub fn synth_received<R: Rng + ?Sized>(
    scn: &Scenario,
    pilots: &PilotSet,
    w: &Combiner,
    rng: &mut R,
) -> Result<ReceivedBlock> {
    synth_received_with(scn, pilots, w, rng, Components::default())
}

pub fn synth_received_with<R: Rng + ?Sized>(
    scn: &Scenario,
    pilots: &PilotSet,
    w: &Combiner,
    rng: &mut R,
    parts: Components,
) -> Result<ReceivedBlock> {
    if w.antennas() != scn.array.m {
        return Err(Error::DimensionMismatch {
            what: "combiner antennas",
            expected: scn.array.m,
            got: w.antennas(),
        });
    }
    if w.rf_chains() != scn.array.n {
        return Err(Error::DimensionMismatch {
            what: "combiner RF chains",
            expected: scn.array.n,
            got: w.rf_chains(),
        });
    }
    if pilots.tau() != scn.tau {
        return Err(Error::DimensionMismatch {
            what: "pilot length",
            expected: scn.tau,
            got: pilots.tau(),
        });
    }
    let tau = scn.tau;
    let mut y = CMat::zeros(scn.array.n, tau);

    if parts.user {
        let user = beamspace_steering(scn.user_theta, w) * (scn.user_beta * scn.user_power.sqrt());
        y += &user * pilots.matrix().column(0).transpose();
    }

    // ψ_j are drawn even when jamming is off so the noise stream does not
    // depend on which components are enabled.
    for jammer in &scn.jammers {
        let psi = CVec::from_fn(tau, |_, _| complex_normal(rng, 1.0));
        if parts.jamming {
            let column = beamspace_steering(jammer.theta, w) * (jammer.beta_bar * jammer.power.sqrt());
            y += &column * psi.transpose();
        }
    }

    let noise = CMat::from_fn(scn.array.m, tau, |_, _| complex_normal(rng, 1.0));
    if parts.noise {
        y += w.matrix().ad_mul(&noise);
    }
    Ok(ReceivedBlock { y })
}

/// Projections `y_i` onto the unused pilots `i = 2..τ`, stored as the
/// columns of an N×τ' matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedObservation {
    y: CMat,
    sigma2: f64,
}

impl ProjectedObservation {
    pub fn new(y_list: Vec<CVec>, sigma2: f64) -> Result<Self> {
        let n = y_list
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::invalid("observation needs at least one projected vector"))?;
        if let Some(bad) = y_list.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "projected vector length",
                expected: n,
                got: bad.len(),
            });
        }
        Self::from_matrix(CMat::from_columns(&y_list), sigma2)
    }

    /// Build from an N×τ' matrix whose columns are the `y_i`.
    pub fn from_matrix(y: CMat, sigma2: f64) -> Result<Self> {
        if y.ncols() == 0 || y.nrows() == 0 {
            return Err(Error::invalid("empty observation"));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!("noise variance {sigma2} must be positive")));
        }
        Ok(ProjectedObservation { y, sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn tau_prime(&self) -> usize {
        self.y.ncols()
    }

    pub fn rf_chains(&self) -> usize {
        self.y.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.y
    }

    /// `y_i` for the `k`-th unused pilot (`k = 0` is pilot index 2).
    pub fn y(&self, k: usize) -> CVec {
        self.y.column(k).into_owned()
    }

    pub fn y_list(&self) -> Vec<CVec> {
        (0..self.tau_prime()).map(|k| self.y(k)).collect()
    }

    /// Stacked vector `y = [y_2^T, …, y_τ^T]^T ∈ C^{τ'N}`.
    pub fn stacked(&self) -> CVec {
        CVec::from_iterator(self.y.len(), self.y.iter().copied())
    }

    /// Copy with every entry divided by `σ`, so the noise has unit variance.
    pub fn whitened(&self) -> ProjectedObservation {
        ProjectedObservation {
            y: &self.y / Complex64::new(self.sigma2.sqrt(), 0.0),
            sigma2: 1.0,
        }
    }
}

fn check_projection_inputs(block: &ReceivedBlock, pilots: &PilotSet, p: f64) -> Result<()> {
    if !(p > 0.0) {
        return Err(Error::invalid(format!("user power {p} must be positive")));
    }
    if block.y.ncols() != pilots.tau() {
        return Err(Error::DimensionMismatch {
            what: "received block columns",
            expected: pilots.tau(),
            got: block.y.ncols(),
        });
    }
    Ok(())
}

/// `y_i = Y φ_i^* / (√P τ)` for every unused pilot.
pub fn project(block: &ReceivedBlock, pilots: &PilotSet, p: f64) -> Result<ProjectedObservation> {
    check_projection_inputs(block, pilots, p)?;
    let tau = pilots.tau() as f64;
    let unused = pilots.matrix().columns(1, pilots.tau_prime()).map(|z| z.conj());
    let y = (&block.y * unused) / Complex64::new(p.sqrt() * tau, 0.0);
    ProjectedObservation::from_matrix(y, 1.0 / (p * tau))
}

/// Diagnostic projection onto a single pilot, including the user's pilot
/// (`index = 1`). Detectors never see this.
pub fn project_pilot(block: &ReceivedBlock, pilots: &PilotSet, p: f64, index: usize) -> Result<CVec> {
    check_projection_inputs(block, pilots, p)?;
    if index == 0 || index > pilots.tau() {
        return Err(Error::invalid(format!(
            "pilot index {index} outside 1..={}",
            pilots.tau()
        )));
    }
    let phi = pilots.matrix().column(index - 1).map(|z| z.conj());
    Ok((&block.y * phi) / Complex64::new(p.sqrt() * pilots.tau() as f64, 0.0))
}
