//! Uniform entry point over the three detectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::airsim::ProjectedObservation;
use crate::error::{Error, Result};
use crate::glrt::{self, BeamspaceGrid, CovModel, DetectionResult, GlrtMode};
use crate::msd::{self, MsdVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorId {
    #[serde(rename = "glrt-sci")]
    GlrtSci,
    #[serde(rename = "msd-is")]
    MsdIs,
    #[serde(rename = "msd-icm")]
    MsdIcm,
}

impl DetectorId {
    pub const ALL: [DetectorId; 3] = [DetectorId::GlrtSci, DetectorId::MsdIs, DetectorId::MsdIcm];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::GlrtSci => "glrt-sci",
            DetectorId::MsdIs => "msd-is",
            DetectorId::MsdIcm => "msd-icm",
        }
    }

    /// Small stable integer, used to key random substreams.
    pub fn slot(self) -> u32 {
        self as u32
    }

    fn msd_variant(self) -> Option<MsdVariant> {
        match self {
            DetectorId::GlrtSci => None,
            DetectorId::MsdIs => Some(MsdVariant::Is),
            DetectorId::MsdIcm => Some(MsdVariant::Icm),
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DetectorId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown detector `{s}`")))
    }
}

/// Metric over the grid at the first iteration (nothing detected yet).
pub fn first_iteration_trace(
    id: DetectorId,
    obs: &ProjectedObservation,
    bgrid: &BeamspaceGrid,
    mode: GlrtMode,
) -> Result<Vec<f64>> {
    match id.msd_variant() {
        None => {
            let model = CovModel::noise_only(obs.rf_chains(), obs.sigma2())?;
            glrt::scan_metric(&model, obs, bgrid, mode)
        }
        Some(variant) => {
            let xi = msd::MsdState::new(variant, obs.sigma2()).projection(obs.rf_chains())?;
            msd::scan_metric(&xi, obs, bgrid)
        }
    }
}

/// Maximum of [`first_iteration_trace`]; the statistic thresholds are
/// calibrated on.
pub fn first_iteration_max(
    id: DetectorId,
    obs: &ProjectedObservation,
    bgrid: &BeamspaceGrid,
    mode: GlrtMode,
) -> Result<f64> {
    Ok(first_iteration_trace(id, obs, bgrid, mode)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn run_detector(
    id: DetectorId,
    obs: &ProjectedObservation,
    bgrid: &BeamspaceGrid,
    kappa: f64,
    j_max: usize,
    mode: GlrtMode,
) -> Result<DetectionResult> {
    match id.msd_variant() {
        None => glrt::run_glrt_sci(obs, bgrid, kappa, j_max, mode),
        Some(variant) => msd::run_msd(obs, bgrid, kappa, j_max, variant),
    }
}
