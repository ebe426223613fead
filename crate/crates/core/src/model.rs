//! Array geometry, DFT beamspace combiner, line-of-sight channels and
//! randomized scenario sampling.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Spatial angle `θ = sin φ` of a physical angle `φ`, always in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SpatialAngle(f64);

impl SpatialAngle {
    pub fn new(value: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!("spatial angle {value} outside [-1, 1]")));
        }
        Ok(SpatialAngle(value))
    }

    /// `sin(physical)`, clamped against rounding just outside `[-1, 1]`.
    pub fn from_physical(physical_rad: f64) -> Self {
        SpatialAngle(physical_rad.sin().clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SpatialAngle {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        SpatialAngle::new(value)
    }
}

impl From<SpatialAngle> for f64 {
    fn from(a: SpatialAngle) -> f64 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    /// BS antennas.
    #[serde(rename = "M")]
    pub m: usize,
    /// RF chains.
    #[serde(rename = "N")]
    pub n: usize,
    /// Antennas per jammer.
    #[serde(rename = "M_prime")]
    pub m_prime: usize,
}

impl ArrayConfig {
    pub fn new(m: usize, n: usize, m_prime: usize) -> Result<Self> {
        let cfg = ArrayConfig { m, n, m_prime };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.m_prime == 0 {
            return Err(Error::invalid("array counts must be at least 1"));
        }
        if self.n > self.m {
            return Err(Error::invalid(format!(
                "N = {} RF chains exceeds M = {} antennas",
                self.n, self.m
            )));
        }
        Ok(())
    }
}

/// Half-wavelength ULA response: element `m` is `e^{-jπ m θ} / √M`.
pub fn ula_response(theta: SpatialAngle, m: usize) -> Result<CVec> {
    if m == 0 {
        return Err(Error::invalid("array response needs at least one antenna"));
    }
    let scale = 1.0 / (m as f64).sqrt();
    Ok(CVec::from_fn(m, |k, _| {
        Complex64::from_polar(scale, -PI * k as f64 * theta.value())
    }))
}

/// Analog combiner `W` (M×N); column `n` is the ULA response at the beam
/// centre `θ̄_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Combiner {
    matrix: CMat,
    centres: Vec<f64>,
}

impl Combiner {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Beam centres `θ̄_1..θ̄_N`.
    pub fn centres(&self) -> &[f64] {
        &self.centres
    }

    pub fn antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rf_chains(&self) -> usize {
        self.matrix.ncols()
    }
}

/// DFT beamspace combiner with beam centres `θ̄_n = -1 + (n-1)·2/N`.
pub fn dft_combiner(m: usize, n: usize) -> Result<Combiner> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("combiner dimensions must be positive"));
    }
    if n > m {
        return Err(Error::invalid(format!("N = {n} exceeds M = {m}")));
    }
    let centres: Vec<f64> = (0..n).map(|k| -1.0 + k as f64 * 2.0 / n as f64).collect();
    let mut matrix = CMat::zeros(m, n);
    for (col, &c) in centres.iter().enumerate() {
        // Centres lie in [-1, 1) by construction.
        let a = ula_response(SpatialAngle(c), m)?;
        matrix.set_column(col, &a);
    }
    Ok(Combiner { matrix, centres })
}

/// Beamspace steering vector `Ψ(θ) = W^H a(θ)`.
pub fn beamspace_steering(theta: SpatialAngle, w: &Combiner) -> CVec {
    let a = ula_response(theta, w.antennas()).expect("combiner has at least one antenna");
    w.matrix.ad_mul(&a)
}

/// Link gain in dB: `-20 lg(4π f_c / c) - 10 ϑ lg(d) - A_ζ` with `c` the
/// speed of light.
pub fn path_loss_db(d_m: f64, f_c: f64, exponent: f64, shadow_db: f64) -> Result<f64> {
    path_loss_db_with_c(d_m, f_c, exponent, shadow_db, SPEED_OF_LIGHT)
}

/// [`path_loss_db`] with an explicit propagation speed.
pub fn path_loss_db_with_c(d_m: f64, f_c: f64, exponent: f64, shadow_db: f64, c: f64) -> Result<f64> {
    if !(d_m > 0.0) || !(f_c > 0.0) || !(c > 0.0) {
        return Err(Error::invalid(format!(
            "path loss needs positive distance, frequency and speed (d = {d_m}, f_c = {f_c}, c = {c})"
        )));
    }
    Ok(-20.0 * (4.0 * PI * f_c / c).log10() - 10.0 * exponent * d_m.log10() - shadow_db)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Ground truth for one jammer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JammerTruth {
    /// Angle of arrival at the BS.
    pub theta: SpatialAngle,
    /// Departure angle at the jammer.
    pub phi: SpatialAngle,
    pub distance_m: f64,
    /// Pilot power `Q_j`, linear.
    pub power: f64,
    /// Link power gain `β_j`, linear.
    pub beta: f64,
    /// Effective amplitude `β̄_j` after beam alignment.
    pub beta_bar: Complex64,
}

impl JammerTruth {
    /// Average jamming-to-signal ratio `γ_j = Q_j |β̄_j|² / P`.
    pub fn jsr(&self, user_power: f64) -> f64 {
        self.power * self.beta_bar.norm_sqr() / user_power
    }
}

/// Complete ground truth of one simulated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub jammers: Vec<JammerTruth>,
    pub user_theta: SpatialAngle,
    /// User pilot power `P`, linear.
    pub user_power: f64,
    /// User channel amplitude `β`.
    pub user_beta: Complex64,
    /// Pilot length `τ`.
    pub tau: usize,
    /// Projected noise variance, exactly `1 / (P τ)`.
    pub sigma2: f64,
    pub array: ArrayConfig,
    pub carrier_hz: f64,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn true_thetas(&self) -> Vec<SpatialAngle> {
        self.jammers.iter().map(|j| j.theta).collect()
    }
}

/// Parameters controlling [`sample_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub array: ArrayConfig,
    pub tau: usize,
    pub num_jammers: usize,
    /// JNR of the weakest-link jammer; required iff there are jammers.
    pub jnr_db: Option<f64>,
    /// `Q_o / P` in dB.
    pub jsr_db: f64,
    pub carrier_hz: f64,
    pub distance_range_m: (f64, f64),
    pub path_loss_exponent: f64,
    pub shadow_std_db: f64,
}

struct LinkDraw {
    theta: SpatialAngle,
    distance_m: f64,
    beta: f64,
}

fn draw_link<R: Rng>(rng: &mut R, p: &ScenarioParams, shadow: &Normal<f64>) -> Result<LinkDraw> {
    let physical = rng.random_range(-PI / 2.0..=PI / 2.0);
    let (lo, hi) = p.distance_range_m;
    let distance_m = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let shadow_db = shadow.sample(rng);
    let beta_db = path_loss_db(distance_m, p.carrier_hz, p.path_loss_exponent, shadow_db)?;
    Ok(LinkDraw {
        theta: SpatialAngle::from_physical(physical),
        distance_m,
        beta: db_to_linear(beta_db),
    })
}

/// Draw a scenario. A pure function of `(params, seed)`.
///
/// The weakest-link jammer `o` gets `Q_o = JNR / β_o`; every jammer uses the
/// same power and the user transmits at `P = Q_o / JSR`. Each jammer steers a
/// unit-norm matched beam `u_j = a_J(φ_j)` at the BS.
pub fn sample_scenario(params: &ScenarioParams, seed: u64) -> Result<Scenario> {
    params.array.validate()?;
    if params.tau < 2 {
        return Err(Error::invalid("pilot length must be at least 2"));
    }
    let (lo, hi) = params.distance_range_m;
    if !(lo > 0.0) || hi < lo {
        return Err(Error::invalid(format!("bad distance range [{lo}, {hi}]")));
    }
    if !(params.shadow_std_db >= 0.0) {
        return Err(Error::invalid("shadow fading std must be non-negative"));
    }
    match (params.num_jammers, params.jnr_db) {
        (0, Some(_)) => {
            return Err(Error::invalid("a JNR target needs at least one jammer"));
        }
        (j, None) if j > 0 => {
            return Err(Error::invalid("jammers present but no JNR target given"));
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shadow = Normal::new(0.0, params.shadow_std_db).map_err(|e| Error::invalid(format!("shadow fading: {e}")))?;

    let user = draw_link(&mut rng, params, &shadow)?;
    let mut links = Vec::with_capacity(params.num_jammers);
    let mut departures = Vec::with_capacity(params.num_jammers);
    for _ in 0..params.num_jammers {
        links.push(draw_link(&mut rng, params, &shadow)?);
        departures.push(SpatialAngle::from_physical(rng.random_range(-PI / 2.0..=PI / 2.0)));
    }

    let jammer_power = match params.jnr_db {
        Some(jnr_db) => {
            let beta_o = links.iter().map(|l| l.beta).fold(f64::INFINITY, f64::min);
            db_to_linear(jnr_db) / beta_o
        }
        None => 1.0,
    };
    let user_power = jammer_power / db_to_linear(params.jsr_db);

    let jammers = links
        .into_iter()
        .zip(departures)
        .map(|(link, phi)| {
            let a_j = ula_response(phi, params.array.m_prime)?;
            let beam = a_j.clone();
            let gain = a_j.dotc(&beam);
            Ok(JammerTruth {
                theta: link.theta,
                phi,
                distance_m: link.distance_m,
                power: jammer_power,
                beta: link.beta,
                beta_bar: gain * link.beta.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Scenario {
        jammers,
        user_theta: user.theta,
        user_power,
        user_beta: Complex64::new(user.beta.sqrt(), 0.0),
        tau: params.tau,
        sigma2: 1.0 / (user_power * params.tau as f64),
        array: params.array,
        carrier_hz: params.carrier_hz,
        rng_seed: seed,
    })
}
