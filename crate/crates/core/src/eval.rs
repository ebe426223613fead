//! Monte Carlo threshold calibration, detection matching, and P_D / RMSE
//! sweeps.
//!
//! Every trial draws from its own counter-keyed substream (see
//! [`crate::seeding`]), so results are identical whether trials run on one
//! thread or many. Within a trial all detectors see the same scenario and
//! noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airsim::{make_pilots, project, synth_received, PilotSet, ProjectedObservation};
use crate::config::{min_calibration_trials, ExperimentConfig};
use crate::detector::{first_iteration_max, run_detector, DetectorId};
use crate::error::{Error, Result};
use crate::glrt::{BeamspaceGrid, DetectionResult, GlrtMode, Grid};
use crate::model::{dft_combiner, sample_scenario, Combiner, Scenario, ScenarioParams, SpatialAngle};
use crate::seeding::{substream, substream_seed, Phase, StreamKey, SHARED};

/// Everything that stays fixed across the trials of one configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub combiner: Combiner,
    pub pilots: PilotSet,
    pub bgrid: BeamspaceGrid,
    pub mode: GlrtMode,
    pub j_max: usize,
}

impl Simulator {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let combiner = dft_combiner(cfg.array.m, cfg.array.n)?;
        let pilots = make_pilots(cfg.pilots.tau)?;
        let bgrid = BeamspaceGrid::new(Grid::uniform(cfg.detection.grid_l)?, &combiner);
        Ok(Simulator {
            combiner,
            pilots,
            bgrid,
            mode: cfg.detection.glrt_mode,
            j_max: cfg.detection.j_max,
        })
    }

    /// Sample a scenario, synthesize one training block and project it onto
    /// the unused pilots.
    pub fn observe(
        &self,
        params: &ScenarioParams,
        scenario_seed: u64,
        noise_key: (u64, StreamKey),
    ) -> Result<(Scenario, ProjectedObservation)> {
        let scn = sample_scenario(params, scenario_seed)?;
        let mut rng = substream(noise_key.0, noise_key.1);
        let block = synth_received(&scn, &self.pilots, &self.combiner, &mut rng)?;
        let obs = project(&block, &self.pilots, scn.user_power)?;
        Ok((scn, obs))
    }

    pub fn detect(&self, id: DetectorId, obs: &ProjectedObservation, kappa: f64) -> Result<DetectionResult> {
        run_detector(id, obs, &self.bgrid, kappa, self.j_max, self.mode)
    }
}

/// Empirical `q`-quantile with linear interpolation between order
/// statistics (position `q (n - 1)` in the sorted sample).
pub fn empirical_quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Fraction of null statistics strictly above `kappa`.
pub fn false_alarm_rate(stats: &[f64], kappa: f64) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    stats.iter().filter(|&&s| s > kappa).count() as f64 / stats.len() as f64
}

/// First-iteration maximum metric of each detector on `n_trials`
/// noise-only observations. Row `d` of the result belongs to
/// `detectors[d]`; each detector draws from its own substreams.
pub fn null_statistics(
    cfg: &ExperimentConfig,
    detectors: &[DetectorId],
    n_trials: usize,
    master_seed: u64,
    phase: Phase,
) -> Result<Vec<Vec<f64>>> {
    let sim = Simulator::new(cfg)?;
    let params = cfg.null_params();
    detectors
        .iter()
        .map(|&id| {
            (0..n_trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let key = StreamKey::new(phase, id.slot(), 0, trial);
                    let scn_seed = substream_seed(master_seed, key);
                    let noise = StreamKey::new(phase, id.slot(), 1, trial);
                    let (_, obs) = sim.observe(&params, scn_seed, (master_seed, noise))?;
                    first_iteration_max(id, &obs, &sim.bgrid, sim.mode)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Threshold giving false-alarm probability `p_f` under the no-jammer
/// hypothesis: the empirical `1 - p_f` quantile of the first-iteration
/// maximum metric over `n_trials` simulated null observations.
pub fn calibrate_threshold(
    detector: DetectorId,
    cfg: &ExperimentConfig,
    p_f: f64,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(p_f > 0.0 && p_f < 1.0) {
        return Err(Error::invalid(format!("false-alarm target {p_f} outside (0, 1)")));
    }
    let floor = min_calibration_trials(p_f);
    if n_trials < floor {
        return Err(Error::invalid(format!(
            "{n_trials} calibration trials is below ceil(50 / p_f) = {floor}"
        )));
    }
    let stats = null_statistics(cfg, &[detector], n_trials, seed, Phase::Calibration)?;
    Ok(empirical_quantile(&stats[0], 1.0 - p_f)?.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdEntry {
    pub detector: DetectorId,
    pub fingerprint: String,
    pub p_f: f64,
    pub kappa: f64,
    pub n_trials: usize,
    pub seed: u64,
}

/// Calibrated thresholds keyed by `(detector, config fingerprint, P_F)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTable {
    pub entries: Vec<ThresholdEntry>,
}

impl ThresholdTable {
    pub fn get(&self, detector: DetectorId, fingerprint: &str, p_f: f64) -> Option<&ThresholdEntry> {
        self.entries
            .iter()
            .find(|e| e.detector == detector && e.fingerprint == fingerprint && e.p_f == p_f)
    }

    /// Threshold for `detector` under `cfg`, or a configuration error.
    pub fn kappa_for(&self, detector: DetectorId, cfg: &ExperimentConfig) -> Result<f64> {
        let fp = cfg.fingerprint(detector);
        self.get(detector, &fp, cfg.detection.p_f)
            .map(|e| e.kappa)
            .ok_or_else(|| {
                Error::config(
                    "thresholds",
                    format!(
                        "no threshold for detector `{detector}` (fingerprint {fp}, p_f {})",
                        cfg.detection.p_f
                    ),
                )
            })
    }

    /// Insert or replace the entry with the same key; entries stay sorted.
    pub fn insert(&mut self, entry: ThresholdEntry) -> Result<()> {
        validate_entry(&entry)?;
        self.entries
            .retain(|e| !(e.detector == entry.detector && e.fingerprint == entry.fingerprint && e.p_f == entry.p_f));
        self.entries.push(entry);
        self.entries.sort_by(|a, b| {
            (a.detector, &a.fingerprint)
                .cmp(&(b.detector, &b.fingerprint))
                .then(a.p_f.total_cmp(&b.p_f))
        });
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let table: ThresholdTable =
            serde_json::from_str(text).map_err(|e| Error::format("threshold table", e.to_string()))?;
        for (i, e) in table.entries.iter().enumerate() {
            validate_entry(e)?;
            if table.entries[..i]
                .iter()
                .any(|o| o.detector == e.detector && o.fingerprint == e.fingerprint && o.p_f == e.p_f)
            {
                return Err(Error::format(
                    "threshold table",
                    format!(
                        "duplicate entry for `{}` ({}, p_f {})",
                        e.detector, e.fingerprint, e.p_f
                    ),
                ));
            }
        }
        Ok(table)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table is always serializable");
        s.push('\n');
        s
    }
}

fn validate_entry(e: &ThresholdEntry) -> Result<()> {
    if !(e.p_f > 0.0 && e.p_f < 1.0) {
        return Err(Error::format(
            "threshold table",
            format!("p_f {} outside (0, 1)", e.p_f),
        ));
    }
    if !(e.kappa >= 0.0) || !e.kappa.is_finite() {
        return Err(Error::format(
            "threshold table",
            format!("kappa {} must be non-negative", e.kappa),
        ));
    }
    let floor = min_calibration_trials(e.p_f);
    if e.n_trials < floor {
        return Err(Error::format(
            "threshold table",
            format!("n_trials {} below ceil(50 / p_f) = {floor}", e.n_trials),
        ));
    }
    Ok(())
}

/// Calibrate every detector listed in `cfg` and collect the results.
pub fn calibrate_all(cfg: &ExperimentConfig) -> Result<ThresholdTable> {
    let mut table = ThresholdTable::default();
    for &id in &cfg.detection.detectors {
        let kappa = calibrate_threshold(id, cfg, cfg.detection.p_f, cfg.run.n_calib_trials, cfg.run.seed)?;
        table.insert(ThresholdEntry {
            detector: id,
            fingerprint: cfg.fingerprint(id),
            p_f: cfg.detection.p_f,
            kappa,
            n_trials: cfg.run.n_calib_trials,
            seed: cfg.run.seed,
        })?;
    }
    Ok(table)
}

/// Result of matching one trial's detections against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub true_thetas: Vec<SpatialAngle>,
    pub detected_thetas: Vec<SpatialAngle>,
    /// `E_j` per true jammer.
    pub matches: Vec<bool>,
    /// `|θ̂̃_j - θ_j|` for matched jammers, aligned with `true_thetas`.
    pub errors: Vec<Option<f64>>,
}

/// Each true angle is paired with its nearest estimate; it counts as
/// detected when that distance is at most `2 / N`. One estimate may serve
/// several true jammers.
pub fn match_detections(detected: &[SpatialAngle], truth: &[SpatialAngle], n: usize) -> Result<TrialOutcome> {
    if n == 0 {
        return Err(Error::invalid("RF chain count must be positive"));
    }
    let tol = 2.0 / n as f64;
    let mut matches = Vec::with_capacity(truth.len());
    let mut errors = Vec::with_capacity(truth.len());
    for t in truth {
        let nearest = detected
            .iter()
            .map(|d| (d.value() - t.value()).abs())
            .fold(None, |best: Option<f64>, e| Some(best.map_or(e, |b| b.min(e))));
        match nearest {
            Some(e) if e <= tol => {
                matches.push(true);
                errors.push(Some(e));
            }
            _ => {
                matches.push(false);
                errors.push(None);
            }
        }
    }
    Ok(TrialOutcome {
        true_thetas: truth.to_vec(),
        detected_thetas: detected.to_vec(),
        matches,
        errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub p_d: f64,
    /// Absent when no jammer was matched in any trial.
    pub rmse: Option<f64>,
}

/// `P_D` = matched jammer slots / all jammer slots; RMSE over matched
/// slots only.
pub fn aggregate(trials: &[TrialOutcome]) -> Result<Aggregate> {
    if trials.is_empty() {
        return Err(Error::invalid("cannot aggregate zero trials"));
    }
    let slots: usize = trials.iter().map(|t| t.matches.len()).sum();
    if slots == 0 {
        return Err(Error::invalid("no jammer slots to aggregate over"));
    }
    let mut hits = 0usize;
    let mut sq = 0.0;
    for e in trials.iter().flat_map(|t| t.errors.iter()).flatten() {
        hits += 1;
        sq += e * e;
    }
    Ok(Aggregate {
        p_d: hits as f64 / slots as f64,
        rmse: (hits > 0).then(|| (sq / hits as f64).sqrt()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub detector: DetectorId,
    pub jnr_db: f64,
    pub p_d: f64,
    pub rmse: Option<f64>,
    pub n_trials: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, detector: DetectorId, jnr_db: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.detector == detector && r.jnr_db == jnr_db)
    }
}

/// Draw the observation for sweep trial `(jnr_index, trial)`.
pub fn sweep_trial_observation(
    sim: &Simulator,
    cfg: &ExperimentConfig,
    jnr_db: f64,
    jnr_index: u32,
    trial: u64,
    seed: u64,
) -> Result<(Scenario, ProjectedObservation)> {
    let params = cfg.scenario_params(Some(jnr_db));
    let scn_seed = substream_seed(seed, StreamKey::new(Phase::Scenario, SHARED, jnr_index, trial));
    let noise = StreamKey::new(Phase::Noise, SHARED, jnr_index, trial);
    sim.observe(&params, scn_seed, (seed, noise))
}

/// Paired P_D / RMSE sweep. Rows are ordered by detector (as listed), then
/// by JNR (as listed).
pub fn run_sweep(
    cfg: &ExperimentConfig,
    jnr_list_db: &[f64],
    detectors: &[DetectorId],
    thresholds: &ThresholdTable,
    seed: u64,
) -> Result<SweepResult> {
    if cfg.scenario.num_jammers == 0 {
        return Err(Error::config("scenario.J", "a sweep needs at least one jammer"));
    }
    let kappas = detectors
        .iter()
        .map(|&d| thresholds.kappa_for(d, cfg))
        .collect::<Result<Vec<f64>>>()?;
    let sim = Simulator::new(cfg)?;
    let n = cfg.array.n;
    let n_trials = cfg.run.n_trials;

    // outcomes[jnr][detector][trial]
    let mut outcomes = Vec::with_capacity(jnr_list_db.len());
    for (ji, &jnr) in jnr_list_db.iter().enumerate() {
        let per_trial = (0..n_trials as u64)
            .into_par_iter()
            .map(|trial| {
                let (scn, obs) = sweep_trial_observation(&sim, cfg, jnr, ji as u32, trial, seed)?;
                let truth = scn.true_thetas();
                detectors
                    .iter()
                    .zip(&kappas)
                    .map(|(&d, &kappa)| {
                        let res = sim.detect(d, &obs, kappa)?;
                        match_detections(&res.thetas(), &truth, n)
                    })
                    .collect::<Result<Vec<TrialOutcome>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        outcomes.push(per_trial);
    }

    let mut rows = Vec::with_capacity(detectors.len() * jnr_list_db.len());
    for (di, (&d, &kappa)) in detectors.iter().zip(&kappas).enumerate() {
        for (ji, &jnr) in jnr_list_db.iter().enumerate() {
            let trials: Vec<TrialOutcome> = outcomes[ji].iter().map(|t| t[di].clone()).collect();
            let agg = aggregate(&trials)?;
            rows.push(SweepRow {
                detector: d,
                jnr_db: jnr,
                p_d: agg.p_d,
                rmse: agg.rmse,
                n_trials,
                kappa,
            });
        }
    }
    Ok(SweepResult { rows })
}

/// One seeded scenario with every detector's full iteration history.
#[derive(Debug, Clone)]
pub struct TraceRun {
    pub scenario: Scenario,
    pub results: Vec<(DetectorId, DetectionResult)>,
}

pub fn run_trace(cfg: &ExperimentConfig, thresholds: &ThresholdTable, seed: u64) -> Result<TraceRun> {
    let sim = Simulator::new(cfg)?;
    let jnr = if cfg.scenario.num_jammers > 0 {
        Some(
            cfg.trace_jnr()
                .ok_or_else(|| Error::config("scenario.jnr_db", "trace needs a JNR"))?,
        )
    } else {
        None
    };
    let params = cfg.scenario_params(jnr);
    let scn_seed = substream_seed(seed, StreamKey::new(Phase::Trace, SHARED, 0, 0));
    let (scenario, obs) = sim.observe(&params, scn_seed, (seed, StreamKey::new(Phase::Trace, SHARED, 1, 0)))?;
    let results = cfg
        .detection
        .detectors
        .iter()
        .map(|&d| {
            let kappa = thresholds.kappa_for(d, cfg)?;
            Ok((d, sim.detect(d, &obs, kappa)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceRun { scenario, results })
}
