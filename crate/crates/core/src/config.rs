//! Experiment configuration: a strict JSON schema (unknown keys are errors)
//! validated on load.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::DetectorId;
use crate::error::{Error, Result};
use crate::glrt::GlrtMode;
use crate::model::{ArrayConfig, ScenarioParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    pub tau: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "J")]
    pub num_jammers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jnr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jnr_list_db: Option<Vec<f64>>,
    #[serde(default)]
    pub jsr_db: f64,
    pub f_c_hz: f64,
    pub distance_range_m: [f64; 2],
    pub path_loss_exponent: f64,
    pub shadow_std_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(rename = "grid_L")]
    pub grid_l: usize,
    pub j_max: usize,
    pub p_f: f64,
    pub detectors: Vec<DetectorId>,
    #[serde(default)]
    pub glrt_mode: GlrtMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_trials: usize,
    pub n_calib_trials: usize,
    pub out_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub array: ArrayConfig,
    pub pilots: PilotConfig,
    pub scenario: ScenarioConfig,
    pub detection: DetectionConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    /// The full-scale setting: 128 antennas, 32 RF chains, six jammers,
    /// 9 unused pilots, a 500-point grid and `P_F = 10⁻³`.
    fn default() -> Self {
        ExperimentConfig {
            array: ArrayConfig {
                m: 128,
                n: 32,
                m_prime: 4,
            },
            pilots: PilotConfig { tau: 10 },
            scenario: ScenarioConfig {
                num_jammers: 6,
                jnr_db: Some(20.0),
                jnr_list_db: Some(vec![0.0, 5.0, 10.0, 15.0, 20.0]),
                jsr_db: 0.0,
                f_c_hz: 28e9,
                distance_range_m: [1000.0, 1500.0],
                path_loss_exponent: 2.0,
                shadow_std_db: 4.0,
            },
            detection: DetectionConfig {
                grid_l: 500,
                j_max: 6,
                p_f: 1e-3,
                detectors: DetectorId::ALL.to_vec(),
                glrt_mode: GlrtMode::Literal,
            },
            run: RunConfig {
                seed: 1,
                n_trials: 500,
                n_calib_trials: 50_000,
                out_dir: "out".into(),
            },
        }
    }
}

/// Smallest calibration sample allowed for a false-alarm target `p_f`.
pub fn min_calibration_trials(p_f: f64) -> usize {
    (50.0 / p_f).ceil() as usize
}

fn ensure(cond: bool, key: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(key, reason()))
    }
}

impl ExperimentConfig {
    /// Parse and validate.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "<json>".to_string() } else { path };
            Error::config(key, e.inner().to_string())
        })?;
        de.end().map_err(|e| Error::config("<json>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config is always serializable");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.array;
        ensure(a.m >= 1, "array.M", || "must be at least 1".into())?;
        ensure(a.n >= 1, "array.N", || "must be at least 1".into())?;
        ensure(a.n <= a.m, "array.N", || format!("{} exceeds array.M = {}", a.n, a.m))?;
        ensure(a.m_prime >= 1, "array.M_prime", || "must be at least 1".into())?;
        ensure(self.pilots.tau >= 2, "pilots.tau", || {
            format!("{} leaves no unused pilot", self.pilots.tau)
        })?;

        let s = &self.scenario;
        if let Some(jnr) = s.jnr_db {
            ensure(jnr.is_finite(), "scenario.jnr_db", || "must be finite".into())?;
        }
        if let Some(list) = &s.jnr_list_db {
            ensure(!list.is_empty(), "scenario.jnr_list_db", || "must not be empty".into())?;
            ensure(list.iter().all(|v| v.is_finite()), "scenario.jnr_list_db", || {
                "values must be finite".into()
            })?;
        }
        if s.num_jammers > 0 {
            ensure(s.jnr_db.is_some() || s.jnr_list_db.is_some(), "scenario.jnr_db", || {
                "jammers present: give jnr_db or jnr_list_db".into()
            })?;
        }
        ensure(s.jsr_db.is_finite(), "scenario.jsr_db", || "must be finite".into())?;
        ensure(s.f_c_hz > 0.0 && s.f_c_hz.is_finite(), "scenario.f_c_hz", || {
            format!("{} must be positive", s.f_c_hz)
        })?;
        let [lo, hi] = s.distance_range_m;
        ensure(
            lo > 0.0 && hi >= lo && hi.is_finite(),
            "scenario.distance_range_m",
            || format!("[{lo}, {hi}] must satisfy 0 < lo <= hi"),
        )?;
        ensure(s.path_loss_exponent.is_finite(), "scenario.path_loss_exponent", || {
            "must be finite".into()
        })?;
        ensure(
            s.shadow_std_db >= 0.0 && s.shadow_std_db.is_finite(),
            "scenario.shadow_std_db",
            || "must be non-negative".into(),
        )?;

        let d = &self.detection;
        ensure(d.grid_l >= 2, "detection.grid_L", || "must be at least 2".into())?;
        ensure(d.j_max >= 1, "detection.j_max", || "must be at least 1".into())?;
        ensure(d.p_f > 0.0 && d.p_f < 1.0, "detection.p_f", || {
            format!("{} must lie strictly between 0 and 1", d.p_f)
        })?;
        ensure(!d.detectors.is_empty(), "detection.detectors", || {
            "must not be empty".into()
        })?;
        for (i, det) in d.detectors.iter().enumerate() {
            ensure(!d.detectors[..i].contains(det), "detection.detectors", || {
                format!("`{det}` listed twice")
            })?;
        }

        let r = &self.run;
        ensure(r.n_trials >= 1, "run.n_trials", || "must be at least 1".into())?;
        let floor = min_calibration_trials(d.p_f);
        ensure(r.n_calib_trials >= floor, "run.n_calib_trials", || {
            format!("{} is below ceil(50 / p_f) = {floor}", r.n_calib_trials)
        })?;
        ensure(!r.out_dir.is_empty(), "run.out_dir", || "must not be empty".into())?;
        Ok(())
    }

    /// JNR axis for sweeps.
    pub fn jnr_list(&self) -> Vec<f64> {
        match (&self.scenario.jnr_list_db, self.scenario.jnr_db) {
            (Some(list), _) => list.clone(),
            (None, Some(v)) => vec![v],
            (None, None) => Vec::new(),
        }
    }

    /// Single JNR for trace runs.
    pub fn trace_jnr(&self) -> Option<f64> {
        self.scenario
            .jnr_db
            .or_else(|| self.scenario.jnr_list_db.as_ref().and_then(|l| l.first().copied()))
    }

    /// Scenario-sampling parameters at the given JNR (`None` with no jammers).
    pub fn scenario_params(&self, jnr_db: Option<f64>) -> ScenarioParams {
        let s = &self.scenario;
        ScenarioParams {
            array: self.array,
            tau: self.pilots.tau,
            num_jammers: s.num_jammers,
            jnr_db,
            jsr_db: s.jsr_db,
            carrier_hz: s.f_c_hz,
            distance_range_m: (s.distance_range_m[0], s.distance_range_m[1]),
            path_loss_exponent: s.path_loss_exponent,
            shadow_std_db: s.shadow_std_db,
        }
    }

    /// Parameters under which the no-jammer hypothesis is simulated.
    pub fn null_params(&self) -> ScenarioParams {
        ScenarioParams {
            num_jammers: 0,
            ..self.scenario_params(None)
        }
    }

    /// Hash of everything the null-hypothesis statistic of `detector`
    /// depends on. Thresholds are stored and looked up under this key.
    pub fn fingerprint(&self, detector: DetectorId) -> String {
        let mode = match detector {
            DetectorId::GlrtSci => match self.detection.glrt_mode {
                GlrtMode::Literal => "literal",
                GlrtMode::OneSided => "one_sided",
            },
            _ => "-",
        };
        let canon = format!(
            "beamjam-h0/v1;M={};N={};tau={};L={};mode={}",
            self.array.m, self.array.n, self.pilots.tau, self.detection.grid_l, mode
        );
        let digest = Sha256::digest(canon.as_bytes());
        hex::encode(&digest[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_json_string();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.to_json_string(), text);
    }

    #[test]
    fn schema_uses_documented_key_names() {
        let v: serde_json::Value = serde_json::from_str(&ExperimentConfig::default().to_json_string()).unwrap();
        assert_eq!(v["array"]["M"], 128);
        assert_eq!(v["array"]["M_prime"], 4);
        assert_eq!(v["scenario"]["J"], 6);
        assert_eq!(v["detection"]["grid_L"], 500);
        assert_eq!(v["detection"]["glrt_mode"], "literal");
        assert_eq!(v["detection"]["detectors"][2], "msd-icm");
    }

    fn with_edit(edit: impl FnOnce(&mut serde_json::Value)) -> Result<ExperimentConfig> {
        let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::default().to_json_string()).unwrap();
        edit(&mut v);
        ExperimentConfig::from_json_str(&v.to_string())
    }

    fn key_of(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_values_naming_the_key() {
        assert_eq!(
            key_of(with_edit(|v| v["detection"]["p_f"] = 0.0.into())),
            "detection.p_f"
        );
        assert_eq!(
            key_of(with_edit(|v| v["detection"]["p_f"] = 1.0.into())),
            "detection.p_f"
        );
        assert_eq!(key_of(with_edit(|v| v["array"]["N"] = 256.into())), "array.N");
        assert_eq!(key_of(with_edit(|v| v["pilots"]["tau"] = 1.into())), "pilots.tau");
        assert_eq!(
            key_of(with_edit(|v| v["detection"]["grid_L"] = 1.into())),
            "detection.grid_L"
        );
        assert_eq!(
            key_of(with_edit(|v| v["detection"]["j_max"] = 0.into())),
            "detection.j_max"
        );
        assert_eq!(
            key_of(with_edit(|v| v["run"]["n_calib_trials"] = 100.into())),
            "run.n_calib_trials"
        );
        assert_eq!(
            key_of(with_edit(
                |v| v["scenario"]["distance_range_m"] = serde_json::json!([10.0, 5.0])
            )),
            "scenario.distance_range_m"
        );
        assert_eq!(
            key_of(with_edit(
                |v| v["detection"]["detectors"] = serde_json::json!(["msd-is", "msd-is"])
            )),
            "detection.detectors"
        );
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        let err = with_edit(|v| v["array"]["K"] = 3.into()).unwrap_err();
        assert!(err.to_string().contains("unknown field `K`"), "{err}");
        let err = with_edit(|v| {
            v["run"].as_object_mut().unwrap().remove("seed");
        })
        .unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let err = with_edit(|v| v["detection"]["glrt_mode"] = "two_sided".into()).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn jammers_need_a_jnr() {
        let r = with_edit(|v| {
            let s = v["scenario"].as_object_mut().unwrap();
            s.remove("jnr_db");
            s.remove("jnr_list_db");
        });
        assert_eq!(key_of(r), "scenario.jnr_db");
    }

    #[test]
    fn fingerprint_tracks_null_relevant_parameters() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.scenario.num_jammers = 3;
        b.run.seed = 99;
        assert_eq!(a.fingerprint(DetectorId::GlrtSci), b.fingerprint(DetectorId::GlrtSci));
        b.detection.grid_l = 200;
        assert_ne!(a.fingerprint(DetectorId::GlrtSci), b.fingerprint(DetectorId::GlrtSci));
        let mut c = a.clone();
        c.detection.glrt_mode = GlrtMode::OneSided;
        assert_ne!(a.fingerprint(DetectorId::GlrtSci), c.fingerprint(DetectorId::GlrtSci));
        assert_eq!(a.fingerprint(DetectorId::MsdIs), c.fingerprint(DetectorId::MsdIs));
    }

    #[test]
    fn jnr_accessors() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.trace_jnr(), Some(20.0));
        assert_eq!(cfg.jnr_list().len(), 5);
        cfg.scenario.jnr_list_db = None;
        assert_eq!(cfg.jnr_list(), vec![20.0]);
        cfg.scenario.jnr_db = None;
        cfg.scenario.jnr_list_db = Some(vec![7.0, 9.0]);
        assert_eq!(cfg.trace_jnr(), Some(7.0));
    }
}
