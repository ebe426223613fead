//! On-disk formats: trace, truth and sweep CSVs, and the trial record used
//! to replay a single projected observation.
//!
//! CSV floats use the shortest representation that round-trips, and row
//! order is fixed, so identical runs produce identical bytes. An absent
//! RMSE is an empty field.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::airsim::ProjectedObservation;
use crate::detector::DetectorId;
use crate::error::{Error, Result};
use crate::eval::{SweepResult, SweepRow, TraceRun};
use crate::linalg::CMat;
use crate::model::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub detector: DetectorId,
    /// 1-based.
    pub iteration: usize,
    pub grid_index: usize,
    pub theta: f64,
    pub metric: f64,
    pub is_estimate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub jammer_index: usize,
    pub theta_true: f64,
}

fn write_rows<T: Serialize>(rows: &[T], what: &'static str) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(what, e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(what, e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::format(what, e.to_string()))
}

fn read_rows<T: for<'de> Deserialize<'de>>(text: &str, what: &'static str, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let got = r.headers().map_err(|e| Error::format(what, e.to_string()))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::format(what, format!("header must be `{}`", header.join(","))));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::format(what, format!("row {}: {e}", i + 1))))
        .collect()
}

pub const TRACE_HEADER: [&str; 6] = ["detector", "iteration", "grid_index", "theta", "metric", "is_estimate"];
pub const TRUTH_HEADER: [&str; 2] = ["jammer_index", "theta_true"];
pub const SWEEP_HEADER: [&str; 6] = ["detector", "jnr_db", "p_d", "rmse", "n_trials", "kappa"];

/// Flatten a trace run into rows ordered by (detector, iteration,
/// grid_index).
pub fn trace_rows(run: &TraceRun, grid: &[f64]) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for (det, res) in &run.results {
        for (it, trace) in res.traces.iter().enumerate() {
            let estimate = res.jammers.get(it).map(|j| j.grid_index);
            for (k, &metric) in trace.iter().enumerate() {
                rows.push(TraceRow {
                    detector: *det,
                    iteration: it + 1,
                    grid_index: k,
                    theta: grid[k],
                    metric,
                    is_estimate: estimate == Some(k),
                });
            }
        }
    }
    rows
}

pub fn truth_rows(scn: &Scenario) -> Vec<TruthRow> {
    scn.jammers
        .iter()
        .enumerate()
        .map(|(j, t)| TruthRow {
            jammer_index: j,
            theta_true: t.theta.value(),
        })
        .collect()
}

pub fn write_trace_csv(rows: &[TraceRow]) -> Result<String> {
    write_rows(rows, "trace CSV").map(|s| with_header(s, &TRACE_HEADER))
}

pub fn write_truth_csv(rows: &[TruthRow]) -> Result<String> {
    write_rows(rows, "truth CSV").map(|s| with_header(s, &TRUTH_HEADER))
}

pub fn write_sweep_csv(result: &SweepResult) -> Result<String> {
    write_rows(&result.rows, "sweep CSV").map(|s| with_header(s, &SWEEP_HEADER))
}

// The csv writer only emits a header when at least one row is serialized.
fn with_header(body: String, header: &[&str]) -> String {
    if body.is_empty() {
        format!("{}\n", header.join(","))
    } else {
        body
    }
}

fn row_error(what: &'static str, i: usize, reason: String) -> Error {
    Error::format(what, format!("row {}: {reason}", i + 1))
}

fn is_angle(v: f64) -> bool {
    (-1.0..=1.0).contains(&v)
}

/// Parse a trace CSV, rejecting angles outside `[-1, 1]`, negative or
/// non-finite metrics and iteration 0.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let rows: Vec<TraceRow> = read_rows(text, "trace CSV", &TRACE_HEADER)?;
    for (i, r) in rows.iter().enumerate() {
        if r.iteration == 0 {
            return Err(row_error("trace CSV", i, "iterations count from 1".into()));
        }
        if !is_angle(r.theta) {
            return Err(row_error("trace CSV", i, format!("theta {} outside [-1, 1]", r.theta)));
        }
        if !(r.metric >= 0.0 && r.metric.is_finite()) {
            return Err(row_error("trace CSV", i, format!("bad metric {}", r.metric)));
        }
    }
    Ok(rows)
}

pub fn parse_truth_csv(text: &str) -> Result<Vec<TruthRow>> {
    let rows: Vec<TruthRow> = read_rows(text, "truth CSV", &TRUTH_HEADER)?;
    for (i, r) in rows.iter().enumerate() {
        if !is_angle(r.theta_true) {
            return Err(row_error(
                "truth CSV",
                i,
                format!("theta_true {} outside [-1, 1]", r.theta_true),
            ));
        }
    }
    Ok(rows)
}

/// Parse a sweep CSV, rejecting `p_d` outside `[0, 1]`, negative RMSE or
/// threshold and non-finite numbers.
pub fn parse_sweep_csv(text: &str) -> Result<SweepResult> {
    let rows: Vec<SweepRow> = read_rows(text, "sweep CSV", &SWEEP_HEADER)?;
    for (i, r) in rows.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.p_d) {
            return Err(row_error("sweep CSV", i, format!("p_d {} outside [0, 1]", r.p_d)));
        }
        if let Some(rmse) = r.rmse {
            if !(rmse >= 0.0 && rmse.is_finite()) {
                return Err(row_error("sweep CSV", i, format!("bad rmse {rmse}")));
            }
        }
        if !r.jnr_db.is_finite() {
            return Err(row_error("sweep CSV", i, "jnr_db must be finite".into()));
        }
        if !(r.kappa >= 0.0 && r.kappa.is_finite()) {
            return Err(row_error("sweep CSV", i, format!("bad kappa {}", r.kappa)));
        }
    }
    Ok(SweepResult { rows })
}

/// Binary trial record magic.
pub const TRIAL_MAGIC: &[u8; 4] = b"BJTR";
pub const TRIAL_VERSION: u8 = 1;
const TRIAL_HEADER_LEN: usize = 4 + 1 + 3 + 4 + 4 + 8;
/// Upper bound on `N · τ'` accepted by the decoders.
pub const MAX_TRIAL_ENTRIES: usize = 1 << 24;

/// Binary layout (little endian):
///
/// ```text
/// "BJTR" | version u8 = 1 | 3 zero bytes | N u32 | τ' u32 | σ² f64 |
/// τ'·N × (re f64, im f64), y_2 first, entries of each y_i in order
/// ```
pub fn encode_trial_binary(obs: &ProjectedObservation) -> Vec<u8> {
    let y = obs.matrix();
    let mut out = Vec::with_capacity(TRIAL_HEADER_LEN + 16 * y.len());
    out.extend_from_slice(TRIAL_MAGIC);
    out.push(TRIAL_VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(y.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(y.ncols() as u32).to_le_bytes());
    out.extend_from_slice(&obs.sigma2().to_le_bytes());
    // nalgebra storage is column-major: y_2 first.
    for z in y.iter() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("trial record", reason)
}

fn read_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

fn read_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8 bytes"))
}

fn checked_dims(n: usize, tau_prime: usize) -> Result<usize> {
    if n == 0 || tau_prime == 0 {
        return Err(bad("dimensions must be positive"));
    }
    n.checked_mul(tau_prime)
        .filter(|&e| e <= MAX_TRIAL_ENTRIES)
        .ok_or_else(|| bad(format!("{n} x {tau_prime} entries exceeds the size limit")))
}

pub fn decode_trial_binary(bytes: &[u8]) -> Result<ProjectedObservation> {
    if bytes.len() < TRIAL_HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != TRIAL_MAGIC {
        return Err(bad("bad magic"));
    }
    if bytes[4] != TRIAL_VERSION {
        return Err(bad(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(bad("reserved bytes must be zero"));
    }
    let n = read_u32(&bytes[8..12]) as usize;
    let tau_prime = read_u32(&bytes[12..16]) as usize;
    let sigma2 = read_f64(&bytes[16..24]);
    let entries = checked_dims(n, tau_prime)?;
    let body = &bytes[TRIAL_HEADER_LEN..];
    if body.len() != entries * 16 {
        return Err(bad(format!(
            "expected {} payload bytes, found {}",
            entries * 16,
            body.len()
        )));
    }
    let values: Vec<Complex64> = body
        .chunks_exact(16)
        .map(|c| Complex64::new(read_f64(&c[..8]), read_f64(&c[8..])))
        .collect();
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(bad("non-finite sample"));
    }
    ProjectedObservation::from_matrix(CMat::from_vec(n, tau_prime, values), sigma2).map_err(|e| bad(e.to_string()))
}

pub const TRIAL_JSON_FORMAT: &str = "beamjam-trial/v1";

/// JSON trial record: the observation plus, optionally, the scenario that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecordJson {
    pub format: String,
    pub sigma2: f64,
    /// `y[k]` is the projection onto unused pilot `k + 2`, as `[re, im]`
    /// pairs.
    pub y: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
}

pub fn encode_trial_json(obs: &ProjectedObservation, scenario: Option<&Scenario>) -> String {
    let rec = TrialRecordJson {
        format: TRIAL_JSON_FORMAT.into(),
        sigma2: obs.sigma2(),
        y: obs
            .y_list()
            .iter()
            .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
            .collect(),
        scenario: scenario.cloned(),
    };
    let mut s = serde_json::to_string_pretty(&rec).expect("trial record is always serializable");
    s.push('\n');
    s
}

pub fn decode_trial_json(text: &str) -> Result<(ProjectedObservation, Option<Scenario>)> {
    let rec: TrialRecordJson = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if rec.format != TRIAL_JSON_FORMAT {
        return Err(bad(format!("unknown format tag `{}`", rec.format)));
    }
    let tau_prime = rec.y.len();
    let n = rec.y.first().map_or(0, |v| v.len());
    checked_dims(n, tau_prime)?;
    if rec.y.iter().any(|v| v.len() != n) {
        return Err(bad("projected vectors differ in length"));
    }
    let values: Vec<Complex64> = rec
        .y
        .iter()
        .flatten()
        .map(|[re, im]| Complex64::new(*re, *im))
        .collect();
    let obs = ProjectedObservation::from_matrix(CMat::from_vec(n, tau_prime, values), rec.sigma2)
        .map_err(|e| bad(e.to_string()))?;
    Ok((obs, rec.scenario))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CVec;
    use proptest::prelude::*;

    fn sample_obs() -> ProjectedObservation {
        let y = (0..3)
            .map(|i| CVec::from_fn(4, |k, _| Complex64::new(i as f64 + 0.5, -(k as f64) * 1e-7)))
            .collect();
        ProjectedObservation::new(y, 0.125).unwrap()
    }

    #[test]
    fn sweep_csv_absent_rmse_is_empty() {
        let res = SweepResult {
            rows: vec![
                SweepRow {
                    detector: DetectorId::GlrtSci,
                    jnr_db: 0.0,
                    p_d: 0.0,
                    rmse: None,
                    n_trials: 10,
                    kappa: 3.25,
                },
                SweepRow {
                    detector: DetectorId::MsdIcm,
                    jnr_db: 15.0,
                    p_d: 0.5,
                    rmse: Some(0.01),
                    n_trials: 10,
                    kappa: 2.0,
                },
            ],
        };
        let text = write_sweep_csv(&res).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "detector,jnr_db,p_d,rmse,n_trials,kappa");
        assert_eq!(lines[1], "glrt-sci,0.0,0.0,,10,3.25");
        assert_eq!(lines[2], "msd-icm,15.0,0.5,0.01,10,2.0");
        assert_eq!(parse_sweep_csv(&text).unwrap(), res);
    }

    #[test]
    fn sweep_csv_rejects_bad_probability() {
        let text = "detector,jnr_db,p_d,rmse,n_trials,kappa\nmsd-is,0.0,1.5,,10,1.0\n";
        assert!(parse_sweep_csv(text).is_err());
        let text = "detector,jnr_db,p_d,rmse,n_trials,kappa\nbogus,0.0,0.5,,10,1.0\n";
        assert!(parse_sweep_csv(text).is_err());
        assert!(parse_sweep_csv("a,b\n").is_err());
    }

    #[test]
    fn empty_csvs_keep_their_header() {
        assert_eq!(
            write_trace_csv(&[]).unwrap(),
            "detector,iteration,grid_index,theta,metric,is_estimate\n"
        );
        assert_eq!(parse_trace_csv(&write_trace_csv(&[]).unwrap()).unwrap(), vec![]);
        assert_eq!(write_truth_csv(&[]).unwrap(), "jammer_index,theta_true\n");
    }

    #[test]
    fn trace_csv_round_trip() {
        let rows = vec![
            TraceRow {
                detector: DetectorId::MsdIs,
                iteration: 1,
                grid_index: 0,
                theta: -1.0,
                metric: 1e-300,
                is_estimate: false,
            },
            TraceRow {
                detector: DetectorId::MsdIs,
                iteration: 1,
                grid_index: 1,
                theta: 1.0,
                metric: 12.5,
                is_estimate: true,
            },
        ];
        let text = write_trace_csv(&rows).unwrap();
        assert_eq!(parse_trace_csv(&text).unwrap(), rows);
        let truth = vec![TruthRow {
            jammer_index: 0,
            theta_true: -0.3,
        }];
        assert_eq!(parse_truth_csv(&write_truth_csv(&truth).unwrap()).unwrap(), truth);
    }

    #[test]
    fn trial_binary_round_trip_and_rejections() {
        let obs = sample_obs();
        let bytes = encode_trial_binary(&obs);
        assert_eq!(bytes.len(), 24 + 16 * 12);
        assert_eq!(decode_trial_binary(&bytes).unwrap(), obs);

        assert!(decode_trial_binary(&bytes[..bytes.len() - 1]).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(decode_trial_binary(&b).is_err());
        let mut b = bytes.clone();
        b[4] = 2;
        assert!(decode_trial_binary(&b).is_err());
        let mut b = bytes.clone();
        b[16..24].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(decode_trial_binary(&b).is_err());
        let mut b = bytes.clone();
        b[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        b[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_trial_binary(&b).is_err());
        let mut b = bytes;
        b[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_trial_binary(&b).is_err());
    }

    #[test]
    fn trial_json_rejections() {
        let obs = sample_obs();
        let text = encode_trial_json(&obs, None);
        assert_eq!(decode_trial_json(&text).unwrap(), (obs, None));
        assert!(decode_trial_json(&text.replace("beamjam-trial/v1", "other")).is_err());
        assert!(decode_trial_json("{\"format\":\"beamjam-trial/v1\",\"sigma2\":1.0,\"y\":[]}").is_err());
        assert!(decode_trial_json("{\"format\":\"beamjam-trial/v1\",\"sigma2\":1.0,\"y\":[[[1,2]],[]]}").is_err());
    }

    proptest! {
        #[test]
        fn trial_formats_round_trip(
            n in 1usize..6,
            tp in 1usize..5,
            sigma2 in 1e-20f64..1e3,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let y = CMat::from_fn(n, tp, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() * 1e-9));
            let obs = ProjectedObservation::from_matrix(y, sigma2).unwrap();
            prop_assert_eq!(decode_trial_binary(&encode_trial_binary(&obs)).unwrap(), obs.clone());
            prop_assert_eq!(decode_trial_json(&encode_trial_json(&obs, None)).unwrap().0, obs);
        }
    }
}
