//! The `calibrate`, `trace` and `sweep` commands. Each one computes its
//! output files in memory; [`execute`] owns all writing.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use beamjam_core::config::ExperimentConfig;
use beamjam_core::eval::{calibrate_all, run_sweep, run_trace, ThresholdTable};
use beamjam_core::formats::{trace_rows, truth_rows, write_sweep_csv, write_trace_csv, write_truth_csv};
use beamjam_core::glrt::Grid;

use crate::manifest::{manifest_path, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Calibrate,
    Trace,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Trace => "trace",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub thresholds: Option<PathBuf>,
}

/// A file produced by a command, before it is written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub path: PathBuf,
    pub contents: Vec<u8>,
}

/// Read and validate a config, then apply the `--seed` and `--out` overrides.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg =
        ExperimentConfig::from_json_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = out {
        cfg.run.out_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

pub fn thresholds_path(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| Path::new(&cfg.run.out_dir).join("thresholds.json"))
}

pub fn read_thresholds(path: &Path) -> Result<ThresholdTable> {
    let text = fs::read_to_string(path).with_context(|| {
        format!(
            "threshold table {} not found; run `beamjam calibrate` first",
            path.display()
        )
    })?;
    ThresholdTable::from_json_str(&text).with_context(|| format!("invalid threshold table {}", path.display()))
}

/// New thresholds for every configured detector, merged into the table
/// already at `path` if there is one.
pub fn calibrate(cfg: &ExperimentConfig, path: &Path) -> Result<Vec<Output>> {
    let mut table = if path.exists() {
        read_thresholds(path)?
    } else {
        ThresholdTable::default()
    };
    for entry in calibrate_all(cfg)?.entries {
        table.insert(entry)?;
    }
    Ok(vec![Output {
        path: path.to_path_buf(),
        contents: table.to_json_string().into_bytes(),
    }])
}

pub fn trace(cfg: &ExperimentConfig, thresholds: &Path) -> Result<Vec<Output>> {
    let table = read_thresholds(thresholds)?;
    let run = run_trace(cfg, &table, cfg.run.seed)?;
    let grid: Vec<f64> = Grid::uniform(cfg.detection.grid_l)?
        .points()
        .iter()
        .map(|p| p.value())
        .collect();
    let dir = Path::new(&cfg.run.out_dir);
    Ok(vec![
        Output {
            path: dir.join("trace.csv"),
            contents: write_trace_csv(&trace_rows(&run, &grid))?.into_bytes(),
        },
        Output {
            path: dir.join("truth.csv"),
            contents: write_truth_csv(&truth_rows(&run.scenario))?.into_bytes(),
        },
    ])
}

pub fn sweep(cfg: &ExperimentConfig, thresholds: &Path) -> Result<Vec<Output>> {
    let table = read_thresholds(thresholds)?;
    let jnrs = cfg.jnr_list();
    if jnrs.is_empty() {
        bail!("configuration error at `scenario.jnr_list_db`: a sweep needs at least one JNR");
    }
    let result = run_sweep(cfg, &jnrs, &cfg.detection.detectors, &table, cfg.run.seed)?;
    Ok(vec![Output {
        path: Path::new(&cfg.run.out_dir).join("sweep.csv"),
        contents: write_sweep_csv(&result)?.into_bytes(),
    }])
}

fn label(path: &Path, dir: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).to_string_lossy().into_owned()
}

/// Run one command end to end: load the config, open the manifest, compute
/// the outputs on a pool of `threads` workers, write them, close the manifest.
/// Returns the paths written.
pub fn execute(command: Command, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let cfg = load_config(&opts.config, opts.seed, opts.out.as_deref())?;
    let dir = PathBuf::from(&cfg.run.out_dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let thresholds = thresholds_path(&cfg, opts.thresholds.as_deref());

    let mpath = manifest_path(&dir, command.name());
    let mut manifest = RunManifest::start(command.name(), &cfg);
    manifest.write(&mpath)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let outcome = pool.install(|| match command {
        Command::Calibrate => calibrate(&cfg, &thresholds),
        Command::Trace => trace(&cfg, &thresholds),
        Command::Sweep => sweep(&cfg, &thresholds),
    });
    let outputs = match outcome {
        Ok(o) => o,
        Err(e) => {
            manifest.finish(Err(format!("{e:#}")));
            manifest.write(&mpath)?;
            return Err(e);
        }
    };

    let mut written = Vec::with_capacity(outputs.len());
    for out in outputs {
        if let Some(parent) = out.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(&out.path, &out.contents).with_context(|| format!("writing {}", out.path.display()))?;
        manifest.record_output(&label(&out.path, &dir), &out.contents);
        written.push(out.path);
    }
    manifest.finish(Ok(()));
    manifest.write(&mpath)?;
    Ok(written)
}
