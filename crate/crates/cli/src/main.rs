use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use beamjam_cli::run::{execute, Command, RunOptions};
use beamjam_cli::selftest::{self, Fault};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "beamjam",
    version,
    about = "Jammer detection experiments for beamspace massive MIMO"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Calibrate detection thresholds on noise-only trials.
    Calibrate(RunArgs),
    /// Record every detector's metric over the grid at each iteration for one seeded scenario.
    Trace(RunArgs),
    /// Detection probability and RMSE versus JNR.
    Sweep(RunArgs),
    /// Run the built-in property suites.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `run.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Threshold table; defaults to `<out>/thresholds.json`.
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Accepted for a uniform command line; the suites use fixed sizes.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Run a single suite.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long, hide = true, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Woodbury,
}

fn run_command(command: Command, args: RunArgs) -> Result<()> {
    let opts = RunOptions {
        config: args.config,
        seed: args.seed,
        out: args.out,
        threads: args.threads.map(|n| n as usize),
        thresholds: args.thresholds,
    };
    for path in execute(command, &opts)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_selftest(args: SelftestArgs) -> Result<bool> {
    let fault = args.inject_fault.map(|f| match f {
        FaultArg::Woodbury => Fault::Woodbury,
    });
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool.build()?;
    let reports = pool.install(|| match &args.suite {
        Some(name) => selftest::find(name)
            .map(|s| vec![selftest::run_suite(s, fault)])
            .with_context(|| format!("unknown suite `{name}`")),
        None => Ok(selftest::run_all(fault)),
    })?;
    let mut failed = Vec::new();
    for r in &reports {
        let secs = r.elapsed.as_secs_f64();
        match &r.outcome {
            Ok(()) => println!("ok    {:<22} {secs:>8.3}s", r.name),
            Err(e) => {
                println!("FAIL  {:<22} {secs:>8.3}s  {e}", r.name);
                failed.push(r.name);
            }
        }
    }
    if failed.is_empty() {
        println!("all {} suites passed", reports.len());
        Ok(true)
    } else {
        eprintln!("failing suites: {}", failed.join(", "));
        Ok(false)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Calibrate(a) => run_command(Command::Calibrate, a).map(|_| true),
        Cmd::Trace(a) => run_command(Command::Trace, a).map(|_| true),
        Cmd::Sweep(a) => run_command(Command::Sweep, a).map(|_| true),
        Cmd::Selftest(a) => run_selftest(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
