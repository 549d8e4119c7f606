use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mte_core::cli_io::{error_record, init_workers, run, Mode, RunConfig};
use mte_core::MteError;

#[derive(Parser)]
#[command(name = "mte", version, about = "Marginal treatment effects of welfare participation on hours worked")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic population and write it as a dataset
    Simulate(Flags),
    /// Fit the probit and hours equation and export the MTE curve
    Estimate(Flags),
    /// Estimate with state-level block-bootstrap bands
    Bootstrap(Flags),
    /// Knot selection, segment instrument strength, balance, falsification
    Diagnose(Flags),
    /// Participation decomposition and MTE at reform scenarios
    Counterfactual(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset CSV (overrides the config)
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Spline knot count
    #[arg(long)]
    knots: Option<usize>,
    /// Support window as LO:HI
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    /// Bootstrap replicates
    #[arg(long)]
    boot: Option<usize>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad lower bound `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad upper bound `{b}`"))?;
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err("window must satisfy 0 < LO < HI < 1".into());
    }
    Ok((lo, hi))
}

fn config(mode: Mode, f: Flags) -> Result<RunConfig, MteError> {
    let mut cfg = match &f.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.mode = Some(mode);
    if f.input.is_some() {
        cfg.input = f.input;
    }
    if f.seed.is_some() {
        cfg.seed = f.seed;
    }
    if let Some(o) = f.out {
        cfg.output = o;
    }
    if let Some(k) = f.knots {
        cfg.estimator.knots = k;
    }
    if let Some(w) = f.window {
        cfg.estimator.window = w;
    }
    if let Some(b) = f.boot {
        cfg.estimator.bootstrap = b;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, flags) = match cli.command {
        Command::Simulate(f) => (Mode::Simulate, f),
        Command::Estimate(f) => (Mode::Estimate, f),
        Command::Bootstrap(f) => (Mode::Bootstrap, f),
        Command::Diagnose(f) => (Mode::Diagnose, f),
        Command::Counterfactual(f) => (Mode::Counterfactual, f),
    };
    let result = init_workers().and_then(|_| config(mode, flags)).and_then(|cfg| run(&cfg));
    match result {
        Ok(report) => {
            for p in &report.written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
