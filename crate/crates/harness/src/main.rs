use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spdp_core::mean_estimation::MeanMechanism;
use spdp_core::sgd::SgdConfig;
use spdp_harness::calibrate::{calibrate_constants, CALIBRATION_SEED, CALIBRATION_SGD_RUNS, CALIBRATION_STOP_TRIALS};
use spdp_harness::experiments::{mechanism_from, write_report};
use spdp_harness::grid::parse_axis;
use spdp_harness::{fit_slope, run, Config, ExperimentKind, HarnessError, Table};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "spdp", version, about = "Private sparse mean estimation and optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Private mean estimation error on random sparse data.
    MeanEst(Common),
    /// Randomly stopped private SGD.
    Sgd(Common),
    /// Confidence boosting of the SGD runs.
    Boost(Common),
    /// Regularized output perturbation.
    OutputPert(Common),
    /// Exponential mechanism over a sparse net.
    ExpMech(Common),
    /// Mean estimation on packing instances.
    HardInstance(Common),
    /// Calibrate the open constants on the benchmark and print the table.
    Calibrate(Common),
    /// Log-log slope of a CSV column against another.
    Slope(SlopeArgs),
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; the summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Grid axis, e.g. `n=2^8..2^10` or `eps=0.5,1`. Repeatable.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    grid: Vec<String>,
    #[arg(long, value_parser = ["projection", "cs"])]
    mechanism: Option<String>,
    #[arg(long, value_parser = ["convex", "nonconvex"])]
    mode: Option<String>,
    /// Override any config key. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Exit with status 3 when a pass/fail metric fails.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct SlopeArgs {
    csv: PathBuf,
    #[arg(long, default_value = "n")]
    x: String,
    #[arg(long, default_value = "value")]
    y: String,
    /// Keep only rows whose `metric` column equals this.
    #[arg(long)]
    metric: Option<String>,
    /// Expected slope for `--check`.
    #[arg(long, allow_negative_numbers = true)]
    expect: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long)]
    check: bool,
}

enum Failure {
    Usage(String),
    Runtime(String),
    Check(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config { .. } | HarnessError::Value { .. } | HarnessError::Grid { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load_config(c: &Common) -> Result<Config, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = c.seed {
        cfg.set("seed", s);
    }
    if let Some(t) = c.trials {
        cfg.set("trials", t);
    }
    if let Some(m) = &c.mechanism {
        cfg.set("mechanism", m);
    }
    if let Some(m) = &c.mode {
        cfg.set("mode", m);
    }
    for spec in &c.grid {
        let axis = parse_axis(spec)?;
        let (_, values) = spec.split_once('=').expect("validated by parse_axis");
        cfg.set(&format!("grid.{}", axis.key), values.trim());
    }
    for spec in &c.set {
        cfg.apply_override(spec)?;
    }
    Ok(cfg)
}

fn experiment(kind: ExperimentKind, c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let report = run(kind, &cfg)?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.as_str())));
    let summary = write_report(&out, &report)?;
    eprintln!("wrote {} and {}", out.display(), summary.display());
    for ch in &report.checks {
        eprintln!("{}: {}/{}", ch.metric, ch.passed, ch.total);
    }
    if c.check && !report.all_checks_pass() {
        return Err(Failure::Check("a pass/fail metric failed".into()));
    }
    Ok(())
}

fn calibrate(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let seed = cfg.get_or("seed", CALIBRATION_SEED)?;
    let stop_trials = cfg.get_count("stop_trials", CALIBRATION_STOP_TRIALS)?;
    let runs = cfg.get_count("trials", CALIBRATION_SGD_RUNS)?;
    let mechanism: MeanMechanism = mechanism_from(&cfg, "cs")?;
    let cal = calibrate_constants(seed, stop_trials, runs, &SgdConfig { mechanism, record_trace: false })?;
    let text = cal.table.to_text();
    match &c.out {
        Some(p) => std::fs::write(p, &text).map_err(|e| Failure::Runtime(e.to_string()))?,
        None => print!("{text}"),
    }
    let s = &cal.stopping;
    eprintln!(
        "stopping time: mean {:.1} in [{:.1}, {:.1}], P[T <= C'n/ln(2/delta)] = {:.3}; success at C: {:.3} over {} runs",
        s.mean, s.lower_bound, s.upper_bound, s.frac_below, cal.success, cal.runs
    );
    if c.check && !((0.05..=0.25).contains(&s.frac_below) && cal.success >= 0.5) {
        return Err(Failure::Check("calibration targets not met".into()));
    }
    Ok(())
}

fn slope(a: &SlopeArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.csv).map_err(|e| Failure::Runtime(format!("{}: {e}", a.csv.display())))?;
    let table = Table::parse(&text)?;
    let pairs = table.pairs(&a.x, &a.y, a.metric.as_deref().map(|m| ("metric", m)))?;
    let fit = fit_slope(&pairs)?;
    println!("slope,stderr,intercept,points");
    println!("{},{},{},{}", fit.slope, fit.stderr, fit.intercept, fit.points);
    if a.check {
        let want = a.expect.ok_or_else(|| Failure::Usage("--check needs --expect".into()))?;
        if (fit.slope - want).abs() > a.tol {
            return Err(Failure::Check(format!("slope {} outside {want} +- {}", fit.slope, a.tol)));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::MeanEst(c) => experiment(ExperimentKind::MeanEst, c),
        Command::Sgd(c) => experiment(ExperimentKind::Sgd, c),
        Command::Boost(c) => experiment(ExperimentKind::Boost, c),
        Command::OutputPert(c) => experiment(ExperimentKind::OutputPert, c),
        Command::ExpMech(c) => experiment(ExperimentKind::ExpMech, c),
        Command::HardInstance(c) => experiment(ExperimentKind::HardInstance, c),
        Command::Calibrate(c) => calibrate(c),
        Command::Slope(a) => slope(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(EXIT_CHECK)
        }
    }
}
