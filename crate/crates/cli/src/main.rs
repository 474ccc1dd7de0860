use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coalscale::par;
use coalscale_cli::config::FitKind;
use coalscale_cli::{execute, thread_cap, Experiment, Failure, Outcome, RunConfig};

/// Numerical experiments on coalescing Brownian motions.
///
/// Exit status: 0 on success, 1 when an audit fails, 2 on a configuration
/// error. Set COALSCALE_THREADS to cap the worker pool.
#[derive(Parser)]
#[command(name = "coalscale", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the kernel sandwich bounds on random configurations.
    Bounds(Overrides),
    /// Monte Carlo over the unitary group against the determinant identity.
    Hciz(Overrides),
    /// Simulate an ensemble and write every particle position.
    Simulate(Overrides),
    /// Estimate n-point densities and factorial moments in boxes.
    Density(Overrides),
    /// Fit exponents or profiles.
    Fit(Overrides),
    /// Consolidate result files into a pass/fail table.
    Report(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Observation times, comma separated.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    /// Half-width of the interval random points are drawn from.
    #[arg(long)]
    range: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y: Option<Vec<f64>>,
    /// What to fit.
    #[arg(long, value_enum)]
    kind: Option<FitKind>,
    /// Largest |y|/√t allowed in a profile check.
    #[arg(long)]
    reach: Option<f64>,
    /// Disable the in-step meeting correction.
    #[arg(long)]
    no_bridge: bool,
    /// Input result files.
    #[arg(long = "input")]
    input: Vec<PathBuf>,
    /// Input result files, as positional arguments.
    files: Vec<PathBuf>,
}

impl Overrides {
    fn into_config(self) -> (Option<PathBuf>, RunConfig) {
        let mut inputs = self.input;
        inputs.extend(self.files);
        let cfg = RunConfig {
            n: self.n,
            t: self.t,
            dt: self.dt,
            replicas: self.replicas,
            seed: self.seed,
            out: self.out,
            trials: self.trials,
            samples: self.samples,
            range: self.range,
            x: self.x,
            y: self.y,
            fit: self.kind,
            reach: self.reach,
            bridge: self.no_bridge.then_some(false),
            inputs: (!inputs.is_empty()).then_some(inputs),
            ..Default::default()
        };
        (self.config, cfg)
    }
}

fn write_outcome(outcome: &Outcome) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Config(format!("writing output: {e}"));
    for a in &outcome.artifacts {
        match &a.path {
            Some(p) => std::fs::write(p, &a.bytes)
                .map_err(|e| Failure::Config(format!("writing {}: {e}", p.display())))?,
            None => std::io::stdout().write_all(&a.bytes).map_err(io)?,
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let (kind, overrides) = match cli.command {
        Command::Bounds(o) => (Experiment::Bounds, o),
        Command::Hciz(o) => (Experiment::Hciz, o),
        Command::Simulate(o) => (Experiment::Simulate, o),
        Command::Density(o) => (Experiment::Density, o),
        Command::Fit(o) => (Experiment::Fit, o),
        Command::Report(o) => (Experiment::Report, o),
    };
    let (path, over) = overrides.into_config();
    let base = match path {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    let config = base.overlay(over);
    let outcome = match thread_cap()? {
        Some(threads) => par::with_threads(threads, || execute(kind, &config))?,
        None => execute(kind, &config)?,
    };
    write_outcome(&outcome)?;
    for note in &outcome.notes {
        eprintln!("{note}");
    }
    if outcome.audit_failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &outcome.audit_failures {
            eprintln!("FAIL {f}");
        }
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("coalscale: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
