use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qbattery::config::{ExperimentConfig, Format, Protocol};
use qbattery::runner::{self, RunOutput};

/// Work-fluctuation sweeps, Schmidt-number witnesses and measurement
/// protocols for bipartite quantum batteries.
#[derive(Parser, Debug)]
#[command(name = "qbattery", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for Haar sampling. Also turns on the Monte-Carlo columns.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of unitaries (per grid point). Also turns on Monte Carlo.
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Detector efficiency on both sides (repeatable).
    #[arg(long, global = true, conflicts_with_all = ["eps_a", "eps_b"])]
    eps: Vec<f64>,

    #[arg(long = "eps-a", global = true)]
    eps_a: Vec<f64>,

    #[arg(long = "eps-b", global = true)]
    eps_b: Vec<f64>,

    /// Output file (stdout if absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Closed-form work variance and witness bounds over the (b, α) grid.
    Variance,
    /// Full Schmidt-number witness reports.
    Witness,
    /// Sampled work histograms with summary statistics.
    Histogram,
    /// Noisy two-point-measurement variances and weights.
    Tpm,
    /// Average coincidence and the coincidence bound.
    Coincidence,
    /// Run the protocol named in the config.
    Sweep,
    /// Monte-Carlo cross-checks of every closed form.
    Verify,
}

fn configure(cli: &Cli) -> qbattery::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.protocol = match cli.command {
        Command::Variance => Protocol::Variance,
        Command::Witness => Protocol::Witness,
        Command::Histogram => Protocol::Histogram,
        Command::Tpm => Protocol::Tpm,
        Command::Coincidence => Protocol::Coincidence,
        Command::Verify => Protocol::Verify,
        Command::Sweep => cfg.protocol,
    };
    if let Some(seed) = cli.seed {
        cfg.sampling.seed = Some(seed);
        cfg.sampling.monte_carlo = true;
    }
    if let Some(n) = cli.n {
        cfg.sampling.n_unitaries = n;
        cfg.sampling.monte_carlo = true;
        cfg.verify.n = n;
    }
    if !cli.eps.is_empty() {
        cfg.parameters.eps = Some(cli.eps.clone());
        cfg.parameters.eps_a = None;
        cfg.parameters.eps_b = None;
    }
    if !cli.eps_a.is_empty() || !cli.eps_b.is_empty() {
        cfg.parameters.eps = None;
    }
    if !cli.eps_a.is_empty() {
        cfg.parameters.eps_a = Some(cli.eps_a.clone());
    }
    if !cli.eps_b.is_empty() {
        cfg.parameters.eps_b = Some(cli.eps_b.clone());
    }
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.clone());
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match configure(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let output = match runner::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = output.write(cfg.output.path.as_deref(), cfg.output.format) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if let RunOutput::Verify(report) = &output {
        for c in report.failures() {
            eprintln!(
                "FAILED {}: deviation {:.3e}, se {:.3e}, z {:.2}, tolerance {}",
                c.name, c.deviation, c.se, c.z, c.tolerance
            );
        }
    }
    if output.failed() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
