mod commands;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use permix::error::ErrorKind;
use serde::Serialize;

use crate::report::Format;

#[derive(Debug, Parser)]
#[command(
    name = "permix",
    version,
    about = "Permutation mixtures, exact χ² divergences and compound decision audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Clone, Copy, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Channel overlap matrix of a family.
    Overlap,
    /// Exact χ² between the permutation mixture and its mean-field product.
    Chi2,
    /// Spectral and diagonal bounds next to the exact value.
    Bounds,
    /// Rényi partition diameters for k = 1..K.
    Diameter,
    /// χ² capacity: certified lower bound and density-ratio upper bound.
    Capacity,
    /// Higher-order Cheeger and combinatorial expansion audits.
    Cheeger,
    /// Constrained-Hessian determinant identity.
    HessianCheck,
    /// Replicated-instance χ² trajectory against the spectral product.
    Replication,
    /// Two-point Gaussian sweep over μ and n.
    SweepGaussian,
    /// Two-point Poisson sweep over M and n.
    SweepPoisson,
    /// Monte Carlo regret gap between the separable and PI oracles over an h grid.
    CompoundGap,
    /// Full invariant suite; exit 1 if any audit fails.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Overlap => "overlap",
            Command::Chi2 => "chi2",
            Command::Bounds => "bounds",
            Command::Diameter => "diameter",
            Command::Capacity => "capacity",
            Command::Cheeger => "cheeger",
            Command::HessianCheck => "hessian-check",
            Command::Replication => "replication",
            Command::SweepGaussian => "sweep-gaussian",
            Command::SweepPoisson => "sweep-poisson",
            Command::CompoundGap => "compound-gap",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Poisson,
    GaussianScale,
    DiscreteSpike,
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Opts {
    /// Parametric family of the members.
    #[arg(long, global = true, value_enum, default_value = "gaussian")]
    pub family: Family,
    /// Member parameters (mean, rate or sigma), comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    /// Dimension(s), comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n: Vec<u64>,
    /// Number of blocks or sets.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Category count for discrete families, or the largest replication factor.
    #[arg(long, global = true)]
    pub m: Option<u64>,
    /// Spike mass for the discrete family.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Second eigenvalue of a 2×2 overlap matrix (replication).
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Parameter grid: `a,b,c` or `lo:hi:count`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long, global = true, default_value_t = 20_240_917)]
    pub seed: u64,
    /// Monte Carlo samples (or random matrices for hessian-check).
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Optimizer iterations for capacity.
    #[arg(long, global = true, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    /// Run a single verify audit.
    #[arg(long, global = true)]
    pub only: Option<String>,
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Negative control: add 1e-3 to one overlap entry before the verify audits.
    #[arg(long, global = true)]
    pub perturb: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] permix::error::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Capacity => 3,
                ErrorKind::Numerical => 4,
            },
            CliError::Usage(_) | CliError::Io(_) => 2,
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let opts = &cli.opts;
    let config = serde_json::json!({ "command": cli.command, "opts": opts });
    let (report, status) = match cli.command {
        Command::Verify => verify::run(opts, config)?,
        cmd => (commands::run(cmd.name(), opts, config)?, 0),
    };
    let format = if matches!(cli.command, Command::Verify) {
        Format::Json
    } else {
        opts.format
    };
    let text = report.render(format);
    match &opts.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.opts.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("permix {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
