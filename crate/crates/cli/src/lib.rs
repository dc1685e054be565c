//! Command-line front end for `qpt-core`: simulate coincidence counts,
//! reconstruct process matrices, and report gate metrics, with all artifacts
//! written as deterministic JSON or CSV.

pub mod commands;
pub mod formats;

use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qpt_core::tomo::CountNoise;
use qpt_core::QptError;
use thiserror::Error;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_UNPHYSICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Convergence(String),
    #[error("{0}")]
    Unphysical(String),
    #[error(transparent)]
    Core(#[from] QptError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Convergence(_) => EXIT_CONVERGENCE,
            CliError::Unphysical(_) => EXIT_UNPHYSICAL,
            CliError::Core(e) => match e {
                QptError::Unphysical(_) => EXIT_UNPHYSICAL,
                QptError::Convergence(_) => EXIT_CONVERGENCE,
                QptError::Internal(_) => EXIT_INTERNAL,
                _ => EXIT_INPUT,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qpt", version, about = "Two-qubit quantum process tomography")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate coincidence counts for all 256 settings.
    Simulate(SimulateArgs),
    /// Reconstruct a process matrix from a count file.
    Reconstruct(ReconstructArgs),
    /// Gate metrics of a process matrix against an ideal gate.
    Metrics(MetricsArgs),
    /// Output state of a process for one input state.
    Predict(PredictArgs),
    /// Residuals of a process matrix against measured counts.
    Residuals(ResidualsArgs),
}

/// Process used to generate counts.
#[derive(Debug, Clone, PartialEq)]
pub enum GateSpec {
    Cnot,
    Identity,
    ChiFile(PathBuf),
}

impl FromStr for GateSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cnot" => Ok(GateSpec::Cnot),
            "identity" => Ok(GateSpec::Identity),
            _ => match s.strip_prefix("chi-file:") {
                Some(path) if !path.is_empty() => Ok(GateSpec::ChiFile(PathBuf::from(path))),
                _ => Err(format!("expected cnot, identity or chi-file:PATH, got '{s}'")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IdealGate {
    Cnot,
    Identity,
}

impl IdealGate {
    pub fn gate(self) -> qpt_core::UnitaryGate {
        match self {
            IdealGate::Cnot => qpt_core::UnitaryGate::cnot(),
            IdealGate::Identity => qpt_core::UnitaryGate::identity(4),
        }
    }
}

fn parse_count_noise(s: &str) -> Result<CountNoise, String> {
    s.parse().map_err(|e: QptError| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// cnot, identity, or chi-file:PATH
    #[arg(long, default_value = "cnot")]
    pub gate: GateSpec,
    /// Pairs per setting (C).
    #[arg(long, default_value_t = 2000.0)]
    pub pairs: f64,
    /// Shorthand for --count-noise.
    #[arg(long, value_parser = parse_count_noise, conflicts_with = "count_noise")]
    pub noise: Option<CountNoise>,
    /// none or poisson (default poisson).
    #[arg(long, value_parser = parse_count_noise)]
    pub count_noise: Option<CountNoise>,
    /// Weight of the fully depolarizing component.
    #[arg(long, default_value_t = 0.0)]
    pub depolarizing: f64,
    /// Single-qubit output dephasing probability.
    #[arg(long, default_value_t = 0.0)]
    pub dephasing: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output count file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accept a chi file flagged unconstrained.
    #[arg(long)]
    pub allow_unphysical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mle,
    Linear,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Count file (default: standard input).
    #[arg(long)]
    pub counts: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Mle)]
    pub method: Method,
    /// Initial penalty weight (default: chosen from the data).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output chi file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Chi file (default: standard input).
    #[arg(long)]
    pub chi: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = IdealGate::Cnot)]
    pub ideal: IdealGate,
    #[arg(long, default_value_t = qpt_core::metrics::DEFAULT_SWEEP_SAMPLES)]
    pub sweep_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the per-sample sweep table as CSV.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    #[arg(long)]
    pub allow_unphysical: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("state").required(true).args(["input", "amplitudes"])))]
pub struct PredictArgs {
    /// Chi file (default: standard input).
    #[arg(long)]
    pub chi: Option<PathBuf>,
    /// Polarization label such as DH.
    #[arg(long)]
    pub input: Option<String>,
    /// Four comma-separated amplitudes, e.g. 1,0,0,0 or 0.6,0.8i,0,0.
    #[arg(long, allow_hyphen_values = true)]
    pub amplitudes: Option<String>,
    /// Report the fidelity with this gate's ideal output.
    #[arg(long, value_enum)]
    pub ideal: Option<IdealGate>,
    #[arg(long)]
    pub allow_unphysical: bool,
}

#[derive(Debug, Args)]
pub struct ResidualsArgs {
    #[arg(long)]
    pub chi: PathBuf,
    /// Count file (default: standard input).
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Include the per-setting deltas.
    #[arg(long)]
    pub full: bool,
    /// Write the residual histogram as CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub allow_unphysical: bool,
}

/// Runs one command. Artifacts without an explicit path go to `stdout`;
/// summaries go to `stderr`.
pub fn run(cli: &Cli, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(args) => commands::simulate(args, stdout),
        Command::Reconstruct(args) => commands::reconstruct(args, stdin, stdout, stderr),
        Command::Metrics(args) => commands::metrics(args, stdin, stdout),
        Command::Predict(args) => commands::predict(args, stdin, stdout),
        Command::Residuals(args) => commands::residuals(args, stdin, stdout),
    }
}
