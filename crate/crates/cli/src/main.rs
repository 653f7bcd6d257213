//! `thermovis`: fuse visual/thermal face pairs, build an eigenface space,
//! train the MLP classifier and report recognition rates.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thermovis::eigenspace::EigenError;
use thermovis::eval::{EvalError, ReportFormat};
use thermovis::fusion::FusionError;
use thermovis::mlp::MlpError;
use thermovis::{ImageDims, ImageError};

#[derive(Debug, Parser)]
#[command(
    name = "thermovis",
    version,
    about = "Visual/thermal face fusion with eigenfaces and an MLP classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic visual/thermal dataset and its manifest
    Synth(SynthArgs),
    /// Fuse every visual/thermal pair of a manifest
    Fuse(FuseArgs),
    /// Build the eigenface space from the training split of a fused manifest
    Eigen(EigenArgs),
    /// Train the MLP on eigenface coordinates of the training split
    Train(TrainArgs),
    /// Classify the test split and write a report. Weight and training
    /// flags only fill the report's config echo.
    Eval(EvalArgs),
    /// Run fuse, eigen, train and eval in one go
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct IoFlags {
    /// Input manifest CSV (may also come from the config file)
    #[arg(long, value_name = "CSV")]
    manifest: Option<PathBuf>,
    /// Output directory (may also come from the config file)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Flat key = value config file; flags override its keys
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WeightFlags {
    /// Visual weight a; if only one weight is given the other is its complement [default: 0.70]
    #[arg(long, value_name = "A", allow_negative_numbers = true)]
    visual_weight: Option<f64>,
    /// Thermal weight b [default: 0.30]
    #[arg(long, value_name = "B", allow_negative_numbers = true)]
    thermal_weight: Option<f64>,
}

#[derive(Debug, Args)]
struct FuseFlags {
    /// Working image size; both images of a pair are resized to it [default: 64x64]
    #[arg(long, value_name = "WxH")]
    dims: Option<ImageDims>,
    #[command(flatten)]
    weights: WeightFlags,
    /// Reassign splits with a seeded 50/50 shuffle inside each class [default: keep manifest splits]
    #[arg(long, value_name = "SEED")]
    resplit_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EigenFlags {
    /// Number of eigenfaces kept [default: min(N - 1, 40)]
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    /// Hidden units [default: 32]
    #[arg(long)]
    hidden: Option<usize>,
    /// Learning rate [default: 0.1]
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    /// Momentum coefficient [default: 0.9]
    #[arg(long, allow_negative_numbers = true)]
    momentum: Option<f64>,
    /// Maximum training epochs [default: 2000]
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop once the mean epoch loss reaches this value [default: 0.001]
    #[arg(long, allow_negative_numbers = true)]
    target_loss: Option<f64>,
    /// Weight initialisation seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory (may also come from the config file)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Flat key = value config file; flags override its keys
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Image size [default: 64x64]
    #[arg(long, value_name = "WxH")]
    dims: Option<ImageDims>,
    /// Number of subjects [default: 10]
    #[arg(long)]
    classes: Option<usize>,
    /// Training pairs per subject [default: 10]
    #[arg(long)]
    train_per_class: Option<usize>,
    /// Test pairs per subject [default: 10]
    #[arg(long)]
    test_per_class: Option<usize>,
    /// Standard deviation of the per-pixel noise; 0 makes every sample of a class identical [default: 0.3]
    #[arg(long, allow_negative_numbers = true)]
    separation: Option<f64>,
    /// Generator seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[command(flatten)]
    io: IoFlags,
    #[command(flatten)]
    fuse: FuseFlags,
}

#[derive(Debug, Args)]
struct EigenArgs {
    #[command(flatten)]
    io: IoFlags,
    #[command(flatten)]
    eigen: EigenFlags,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    io: IoFlags,
    /// Eigenspace file [default: <out>/eigenspace.feig]
    #[arg(long, value_name = "FILE")]
    eigenspace: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    io: IoFlags,
    /// Eigenspace file [default: <out>/eigenspace.feig]
    #[arg(long, value_name = "FILE")]
    eigenspace: Option<PathBuf>,
    /// Model file [default: <out>/model.fmlp]
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Report format, csv or json [default: csv]
    #[arg(long)]
    format: Option<ReportFormat>,
    #[command(flatten)]
    weights: WeightFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    io: IoFlags,
    #[command(flatten)]
    fuse: FuseFlags,
    #[command(flatten)]
    eigen: EigenFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Report format, csv or json [default: both]
    #[arg(long)]
    format: Option<ReportFormat>,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<FusionError> for Failure {
    fn from(e: FusionError) -> Self {
        match e.root() {
            FusionError::InvalidWeights { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<EigenError> for Failure {
    fn from(e: EigenError) -> Self {
        match e {
            EigenError::KOutOfRange { .. } => Failure::Usage(e.to_string()),
            EigenError::DegenerateTrainingSet | EigenError::Linalg(_) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<MlpError> for Failure {
    fn from(e: MlpError) -> Self {
        match e {
            MlpError::InvalidArchitecture(_)
            | MlpError::InvalidHyperparameters(_)
            | MlpError::InvalidEpsilon(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Fusion(e) => e.into(),
            EvalError::Eigen(e) => e.into(),
            EvalError::Mlp(e) => e.into(),
            EvalError::Image(e) => e.into(),
            EvalError::InvalidParameters(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Eigen(a) => commands::eigen(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
