//! Command-line interface: `train` and `sweep`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfw::losses::{DirectionMode, Loss};
use dfw::optim::{LrSchedule, DEFAULT_L2, DEFAULT_MOMENTUM};

use crate::config::{DatasetSource, ModelArch, OptimizerKind, RunConfig};
use crate::dataset::{DataFormat, SyntheticConfig};
use crate::error::Result;
use crate::metrics::{emit_metrics, write_metrics};
use crate::sweep::{default_grid, emit_sweep, sensitivity_sweep, write_sweep};
use crate::train::{run_training_on, RunStatus};

#[derive(Debug, Parser)]
#[command(
    name = "dfw-bench",
    version,
    about = "Train and compare DFW against baseline optimizers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train once and write per-epoch metrics.
    Train(RunArgs),
    /// Train once per step-size and write one summary row per value.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Dfw,
    Sgd,
    Adagrad,
    Adam,
    Amsgrad,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Svm,
    Ce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Auto,
    Smoothed,
    Conditional,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "dfw")]
    pub optimizer: OptimizerArg,
    /// Proximal coefficient (DFW) or learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = DEFAULT_MOMENTUM)]
    pub momentum: f64,
    #[arg(long, default_value_t = DEFAULT_L2)]
    pub l2: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "mlp")]
    pub model: ModelArg,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    /// `blobs`, `spirals` (fixed reference sets) or a path to a data file.
    #[arg(long, default_value = "blobs")]
    pub dataset: String,
    /// Format of a dataset file; guessed from the extension if absent.
    #[arg(long, value_enum)]
    pub data_format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "svm")]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value = "auto")]
    pub direction_mode: ModeArg,
    /// `epoch:multiplier,...` (0-based epochs), `none`, or `default`.
    #[arg(long, default_value = "default")]
    pub lr_schedule: String,
    /// Output CSV; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Step-sizes to try, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = default_grid())]
    pub etas: Vec<f64>,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let dataset = match self.dataset.as_str() {
            "blobs" => DatasetSource::Synthetic(SyntheticConfig::reference_blobs()),
            "spirals" => DatasetSource::Synthetic(SyntheticConfig::reference_spirals()),
            path => {
                let path = PathBuf::from(path);
                let format = match self.data_format {
                    Some(FormatArg::Csv) => DataFormat::Csv,
                    Some(FormatArg::Libsvm) => DataFormat::Libsvm,
                    None => DataFormat::from_path(&path),
                };
                DatasetSource::File { path, format }
            }
        };
        let schedule = match self.lr_schedule.as_str() {
            "default" => None,
            "none" => Some(LrSchedule::constant()),
            text => Some(LrSchedule::parse(text)?),
        };
        let config = RunConfig {
            optimizer: match self.optimizer {
                OptimizerArg::Dfw => OptimizerKind::Dfw,
                OptimizerArg::Sgd => OptimizerKind::Sgd,
                OptimizerArg::Adagrad => OptimizerKind::Adagrad,
                OptimizerArg::Adam => OptimizerKind::Adam,
                OptimizerArg::Amsgrad => OptimizerKind::Amsgrad,
            },
            eta: self.eta,
            momentum: self.momentum,
            l2: self.l2,
            schedule,
            model: match self.model {
                ModelArg::Linear => ModelArch::Linear,
                ModelArg::Mlp => ModelArch::Mlp {
                    hidden: self.hidden.clone(),
                },
            },
            dataset,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            loss: match self.loss {
                LossArg::Svm => Loss::Svm,
                LossArg::Ce => Loss::CrossEntropy,
            },
            direction_mode: match self.direction_mode {
                ModeArg::Auto => None,
                ModeArg::Smoothed => Some(DirectionMode::Smoothed),
                ModeArg::Conditional => Some(DirectionMode::Conditional),
            },
        };
        config.validate()?;
        Ok(config)
    }
}

/// Whether the command finished without a diverged run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Diverged,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Train(args) => {
            let config = args.to_config()?;
            let data = config.dataset.materialize(config.seed)?;
            let run = run_training_on(&config, &data)?;
            match &args.out {
                Some(path) => emit_metrics(&run.metrics, path)?,
                None => write_metrics(&run.metrics, std::io::stdout().lock())?,
            }
            if let RunStatus::Diverged { epoch, reason } = &run.status {
                eprintln!("diverged in epoch {epoch}: {reason}");
                return Ok(Outcome::Diverged);
            }
            Ok(Outcome::Completed)
        }
        Command::Sweep(args) => {
            let config = args.run.to_config()?;
            let data = config.dataset.materialize(config.seed)?;
            let rows = sensitivity_sweep(&config, &data, &args.etas)?;
            match &args.run.out {
                Some(path) => emit_sweep(&rows, path)?,
                None => write_sweep(&rows, std::io::stdout().lock())?,
            }
            for r in rows.iter().filter(|r| r.error.is_some()) {
                let _ = writeln!(
                    std::io::stderr(),
                    "eta {}: {}",
                    r.eta,
                    r.error.as_deref().unwrap_or("")
                );
            }
            Ok(if rows.iter().any(|r| r.error.is_some()) {
                Outcome::Diverged
            } else {
                Outcome::Completed
            })
        }
    }
}
