//! Run configuration.

use std::path::PathBuf;

use dfw::losses::{DirectionMode, Loss};
use dfw::models::ModelSpec;
use dfw::optim::{BaselineKind, LrSchedule, DEFAULT_L2, DEFAULT_MOMENTUM};

use crate::dataset::{
    generate_synthetic, load_dataset, split_loaded, DataFormat, Dataset, SyntheticConfig,
};
use crate::error::{BenchError, Result};

/// Share of a loaded file held out for validation.
pub const FILE_VAL_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Dfw,
    Sgd,
    Adagrad,
    Adam,
    Amsgrad,
}

impl OptimizerKind {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            OptimizerKind::Dfw => None,
            OptimizerKind::Sgd => Some(BaselineKind::SgdNesterov),
            OptimizerKind::Adagrad => Some(BaselineKind::Adagrad),
            OptimizerKind::Adam => Some(BaselineKind::Adam),
            OptimizerKind::Amsgrad => Some(BaselineKind::Amsgrad),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelArch {
    Linear,
    Mlp { hidden: Vec<usize> },
}

impl ModelArch {
    pub fn spec(&self, input_dim: usize, num_classes: usize) -> ModelSpec {
        match self {
            ModelArch::Linear => ModelSpec::linear(input_dim, num_classes),
            ModelArch::Mlp { hidden } => ModelSpec::mlp(input_dim, hidden.clone(), num_classes),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticConfig),
    File { path: PathBuf, format: DataFormat },
}

impl DatasetSource {
    /// Generates or loads the data; files are split with `seed`.
    pub fn materialize(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic(cfg) => generate_synthetic(cfg),
            DatasetSource::File { path, format } => {
                split_loaded(load_dataset(path, *format)?, FILE_VAL_FRACTION, seed)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub optimizer: OptimizerKind,
    /// Proximal coefficient for DFW, base learning rate otherwise.
    pub eta: f64,
    pub momentum: f64,
    pub l2: f64,
    /// `None` picks the default: step decay for SGD, constant otherwise.
    pub schedule: Option<LrSchedule>,
    pub model: ModelArch,
    pub dataset: DatasetSource,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: Loss,
    /// `None` picks smoothed for four or more classes.
    pub direction_mode: Option<DirectionMode>,
}

impl RunConfig {
    /// DFW with the default momentum and weight decay on the reference
    /// blobs data.
    pub fn new(optimizer: OptimizerKind, eta: f64) -> Self {
        Self {
            optimizer,
            eta,
            momentum: DEFAULT_MOMENTUM,
            l2: DEFAULT_L2,
            schedule: None,
            model: ModelArch::Mlp { hidden: vec![64] },
            dataset: DatasetSource::Synthetic(SyntheticConfig::reference_blobs()),
            batch_size: 64,
            epochs: 60,
            seed: 0,
            loss: Loss::Svm,
            direction_mode: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be nonnegative, got {}", self.l2));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive".into());
        }
        if let ModelArch::Mlp { hidden } = &self.model {
            if hidden.contains(&0) {
                return bad("hidden widths must be positive".into());
            }
        }
        if self.optimizer == OptimizerKind::Dfw && self.loss != Loss::Svm {
            return bad("DFW optimizes the hinge loss; use --loss svm".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        match (&self.schedule, self.optimizer) {
            (Some(s), _) => s.clone(),
            (None, OptimizerKind::Sgd) => LrSchedule::step_decay(self.epochs),
            (None, _) => LrSchedule::constant(),
        }
    }

    pub fn direction_mode(&self, num_classes: usize) -> DirectionMode {
        self.direction_mode
            .unwrap_or_else(|| DirectionMode::default_for(num_classes))
    }
}
