//! Training-step implementations.
//!
//! [`DfwState`] is the Deep Frank-Wolfe optimizer; [`BaselineState`] covers
//! SGD with Nesterov momentum and the adaptive methods used for comparison.
//! Both implement [`Optimizer`], so the training loop is agnostic to which
//! one it drives.

mod baselines;
mod dfw;
mod schedule;

pub use baselines::{BaselineConfig, BaselineKind, BaselineState};
pub use dfw::{DfwConfig, DfwState};
pub use schedule::LrSchedule;

use crate::autodiff::ParamVector;
use crate::error::Result;
use crate::models::{ModelSpec, Sample};

/// Default momentum for SGD and DFW.
pub const DEFAULT_MOMENTUM: f64 = 0.9;
/// Default weight-decay coefficient.
pub const DEFAULT_L2: f64 = 1e-4;

/// What a single optimizer step reports.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// Mean training loss on the batch before the step.
    pub loss: f64,
    /// DFW step-size; `None` for the baselines.
    pub gamma: Option<f64>,
    /// Samples whose smoothed direction was rejected for the conditional
    /// gradient.
    pub switches: usize,
    pub batch_size: usize,
}

pub trait Optimizer {
    /// One update on `batch`. Fails on an empty batch or when the update
    /// produces non-finite parameters.
    fn step(&mut self, batch: &[Sample], spec: &ModelSpec) -> Result<StepDiagnostics>;

    fn params(&self) -> &ParamVector;

    /// Informs schedule-driven optimizers of the current (0-based) epoch.
    fn set_epoch(&mut self, _epoch: usize) {}
}
