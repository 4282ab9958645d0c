//! SGD with Nesterov momentum and the adaptive baselines.

use super::{LrSchedule, Optimizer, StepDiagnostics};
use crate::autodiff::{Gradient, ParamVector};
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::models::{record_scores, ModelSpec, Sample};
use crate::proximal::pull_back_rows;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const ADAGRAD_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    SgdNesterov,
    Adagrad,
    Adam,
    Amsgrad,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub lr: f64,
    /// Nesterov momentum; only used by [`BaselineKind::SgdNesterov`].
    pub momentum: f64,
    pub l2: f64,
    pub loss: Loss,
    pub schedule: LrSchedule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineState {
    config: BaselineConfig,
    w: ParamVector,
    epoch: usize,
    steps: u64,
    /// Velocity (SGD), squared-gradient sum (Adagrad) or first moment (Adam).
    first: Vec<f64>,
    /// Second moment (Adam, AMSGrad).
    second: Vec<f64>,
    /// Running maximum of the second moment (AMSGrad).
    second_max: Vec<f64>,
}

impl BaselineState {
    pub fn new(w: ParamVector, config: BaselineConfig) -> Result<Self> {
        if !(config.lr > 0.0 && config.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                config.lr
            )));
        }
        if !(0.0..1.0).contains(&config.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                config.momentum
            )));
        }
        if config.l2.is_nan() || config.l2 < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "l2 must be nonnegative, got {}",
                config.l2
            )));
        }
        let p = w.len();
        Ok(Self {
            config,
            w,
            epoch: 0,
            steps: 0,
            first: vec![0.0; p],
            second: vec![0.0; p],
            second_max: vec![0.0; p],
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    /// Learning rate after the schedule multiplier for the current epoch.
    pub fn effective_lr(&self) -> f64 {
        self.config.lr * self.config.schedule.factor(self.epoch)
    }

    /// AMSGrad's running maximum of the second moment.
    pub fn second_moment_max(&self) -> &[f64] {
        &self.second_max
    }

    /// Mean batch loss and `g = r + grad(mean loss)` at the current point.
    pub fn gradient(&self, batch: &[Sample], spec: &ModelSpec) -> Result<(f64, Gradient)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let graph = record_scores(spec, &self.w, batch)?;
        let loss_fn = self.config.loss;
        let loss = batch
            .iter()
            .enumerate()
            .map(|(i, s)| loss_fn.value(graph.row(i), s.label))
            .sum::<f64>()
            / batch.len() as f64;
        let rows = batch
            .iter()
            .enumerate()
            .map(|(i, s)| loss_fn.score_gradient(graph.row(i), s.label));
        let dl = pull_back_rows(&graph, rows)?;
        let r = spec.l2_gradient(&self.w, self.config.l2);
        let g = r
            .as_slice()
            .iter()
            .zip(dl.as_slice())
            .map(|(ri, di)| ri + di)
            .collect();
        Ok((loss, Gradient::new(g)))
    }

    /// Applies the update rule of the configured method for gradient `g`.
    pub fn apply_gradient(&mut self, g: &Gradient) -> Result<()> {
        let g = g.as_slice();
        if g.len() != self.w.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient of length {} for {} parameters",
                g.len(),
                self.w.len()
            )));
        }
        let lr = self.effective_lr();
        self.steps += 1;
        let mut w = self.w.as_slice().to_vec();
        match self.config.kind {
            BaselineKind::SgdNesterov => {
                let mu = self.config.momentum;
                for i in 0..w.len() {
                    self.first[i] = mu * self.first[i] - lr * g[i];
                    w[i] = w[i] - lr * g[i] + mu * self.first[i];
                }
            }
            BaselineKind::Adagrad => {
                for i in 0..w.len() {
                    self.first[i] += g[i] * g[i];
                    w[i] -= lr * g[i] / (self.first[i].sqrt() + ADAGRAD_EPS);
                }
            }
            BaselineKind::Adam | BaselineKind::Amsgrad => {
                let t = self.steps as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                let ams = self.config.kind == BaselineKind::Amsgrad;
                for i in 0..w.len() {
                    self.first[i] = BETA1 * self.first[i] + (1.0 - BETA1) * g[i];
                    self.second[i] = BETA2 * self.second[i] + (1.0 - BETA2) * g[i] * g[i];
                    let v = if ams {
                        self.second_max[i] = self.second_max[i].max(self.second[i]);
                        self.second_max[i]
                    } else {
                        self.second[i]
                    };
                    w[i] -= lr * (self.first[i] / c1) / ((v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
        self.w = ParamVector::new(w)?;
        Ok(())
    }
}

impl Optimizer for BaselineState {
    fn step(&mut self, batch: &[Sample], spec: &ModelSpec) -> Result<StepDiagnostics> {
        let (loss, g) = self.gradient(batch, spec)?;
        self.apply_gradient(&g)?;
        Ok(StepDiagnostics {
            loss,
            gamma: None,
            switches: 0,
            batch_size: batch.len(),
        })
    }

    fn params(&self) -> &ParamVector {
        &self.w
    }

    fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }
}
