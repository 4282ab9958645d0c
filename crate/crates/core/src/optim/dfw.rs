//! The Deep Frank-Wolfe optimizer.
//!
//! Every step solves the proximal problem around the current iterate with a
//! single Frank-Wolfe step in the dual. That step only needs the gradient
//! `delta` of the selected dual direction and the regularizer gradient `r`,
//! both available from one forward/backward pass, and the step-size `gamma`
//! comes in closed form. When `gamma == 1` the update is exactly SGD with
//! Nesterov momentum at learning rate `eta`.

use super::{Optimizer, StepDiagnostics};
use crate::autodiff::ParamVector;
use crate::error::{Error, Result};
use crate::losses::DirectionMode;
use crate::models::{ModelSpec, Sample};
use crate::proximal::{conditional_gradient_primal, single_step_gamma};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DfwConfig {
    /// Proximal coefficient, the only tuned hyper-parameter.
    pub eta: f64,
    pub momentum: f64,
    pub l2: f64,
    pub mode: DirectionMode,
}

impl DfwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "l2 must be nonnegative, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DfwState {
    w: ParamVector,
    /// Nesterov velocity, same layout as `w`.
    z: Vec<f64>,
    config: DfwConfig,
    step_count: usize,
}

impl DfwState {
    pub fn new(w: ParamVector, config: DfwConfig) -> Result<Self> {
        config.validate()?;
        let z = vec![0.0; w.len()];
        Ok(Self {
            w,
            z,
            config,
            step_count: 0,
        })
    }

    pub fn config(&self) -> &DfwConfig {
        &self.config
    }

    pub fn velocity(&self) -> &[f64] {
        &self.z
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }
}

impl Optimizer for DfwState {
    fn step(&mut self, batch: &[Sample], spec: &ModelSpec) -> Result<StepDiagnostics> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let DfwConfig {
            eta,
            momentum: mu,
            l2,
            mode,
        } = self.config;
        let pd = conditional_gradient_primal(spec, &self.w, batch, l2, mode)?;
        let gamma = single_step_gamma(&pd.r, &pd.delta, pd.loss_term, eta);
        let eta_gamma = eta * gamma;
        let mut w = self.w.as_slice().to_vec();
        let (r, delta) = (pd.r.as_slice(), pd.delta.as_slice());
        for i in 0..w.len() {
            // The initialization step -eta r of the dual solve is left out of
            // the velocity; only the move along the direction accumulates.
            self.z[i] = mu * self.z[i] - eta_gamma * (r[i] + delta[i]);
            w[i] = w[i] - eta * (r[i] + gamma * delta[i]) + mu * self.z[i];
        }
        self.w = ParamVector::new(w)?;
        self.step_count += 1;
        Ok(StepDiagnostics {
            loss: pd.hinge_loss,
            gamma: Some(gamma),
            switches: pd.switches,
            batch_size: batch.len(),
        })
    }

    fn params(&self) -> &ParamVector {
        &self.w
    }
}
