//! The training loop.

use std::time::Instant;

use dfw::losses::Loss;
use dfw::models::{init_params, record_scores, ModelSpec, Sample};
use dfw::optim::{BaselineConfig, BaselineState, DfwConfig, DfwState, Optimizer};
use dfw::ParamVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{OptimizerKind, RunConfig};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::metrics::EpochMetrics;

/// Rows per forward pass when evaluating a whole split.
const EVAL_CHUNK: usize = 1000;

/// Per-epoch sample order. Seeded from the run seed on its own ChaCha
/// stream, so it is independent of parameter initialization and identical
/// across optimizers.
pub struct Shuffler {
    rng: ChaCha8Rng,
    n: usize,
}

impl Shuffler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self { rng, n }
    }

    pub fn next_epoch(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut self.rng);
        order
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    /// A step produced a non-finite loss or parameters.
    Diverged {
        epoch: usize,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRun {
    /// One record per completed epoch.
    pub metrics: Vec<EpochMetrics>,
    pub status: RunStatus,
    pub params: ParamVector,
}

impl TrainingRun {
    pub fn best_val_acc(&self) -> Option<f64> {
        self.metrics.iter().map(|m| m.val_acc).reduce(f64::max)
    }

    pub fn final_metrics(&self) -> Option<&EpochMetrics> {
        self.metrics.last()
    }
}

/// Mean loss and accuracy of `w` on `samples`.
pub fn evaluate(
    spec: &ModelSpec,
    w: &ParamVector,
    samples: &[Sample],
    loss: Loss,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let graph = record_scores(spec, w, chunk)?;
        for (i, s) in chunk.iter().enumerate() {
            let row = graph.row(i);
            total += loss.value(row, s.label);
            correct += usize::from(predict(row) == s.label);
        }
    }
    let n = samples.len() as f64;
    Ok((total / n, correct as f64 / n))
}

/// Highest-scoring label, lowest index on ties.
pub fn predict(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

fn build_optimizer(
    config: &RunConfig,
    spec: &ModelSpec,
    w: ParamVector,
) -> Result<Box<dyn Optimizer>> {
    Ok(match config.optimizer.baseline() {
        None => Box::new(DfwState::new(
            w,
            DfwConfig {
                eta: config.eta,
                momentum: config.momentum,
                l2: config.l2,
                mode: config.direction_mode(spec.num_classes),
            },
        )?),
        Some(kind) => Box::new(BaselineState::new(
            w,
            BaselineConfig {
                kind,
                lr: config.eta,
                momentum: config.momentum,
                l2: config.l2,
                loss: config.loss,
                schedule: config.schedule(),
            },
        )?),
    })
}

/// Materializes the configured dataset and trains on it.
pub fn run_training(config: &RunConfig) -> Result<TrainingRun> {
    config.validate()?;
    let data = config.dataset.materialize(config.seed)?;
    run_training_on(config, &data)
}

/// Trains on an already materialized dataset; `config.dataset` is ignored.
pub fn run_training_on(config: &RunConfig, data: &Dataset) -> Result<TrainingRun> {
    config.validate()?;
    let spec = config.model.spec(data.input_dim, data.num_classes);
    spec.validate()?;
    let mut opt = build_optimizer(config, &spec, init_params(&spec, config.seed))?;
    let mut shuffler = Shuffler::new(data.train.len(), config.seed);
    let is_dfw = config.optimizer == OptimizerKind::Dfw;
    let start = Instant::now();
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        opt.set_epoch(epoch);
        let (mut gamma_sum, mut steps, mut switches, mut seen) = (0.0, 0usize, 0usize, 0usize);
        for ids in shuffler.next_epoch().chunks(config.batch_size) {
            batch.clear();
            batch.extend(ids.iter().map(|&i| data.train[i].clone()));
            let diag = match opt.step(&batch, &spec) {
                Ok(d) if d.loss.is_finite() => d,
                Ok(d) => return Ok(diverged(metrics, epoch, format!("loss {}", d.loss), opt)),
                Err(e) => return Ok(diverged(metrics, epoch, e.to_string(), opt)),
            };
            gamma_sum += diag.gamma.unwrap_or(0.0);
            steps += 1;
            switches += diag.switches;
            seen += diag.batch_size;
        }
        let (train_loss, train_acc) = evaluate(&spec, opt.params(), &data.train, config.loss)?;
        if !train_loss.is_finite() {
            return Ok(diverged(
                metrics,
                epoch,
                format!("train loss {train_loss}"),
                opt,
            ));
        }
        let (_, val_acc) = evaluate(&spec, opt.params(), &data.val, config.loss)?;
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            val_acc,
            mean_gamma: is_dfw.then(|| gamma_sum / steps as f64),
            switch_fraction: is_dfw.then(|| switches as f64 / seen as f64),
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainingRun {
        metrics,
        status: RunStatus::Completed,
        params: opt.params().clone(),
    })
}

fn diverged(
    metrics: Vec<EpochMetrics>,
    epoch: usize,
    reason: String,
    opt: Box<dyn Optimizer>,
) -> TrainingRun {
    TrainingRun {
        metrics,
        status: RunStatus::Diverged { epoch, reason },
        params: opt.params().clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffles_depend_only_on_seed() {
        let mut a = Shuffler::new(50, 3);
        let mut b = Shuffler::new(50, 3);
        let first = a.next_epoch();
        assert_eq!(first, b.next_epoch());
        assert_ne!(first, a.next_epoch());
        let mut sorted = first.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn predict_breaks_ties_low() {
        assert_eq!(predict(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(predict(&[0.0, 0.0]), 0);
    }
}
