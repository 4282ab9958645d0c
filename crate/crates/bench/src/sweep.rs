//! Sensitivity of final accuracy to the step-size.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::{BenchError, Result};
use crate::metrics::format_sig6;
use crate::train::{run_training_on, RunStatus, TrainingRun};

pub const SWEEP_HEADER: &str = "eta,best_val_acc,final_train_acc,final_train_loss,error";

/// The grid `10^-3, ..., 10^0`.
pub fn default_grid() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    /// Best validation accuracy over the epochs that completed.
    pub best_val_acc: Option<f64>,
    pub final_train_acc: Option<f64>,
    pub final_train_loss: Option<f64>,
    /// Set when the run diverged or could not start.
    pub error: Option<String>,
}

/// Sorted grid with duplicates removed.
pub fn dedup_grid(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// One training run per distinct `eta`, in parallel.
pub fn sweep_runs(
    base: &RunConfig,
    data: &Dataset,
    grid: &[f64],
) -> Result<Vec<(f64, Result<TrainingRun>)>> {
    let grid = dedup_grid(grid);
    if grid.is_empty() {
        return Err(BenchError::Config("empty step-size grid".into()));
    }
    Ok(grid
        .into_par_iter()
        .map(|eta| {
            let config = RunConfig {
                eta,
                ..base.clone()
            };
            (eta, run_training_on(&config, data))
        })
        .collect())
}

pub fn summarize(eta: f64, run: &Result<TrainingRun>) -> SweepRow {
    match run {
        Ok(run) => SweepRow {
            eta,
            best_val_acc: run.best_val_acc(),
            final_train_acc: run.final_metrics().map(|m| m.train_acc),
            final_train_loss: run.final_metrics().map(|m| m.train_loss),
            error: match &run.status {
                RunStatus::Completed => None,
                RunStatus::Diverged { epoch, reason } => {
                    Some(format!("diverged in epoch {epoch}: {reason}"))
                }
            },
        },
        Err(e) => SweepRow {
            eta,
            best_val_acc: None,
            final_train_acc: None,
            final_train_loss: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs the sweep and collates one row per distinct `eta`, ascending.
pub fn sensitivity_sweep(base: &RunConfig, data: &Dataset, grid: &[f64]) -> Result<Vec<SweepRow>> {
    Ok(sweep_runs(base, data, grid)?
        .iter()
        .map(|(eta, run)| summarize(*eta, run))
        .collect())
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))?;
    let opt = |x: Option<f64>| x.map(format_sig6).unwrap_or_default();
    for r in rows {
        w.write_record([
            format_sig6(r.eta),
            opt(r.best_val_acc),
            opt(r.final_train_acc),
            opt(r.final_train_loss),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn emit_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_sweep(rows, std::io::BufWriter::new(file))
}
