//! Benchmark harness for the `dfw` optimizers: synthetic and file-backed
//! datasets, seeded training runs with per-epoch metrics, and step-size
//! sensitivity sweeps.
//!
//! ```no_run
//! use dfw_bench::config::{OptimizerKind, RunConfig};
//! use dfw_bench::train::run_training;
//!
//! let run = run_training(&RunConfig::new(OptimizerKind::Dfw, 0.1)).unwrap();
//! println!("best val acc {:?}", run.best_val_acc());
//! ```

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod sweep;
pub mod train;

pub use error::{BenchError, Result};
