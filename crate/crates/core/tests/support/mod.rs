//! Test-only helpers: seeded random instances and independent oracles.
//!
//! Nothing here calls into the solver paths it is used to check.

#![allow(dead_code)]

pub mod checks;
pub mod oracles;

use dfw::models::{ModelSpec, Sample};
use dfw::ParamVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// MLP with `d <= 20`, one or two hidden layers of width `<= 32` and
/// `2..=10` classes.
pub fn random_mlp(rng: &mut ChaCha8Rng) -> ModelSpec {
    let d = rng.random_range(1..=20);
    let depth = rng.random_range(1..=2);
    let hidden = (0..depth).map(|_| rng.random_range(1..=32)).collect();
    let k = rng.random_range(2..=10);
    ModelSpec::mlp(d, hidden, k)
}

pub fn random_linear(rng: &mut ChaCha8Rng) -> ModelSpec {
    ModelSpec::linear(rng.random_range(1..=12), rng.random_range(2..=10))
}

pub fn random_batch(rng: &mut ChaCha8Rng, spec: &ModelSpec, n: usize) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            Sample::new(
                random_vec(rng, spec.input_dim, 2.0),
                rng.random_range(0..spec.num_classes),
            )
        })
        .collect()
}

pub fn random_params(rng: &mut ChaCha8Rng, spec: &ModelSpec, scale: f64) -> ParamVector {
    ParamVector::new(random_vec(rng, spec.num_params(), scale)).unwrap()
}

/// `||a - b||_inf / max(||a||_inf, ||b||_inf)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = inf(a).max(inf(b));
    if scale == 0.0 {
        0.0
    } else {
        inf(&diff) / scale
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
