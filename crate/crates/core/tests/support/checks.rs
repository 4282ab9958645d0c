//! Randomized checks shared by the per-property tests and the acceptance
//! target. Each returns the worst observed discrepancy so callers pick the
//! tolerance.

use dfw::autodiff::fd_gradient;
use dfw::losses::{
    augmented_scores, conditional_gradient_direction, select_direction, softmax_direction,
    DirectionMode, DirectionSource, Loss,
};
use dfw::models::{ModelSpec, Sample};
use dfw::objective::{objective_value, record_objective};
use dfw::optim::{
    BaselineConfig, BaselineKind, BaselineState, DfwConfig, DfwState, LrSchedule, Optimizer,
};
use dfw::proximal::{
    conditional_gradient_primal, dual_objective, optimal_step_size, proximal_fw_solve,
    single_step_gamma, DualVertex, FwOptions, ProximalState,
};
use dfw::ParamVector;
use rand::Rng;

use super::oracles::{dual_value, grid_dual_max, LinearSvmDual};
use super::{max_abs_diff, max_rel_err, random_batch, random_mlp, random_params, random_vec, rng};

/// Host-side forward pass of a ReLU MLP returning the scores and the
/// smallest absolute pre-activation seen in hidden layers.
pub fn mlp_forward(spec: &ModelSpec, w: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
    let layers = spec.layers();
    let mut h = x.to_vec();
    let mut closest = f64::INFINITY;
    for (li, l) in layers.iter().enumerate() {
        let mut out = vec![0.0; l.fan_out];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, hi) in h.iter().enumerate() {
                acc += hi * w[l.weight_offset + i * l.fan_out + j];
            }
            if let Some(b) = l.bias_offset {
                acc += w[b + j];
            }
            *o = acc;
        }
        if li + 1 < layers.len() {
            for o in &mut out {
                closest = closest.min(o.abs());
                *o = o.max(0.0);
            }
        }
        h = out;
    }
    (h, closest)
}

/// Distance of the batch from any kink of `rho + hinge o f`: hidden
/// pre-activations near zero or a near-tie between the top two augmented
/// scores.
fn kink_distance(spec: &ModelSpec, w: &[f64], batch: &[Sample]) -> f64 {
    let mut closest = f64::INFINITY;
    for s in batch {
        let (f, pre) = mlp_forward(spec, w, &s.features);
        closest = closest.min(pre);
        let mut b: Vec<f64> = (0..f.len())
            .map(|j| {
                if j == s.label {
                    0.0
                } else {
                    f[j] - f[s.label] + 1.0
                }
            })
            .collect();
        b.sort_by(|a, c| c.partial_cmp(a).unwrap());
        closest = closest.min(b[0] - b[1]);
    }
    closest
}

/// Worst max-norm relative error between the tape gradient and central
/// differences (`eps = 1e-5`) of the MLP hinge objective, over `count`
/// random configurations away from kinks.
pub fn gradient_rel_err(count: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..count {
        let mut g = rng(1000 + seed);
        let spec = random_mlp(&mut g);
        let batch = random_batch(&mut g, &spec, 4);
        let w = loop {
            let w = random_params(&mut g, &spec, 0.5);
            if kink_distance(&spec, w.as_slice(), &batch) > 1e-3 {
                break w;
            }
        };
        let l2 = 1e-2;
        let tape = record_objective(&spec, &w, &batch, Loss::Svm, l2).unwrap();
        let exact = tape.backward_grad().unwrap();
        let fd = fd_gradient(
            |v: &ParamVector| objective_value(&spec, v, &batch, Loss::Svm, l2),
            &w,
            1e-5,
        )
        .unwrap();
        worst = worst.max(max_rel_err(exact.as_slice(), fd.as_slice()));
    }
    worst
}

/// Worst absolute difference between `r + delta` (hinge argmax directions)
/// and the tape gradient of `rho + hinge o f`, over `count` random
/// (model, sample) pairs.
pub fn conditional_gradient_err(count: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..count {
        let mut g = rng(2000 + seed);
        let spec = random_mlp(&mut g);
        let batch = random_batch(&mut g, &spec, 1);
        let w = random_params(&mut g, &spec, 0.7);
        let l2 = g.random_range(0.0..0.1);
        let pd =
            conditional_gradient_primal(&spec, &w, &batch, l2, DirectionMode::Conditional).unwrap();
        let rd: Vec<f64> =
            pd.r.as_slice()
                .iter()
                .zip(pd.delta.as_slice())
                .map(|(a, b)| a + b)
                .collect();
        let tape = record_objective(&spec, &w, &batch, Loss::Svm, l2).unwrap();
        let reference = tape.backward_grad().unwrap();
        worst = worst.max(max_abs_diff(&rd, reference.as_slice()));
    }
    worst
}

pub struct StepSizeReport {
    /// `min(dual after closed-form step - best grid value)`.
    pub worst_margin: f64,
    pub all_in_unit_interval: bool,
}

/// Closed-form step against a `10^4`-point grid on random states and
/// vertices.
pub fn step_size_optimality(count: u64) -> StepSizeReport {
    let mut worst = f64::INFINITY;
    let mut in_range = true;
    for seed in 0..count {
        let mut g = rng(3000 + seed);
        let p = g.random_range(1..=8);
        let eta = 10f64.powf(g.random_range(-2.0..1.0));
        let w0 = random_vec(&mut g, p, 1.0);
        let disp = random_vec(&mut g, p, 1.0);
        let w: Vec<f64> = w0.iter().zip(&disp).map(|(a, b)| a + b).collect();
        let lambda = g.random_range(-2.0..2.0);
        let w_s = random_vec(&mut g, p, 2.0);
        let lambda_s = g.random_range(-2.0..3.0);
        let state = ProximalState::new(
            ParamVector::new(w0).unwrap(),
            ParamVector::new(w).unwrap(),
            lambda,
            eta,
        )
        .unwrap();
        let vertex = DualVertex {
            w_s: ParamVector::new(w_s.clone()).unwrap(),
            lambda_s,
        };
        let gamma = optimal_step_size(&state, &vertex);
        in_range &= (0.0..=1.0).contains(&gamma);
        // Evaluate the stepped objective with the same from-scratch formula
        // the grid uses.
        let moved: Vec<f64> = disp
            .iter()
            .zip(&w_s)
            .map(|(d, s)| (1.0 - gamma) * d + gamma * s)
            .collect();
        let after = dual_value(&moved, (1.0 - gamma) * lambda + gamma * lambda_s, eta);
        let grid = grid_dual_max(&disp, lambda, &w_s, lambda_s, eta, 10_000);
        worst = worst.min(after - grid);
        let stepped = dual_objective(&state.step_towards(&vertex, gamma).unwrap());
        worst = worst.min(stepped - grid);
    }
    StepSizeReport {
        worst_margin: worst,
        all_in_unit_interval: in_range,
    }
}

pub struct DualOracleReport {
    pub solver_dual: f64,
    pub oracle_dual: f64,
    /// Largest decrease between consecutive dual objectives.
    pub worst_decrease: f64,
    pub iterations: usize,
}

/// Multi-step solve on a 50-sample, 10-feature, 3-class linear SVM against
/// the accelerated projected-gradient oracle.
pub fn dual_oracle(seed: u64, oracle_iters: usize) -> DualOracleReport {
    let mut g = rng(4000 + seed);
    let (d, k, n) = (10, 3, 50);
    let spec = ModelSpec::linear(d, k);
    let batch: Vec<Sample> = (0..n)
        .map(|_| Sample::new(random_vec(&mut g, d, 1.0), g.random_range(0..k)))
        .collect();
    let w0 = random_params(&mut g, &spec, 0.3);
    let (eta, l2) = (1.0, 1e-2);
    let options = FwOptions {
        max_iters: 20_000,
        gap_tol: 1e-6,
        mode: DirectionMode::Conditional,
    };
    let (_, diag) = proximal_fw_solve(&spec, &w0, &batch, eta, l2, options).unwrap();
    let oracle = LinearSvmDual::new(d, k, w0.as_slice(), &batch, eta, l2).solve(oracle_iters);
    let worst_decrease = diag
        .dual_objectives
        .windows(2)
        .map(|p| p[0] - p[1])
        .fold(f64::NEG_INFINITY, f64::max);
    DualOracleReport {
        solver_dual: diag.final_dual(),
        oracle_dual: oracle,
        worst_decrease,
        iterations: diag.iterations,
    }
}

pub struct SgdEquivalenceReport {
    pub worst_diff: f64,
    /// Instances where every step clipped to `gamma = 1`.
    pub compared: usize,
}

/// DFW against SGD with Nesterov momentum (`lr = eta`) over three steps
/// where every DFW step-size clips to 1.
pub fn sgd_equivalence(count: u64) -> SgdEquivalenceReport {
    let mut worst = 0.0f64;
    let mut compared = 0;
    for seed in 0..count {
        let mut g = rng(5000 + seed);
        let spec = random_mlp(&mut g);
        let w = random_params(&mut g, &spec, 0.5);
        let eta = 10f64.powf(g.random_range(-4.0..-2.5));
        let mu = g.random_range(0.0..0.95);
        let l2 = if seed % 2 == 0 { 0.0 } else { 1e-4 };
        let mut dfw = DfwState::new(
            w.clone(),
            DfwConfig {
                eta,
                momentum: mu,
                l2,
                mode: DirectionMode::Conditional,
            },
        )
        .unwrap();
        let mut sgd = BaselineState::new(
            w,
            BaselineConfig {
                kind: BaselineKind::SgdNesterov,
                lr: eta,
                momentum: mu,
                l2,
                loss: Loss::Svm,
                schedule: LrSchedule::constant(),
            },
        )
        .unwrap();
        let mut all_clipped = true;
        for _ in 0..3 {
            let batch = random_batch(&mut g, &spec, 8);
            let diag = dfw.step(&batch, &spec).unwrap();
            sgd.step(&batch, &spec).unwrap();
            all_clipped &= diag.gamma == Some(1.0);
        }
        if all_clipped {
            compared += 1;
            worst = worst.max(max_abs_diff(
                dfw.params().as_slice(),
                sgd.params().as_slice(),
            ));
        }
    }
    SgdEquivalenceReport {
        worst_diff: worst,
        compared,
    }
}

pub struct SingleStepReport {
    pub gamma_diff: f64,
    pub update_diff: f64,
}

/// The multi-step solver's first iteration against the single-step
/// formulas, on random MLP mini-batches.
pub fn single_step_agreement(count: u64) -> SingleStepReport {
    let mut gamma_diff = 0.0f64;
    let mut update_diff = 0.0f64;
    for seed in 0..count {
        let mut g = rng(6000 + seed);
        let spec = random_mlp(&mut g);
        let n = g.random_range(1..=8);
        let batch = random_batch(&mut g, &spec, n);
        let w0 = random_params(&mut g, &spec, 0.5);
        let eta = 10f64.powf(g.random_range(-2.0..0.5));
        let l2 = g.random_range(0.0..0.05);
        let mode = if seed % 2 == 0 {
            DirectionMode::Conditional
        } else {
            DirectionMode::Smoothed
        };
        let pd = conditional_gradient_primal(&spec, &w0, &batch, l2, mode).unwrap();
        let state = ProximalState::initial(w0.clone(), &pd.r, eta).unwrap();
        let w_s: Vec<f64> =
            pd.r.as_slice()
                .iter()
                .zip(pd.delta.as_slice())
                .map(|(r, d)| -eta * (r + d))
                .collect();
        let vertex = DualVertex {
            w_s: ParamVector::new(w_s).unwrap(),
            lambda_s: pd.loss_term,
        };
        let general = optimal_step_size(&state, &vertex);
        let single = single_step_gamma(&pd.r, &pd.delta, pd.loss_term, eta);
        gamma_diff = gamma_diff.max((general - single).abs());

        let stepped = state.step_towards(&vertex, single).unwrap();
        let direct: Vec<f64> = w0
            .as_slice()
            .iter()
            .zip(pd.r.as_slice())
            .zip(pd.delta.as_slice())
            .map(|((w, r), d)| w - eta * (r + single * d))
            .collect();
        update_diff = update_diff.max(max_abs_diff(stepped.primal().as_slice(), &direct));
    }
    SingleStepReport {
        gamma_diff,
        update_diff,
    }
}

/// Counts violations of the smoothing switch rule over random score
/// vectors with `2..=10` classes.
pub fn smoothing_switch_violations(count: u64) -> usize {
    let mut g = rng(7000);
    let mut violations = 0;
    for _ in 0..count {
        let k = g.random_range(2..=10);
        let scale = 10f64.powf(g.random_range(-1.0..1.5));
        let scores = random_vec(&mut g, k, scale);
        let y = g.random_range(0..k);
        let b = augmented_scores(&scores, y);
        let s_ce = softmax_direction(&scores);
        let ascent = s_ce.dot(b.values()) > 0.0;
        let choice = select_direction(&b, &scores, DirectionMode::Smoothed);
        let ok = match choice.source {
            DirectionSource::Softmax => ascent && choice.direction == s_ce,
            DirectionSource::ConditionalGradient => {
                !ascent && choice.direction == conditional_gradient_direction(&b)
            }
        };
        violations += usize::from(!ok);
    }
    violations
}
