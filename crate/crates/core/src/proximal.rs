//! Primal-dual proximal Frank-Wolfe.
//!
//! Each training step poses the proximal problem
//!
//! ```text
//! min_w  ||w - w0||^2 / (2 eta) + T_w0 rho(w) + mean_i hinge(T_w0 f_i(w), y_i)
//! ```
//!
//! where the model and the regularizer are linearized at `w0` but the hinge
//! is kept exact. Its dual is a concave quadratic over a product of label
//! simplices,
//!
//! ```text
//! max_alpha  -||A alpha||^2 / (2 eta) + b^T alpha,     w = w0 - A alpha,
//! ```
//!
//! so Frank-Wolfe with an exact line search applies: the step-size along a
//! vertex has a closed form, clipped to `[0, 1]`. The primal iterate `w` and
//! `lambda = b^T alpha` are the only state needed; `alpha` itself is never
//! stored.

use crate::autodiff::{dot, Gradient, ParamVector};
use crate::error::{Error, Result};
use crate::losses::{
    augmented_scores, coefficients_minus_label, conditional_gradient_direction, select_direction,
    AugmentedScores, DirectionMode, SimplexDirection,
};
use crate::models::{record_scores, ModelSpec, Sample, ScoreGraph};

/// Denominators below this are treated as zero and give a step-size of 0.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-24;

/// Iterate of the dual solve: anchor `w0`, current primal `w`,
/// `lambda = b^T alpha` and the proximal coefficient `eta`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximalState {
    w0: ParamVector,
    w: ParamVector,
    lambda: f64,
    eta: f64,
}

impl ProximalState {
    pub fn new(w0: ParamVector, w: ParamVector, lambda: f64, eta: f64) -> Result<Self> {
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "proximal coefficient must be positive, got {eta}"
            )));
        }
        if w0.len() != w.len() {
            return Err(Error::DimensionMismatch(format!(
                "anchor has {} slots, iterate has {}",
                w0.len(),
                w.len()
            )));
        }
        Ok(Self { w0, w, lambda, eta })
    }

    /// The dual corner `alpha_i = 1_{y_i}`: `w = w0 - eta r`, `lambda = 0`.
    pub fn initial(w0: ParamVector, r: &Gradient, eta: f64) -> Result<Self> {
        let w = w0
            .as_slice()
            .iter()
            .zip(r.as_slice())
            .map(|(a, g)| a - eta * g)
            .collect();
        Self::new(w0.clone(), ParamVector::new(w)?, 0.0, eta)
    }

    pub fn anchor(&self) -> &ParamVector {
        &self.w0
    }

    pub fn primal(&self) -> &ParamVector {
        &self.w
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `w - w0`.
    pub fn displacement(&self) -> Vec<f64> {
        self.w
            .as_slice()
            .iter()
            .zip(self.w0.as_slice())
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Moves to `(1 - gamma) w + gamma (w_s + w0)` and
    /// `(1 - gamma) lambda + gamma lambda_s`.
    pub fn step_towards(&self, vertex: &DualVertex, gamma: f64) -> Result<Self> {
        let w = self
            .w
            .as_slice()
            .iter()
            .zip(vertex.w_s.as_slice())
            .zip(self.w0.as_slice())
            .map(|((wt, ws), w0)| (1.0 - gamma) * wt + gamma * (ws + w0))
            .collect();
        Ok(Self {
            w0: self.w0.clone(),
            w: ParamVector::new(w)?,
            lambda: (1.0 - gamma) * self.lambda + gamma * vertex.lambda_s,
            eta: self.eta,
        })
    }
}

/// Primal image of a dual vertex `s`: `w_s = -A s`, `lambda_s = b^T s`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVertex {
    pub w_s: ParamVector,
    pub lambda_s: f64,
}

/// `-||w - w0||^2 / (2 eta) + lambda`.
pub fn dual_objective(state: &ProximalState) -> f64 {
    let d = state.displacement();
    -dot(&d, &d) / (2.0 * state.eta) + state.lambda
}

/// Exact maximiser of the dual along `s - alpha`, before clipping. `None`
/// when the direction is degenerate.
pub fn optimal_step_size_unclipped(state: &ProximalState, vertex: &DualVertex) -> Option<f64> {
    let d = state.displacement();
    let e: Vec<f64> = d
        .iter()
        .zip(vertex.w_s.as_slice())
        .map(|(di, ws)| di - ws)
        .collect();
    let den = dot(&e, &e);
    if den < DEGENERATE_DENOMINATOR {
        return None;
    }
    Some((dot(&e, &d) + state.eta * (vertex.lambda_s - state.lambda)) / den)
}

/// Closed-form optimal step-size along a dual vertex, clipped to `[0, 1]`.
pub fn optimal_step_size(state: &ProximalState, vertex: &DualVertex) -> f64 {
    optimal_step_size_unclipped(state, vertex).map_or(0.0, |g| g.clamp(0.0, 1.0))
}

/// Step-size of the single-step solve,
/// `(-eta delta^T r + loss_term) / (eta ||delta||^2)` clipped to `[0, 1]`.
pub fn single_step_gamma(r: &Gradient, delta: &Gradient, loss_term: f64, eta: f64) -> f64 {
    let nsq = delta.norm_sq();
    if nsq < DEGENERATE_DENOMINATOR {
        return 0.0;
    }
    ((-eta * delta.dot(r) + loss_term) / (eta * nsq)).clamp(0.0, 1.0)
}

/// Conditional-gradient quantities at `w_t` for one mini-batch.
#[derive(Clone, Debug)]
pub struct PrimalDirection {
    /// `l2 * w_t` on weight slots.
    pub r: Gradient,
    /// Gradient of `mean_i s_i^T b_i(w)` at `w_t`.
    pub delta: Gradient,
    /// `mean_i s_i^T b_i(w_t)`.
    pub loss_term: f64,
    /// Mean hinge loss at `w_t`.
    pub hinge_loss: f64,
    /// Samples where smoothed mode fell back to the conditional gradient.
    pub switches: usize,
    pub directions: Vec<SimplexDirection>,
}

/// Computes `r` and `delta` with one forward and one backward pass.
///
/// With the hinge argmax directions (conditional mode), `r + delta` is a
/// subgradient of `rho + mean hinge o f` at `w_t`.
pub fn conditional_gradient_primal(
    spec: &ModelSpec,
    w_t: &ParamVector,
    batch: &[Sample],
    l2: f64,
    mode: DirectionMode,
) -> Result<PrimalDirection> {
    let graph = record_scores(spec, w_t, batch)?;
    let n = batch.len() as f64;
    let mut directions = Vec::with_capacity(batch.len());
    let mut loss_term = 0.0;
    let mut hinge = 0.0;
    let mut switches = 0;
    for (i, sample) in batch.iter().enumerate() {
        let row = graph.row(i);
        let b = augmented_scores(row, sample.label);
        let choice = select_direction(&b, row, mode);
        loss_term += choice.direction.dot(b.values());
        hinge += b.max();
        switches += usize::from(choice.switched);
        directions.push(choice.direction);
    }
    let delta = pull_back_directions(&graph, batch, &directions)?;
    Ok(PrimalDirection {
        r: spec.l2_gradient(w_t, l2),
        delta,
        loss_term: loss_term / n,
        hinge_loss: hinge / n,
        switches,
        directions,
    })
}

/// Gradient of `mean_i s_i^T b_i(w)`: one backward pass with seed rows
/// `(s_i - 1_{y_i}) / B`.
pub(crate) fn pull_back_directions(
    graph: &ScoreGraph,
    batch: &[Sample],
    directions: &[SimplexDirection],
) -> Result<Gradient> {
    let rows = directions
        .iter()
        .zip(batch)
        .map(|(s, sample)| coefficients_minus_label(s, sample.label));
    pull_back_rows(graph, rows)
}

pub(crate) fn pull_back_rows(
    graph: &ScoreGraph,
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<Gradient> {
    let n = graph.batch_size() as f64;
    let mut seed = Vec::with_capacity(graph.values().len());
    for row in rows {
        seed.extend(row.into_iter().map(|c| c / n));
    }
    graph.pullback(&seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FwOptions {
    /// Frank-Wolfe iterations after initialization; 0 returns the
    /// initialization.
    pub max_iters: usize,
    /// Stop once the Frank-Wolfe duality gap certificate is at most this.
    pub gap_tol: f64,
    pub mode: DirectionMode,
}

#[derive(Clone, Debug, Default)]
pub struct FwDiagnostics {
    /// Dual objective at initialization followed by one entry per step.
    pub dual_objectives: Vec<f64>,
    /// Frank-Wolfe gap measured before each step (and at termination).
    pub gaps: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Proximal primal objective at the returned point (without the constant
    /// `rho(w0)`).
    pub primal_objective: f64,
}

impl FwDiagnostics {
    pub fn final_dual(&self) -> f64 {
        *self.dual_objectives.last().expect("initial value recorded")
    }
}

/// Linearization of the scores around `w0` for a fixed batch.
struct LinearizedBatch<'a> {
    graph: ScoreGraph,
    batch: &'a [Sample],
    /// Augmented scores at `w0`.
    b0: Vec<AugmentedScores>,
    r: Gradient,
    eta: f64,
}

impl LinearizedBatch<'_> {
    /// `T_w0 f(w)` for every sample, flattened `B x |Y|`.
    fn linearized_scores(&self, displacement: &[f64]) -> Result<Vec<f64>> {
        let jd = self.graph.pushforward(displacement)?;
        Ok(self
            .graph
            .values()
            .iter()
            .zip(jd)
            .map(|(f, t)| f + t)
            .collect())
    }

    fn vertex(&self, directions: &[SimplexDirection]) -> Result<DualVertex> {
        let delta = pull_back_directions(&self.graph, self.batch, directions)?;
        let w_s = self
            .r
            .as_slice()
            .iter()
            .zip(delta.as_slice())
            .map(|(r, d)| -self.eta * (r + d))
            .collect();
        let lambda_s = directions
            .iter()
            .zip(&self.b0)
            .map(|(s, b)| s.dot(b.values()))
            .sum::<f64>()
            / self.batch.len() as f64;
        Ok(DualVertex {
            w_s: ParamVector::new(w_s)?,
            lambda_s,
        })
    }

    /// `||d||^2 / (2 eta) + r^T d + mean_i max(v_i)` at displacement `d`.
    fn primal_value(&self, displacement: &[f64]) -> Result<f64> {
        let k = self.graph.num_classes;
        let lin = self.linearized_scores(displacement)?;
        let loss: f64 = self
            .batch
            .iter()
            .enumerate()
            .map(|(i, s)| augmented_scores(&lin[i * k..(i + 1) * k], s.label).max())
            .sum::<f64>()
            / self.batch.len() as f64;
        Ok(dot(displacement, displacement) / (2.0 * self.eta)
            + dot(self.r.as_slice(), displacement)
            + loss)
    }
}

/// Solves the proximal problem at `w0` by Frank-Wolfe in the dual.
///
/// Returns the final primal iterate. The dual objective series in the
/// diagnostics is non-decreasing up to rounding.
pub fn proximal_fw_solve(
    spec: &ModelSpec,
    w0: &ParamVector,
    batch: &[Sample],
    eta: f64,
    l2: f64,
    options: FwOptions,
) -> Result<(ParamVector, FwDiagnostics)> {
    if eta.is_nan() || eta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "proximal coefficient must be positive, got {eta}"
        )));
    }
    let graph = record_scores(spec, w0, batch)?;
    let k = spec.num_classes;
    let b0 = batch
        .iter()
        .enumerate()
        .map(|(i, s)| augmented_scores(graph.row(i), s.label))
        .collect();
    let r = spec.l2_gradient(w0, l2);
    let lin = LinearizedBatch {
        graph,
        batch,
        b0,
        r,
        eta,
    };
    let mut state = ProximalState::initial(w0.clone(), &lin.r, eta)?;
    let mut diag = FwDiagnostics {
        dual_objectives: vec![dual_objective(&state)],
        ..Default::default()
    };

    for _ in 0..options.max_iters {
        let d = state.displacement();
        let scores = lin.linearized_scores(&d)?;
        let v: Vec<AugmentedScores> = batch
            .iter()
            .enumerate()
            .map(|(i, s)| augmented_scores(&scores[i * k..(i + 1) * k], s.label))
            .collect();

        let cg: Vec<SimplexDirection> = v.iter().map(conditional_gradient_direction).collect();
        let cg_vertex = lin.vertex(&cg)?;
        let gap = fw_gap(&state, &cg_vertex);
        diag.gaps.push(gap);
        if gap <= options.gap_tol {
            diag.converged = true;
            break;
        }

        let mut vertex = cg_vertex;
        let mut gamma = optimal_step_size(&state, &vertex);
        if options.mode == DirectionMode::Smoothed {
            let smoothed: Vec<SimplexDirection> = v
                .iter()
                .enumerate()
                .map(|(i, vi)| {
                    select_direction(vi, &scores[i * k..(i + 1) * k], options.mode).direction
                })
                .collect();
            if smoothed != cg {
                let candidate = lin.vertex(&smoothed)?;
                let g = optimal_step_size(&state, &candidate);
                // A zero step would stall the solve; keep the conditional
                // gradient in that case.
                if g > 0.0 {
                    vertex = candidate;
                    gamma = g;
                }
            }
        }

        state = state.step_towards(&vertex, gamma)?;
        diag.step_sizes.push(gamma);
        diag.dual_objectives.push(dual_objective(&state));
        diag.iterations += 1;
    }

    diag.primal_objective = lin.primal_value(&state.displacement())?;
    Ok((state.w, diag))
}

/// Frank-Wolfe duality gap `<grad D(alpha), s - alpha>` for the vertex `s`.
pub fn fw_gap(state: &ProximalState, vertex: &DualVertex) -> f64 {
    let d = state.displacement();
    let e: f64 = d
        .iter()
        .zip(vertex.w_s.as_slice())
        .map(|(di, ws)| (di - ws) * di)
        .sum();
    e / state.eta + vertex.lambda_s - state.lambda
}
