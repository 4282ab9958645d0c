//! The regularized learning objective `rho(w) + mean_i L(f(w, x_i), y_i)`
//! recorded entirely from tape primitives.
//!
//! The optimizers never go through this path: they pull loss gradients back
//! through [`ScoreGraph`](crate::models::ScoreGraph) with a seed computed on
//! the host. Recording the whole objective gives an independent route for
//! checking those gradients.

use crate::autodiff::{ParamVector, Tape, Var};
use crate::error::Result;
use crate::losses::{task_loss, Loss};
use crate::models::{record_scores, ModelSpec, Sample};

/// Records the objective; the returned tape's output node is the scalar
/// objective value.
pub fn record_objective(
    spec: &ModelSpec,
    w: &ParamVector,
    batch: &[Sample],
    loss: Loss,
    l2: f64,
) -> Result<Tape> {
    let graph = record_scores(spec, w, batch)?;
    let mut tape = graph.tape;
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let per_sample = match loss {
        Loss::Svm => hinge_rows(&mut tape, graph.scores, &labels, spec.num_classes)?,
        Loss::CrossEntropy => {
            let lse = tape.log_sum_exp_rows(graph.scores);
            let fy = tape.select_cols(graph.scores, labels)?;
            tape.sub(lse, fy)?
        }
    };
    let data_term = tape.mean(per_sample);
    if l2 == 0.0 {
        return Ok(tape);
    }
    let mut reg: Option<Var> = None;
    for wm in graph.weights {
        let sq = tape.mul(wm, wm)?;
        let s = tape.sum(sq);
        reg = Some(match reg {
            Some(r) => tape.add(r, s)?,
            None => s,
        });
    }
    if let Some(r) = reg {
        let r = tape.scale(r, 0.5 * l2);
        tape.add(r, data_term)?;
    }
    Ok(tape)
}

/// `max_ȳ (f_ȳ - f_y + Δ(ȳ, y))` per row.
fn hinge_rows(tape: &mut Tape, scores: Var, labels: &[usize], k: usize) -> Result<Var> {
    let fy = tape.select_cols(scores, labels.to_vec())?;
    let diff = tape.sub_col(scores, fy)?;
    let margins = labels
        .iter()
        .flat_map(|&y| (0..k).map(move |j| task_loss(j, y)))
        .collect();
    let delta = tape.constant(labels.len(), k, margins)?;
    let b = tape.add(diff, delta)?;
    Ok(tape.max_rows(b))
}

/// Objective value computed directly from host-side losses, without a tape.
pub fn objective_value(
    spec: &ModelSpec,
    w: &ParamVector,
    batch: &[Sample],
    loss: Loss,
    l2: f64,
) -> Result<f64> {
    let graph = record_scores(spec, w, batch)?;
    let data: f64 = batch
        .iter()
        .enumerate()
        .map(|(i, s)| loss.value(graph.row(i), s.label))
        .sum::<f64>()
        / batch.len() as f64;
    Ok(spec.l2_penalty(w, l2) + data)
}
