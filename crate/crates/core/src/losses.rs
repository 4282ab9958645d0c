//! Losses over score vectors and the dual search directions on the label
//! simplex.
//!
//! With the 0-1 task loss `Δ`, the multi-class hinge is the maximum of the
//! augmented scores `b_ȳ = f_ȳ - f_y + Δ(ȳ, y)`. A point `s` of the simplex
//! weights these entries; `s^T b` is linear in the scores, so its gradient
//! through the network is a single backward pass.

use crate::autodiff::{argmax_lowest, max_and_shifted_tail};

/// 0-1 task loss.
pub fn task_loss(ybar: usize, y: usize) -> f64 {
    if ybar == y {
        0.0
    } else {
        1.0
    }
}

/// `max(max_{ȳ != y} s_ȳ + 1 - s_y, 0)`.
pub fn hinge_loss(scores: &[f64], y: usize) -> f64 {
    scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &s)| s - scores[y] + 1.0)
        .fold(0.0, f64::max)
}

/// `log sum_k exp(s_k) - s_y`, max-shifted.
pub fn cross_entropy(scores: &[f64], y: usize) -> f64 {
    let (m, tail) = max_and_shifted_tail(scores);
    (m - scores[y]) + tail.ln_1p()
}

/// `b_ȳ = s_ȳ - s_y + Δ(ȳ, y)`; the entry at the true label is exactly 0.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedScores {
    values: Vec<f64>,
    label: usize,
}

impl AugmentedScores {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// The hinge loss, i.e. the largest entry.
    pub fn max(&self) -> f64 {
        self.values[argmax_lowest(&self.values)]
    }
}

pub fn augmented_scores(scores: &[f64], y: usize) -> AugmentedScores {
    let sy = scores[y];
    let values = scores
        .iter()
        .enumerate()
        .map(|(j, &s)| if j == y { 0.0 } else { s - sy + 1.0 })
        .collect();
    AugmentedScores { values, label: y }
}

/// A point of the probability simplex over labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexDirection {
    weights: Vec<f64>,
}

impl SimplexDirection {
    /// The indicator vector of label `index`.
    pub fn vertex(num_classes: usize, index: usize) -> Self {
        let mut weights = vec![0.0; num_classes];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Nonnegative entries summing to one within `tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.weights.iter().all(|&x| x >= 0.0)
            && (self.weights.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// Softmax of the raw scores.
pub fn softmax_direction(scores: &[f64]) -> SimplexDirection {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    SimplexDirection {
        weights: exps.into_iter().map(|e| e / z).collect(),
    }
}

/// Vertex at the argmax of `b` (lowest index on ties): the dual conditional
/// gradient of the hinge.
pub fn conditional_gradient_direction(b: &AugmentedScores) -> SimplexDirection {
    SimplexDirection::vertex(b.values.len(), argmax_lowest(&b.values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionMode {
    /// Softmax direction, falling back to the conditional gradient when it
    /// fails the ascent test.
    Smoothed,
    /// Always the conditional gradient.
    Conditional,
}

impl DirectionMode {
    /// Smoothed for four or more classes, conditional otherwise.
    pub fn default_for(num_classes: usize) -> Self {
        if num_classes >= 4 {
            DirectionMode::Smoothed
        } else {
            DirectionMode::Conditional
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionSource {
    Softmax,
    ConditionalGradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionChoice {
    pub direction: SimplexDirection,
    pub source: DirectionSource,
    /// Smoothed mode rejected the softmax point and fell back.
    pub switched: bool,
}

/// Picks the dual search direction for one sample.
///
/// In smoothed mode the softmax of `raw_scores` is kept when
/// `s_ce^T b > 0`, using the augmented scores at the current point in place
/// of the linearized ones; otherwise the conditional gradient vertex is
/// returned.
pub fn select_direction(
    b: &AugmentedScores,
    raw_scores: &[f64],
    mode: DirectionMode,
) -> DirectionChoice {
    debug_assert_eq!(b.values.len(), raw_scores.len());
    if mode == DirectionMode::Smoothed {
        let s_ce = softmax_direction(raw_scores);
        if s_ce.dot(&b.values) > 0.0 {
            return DirectionChoice {
                direction: s_ce,
                source: DirectionSource::Softmax,
                switched: false,
            };
        }
    }
    DirectionChoice {
        direction: conditional_gradient_direction(b),
        source: DirectionSource::ConditionalGradient,
        switched: mode == DirectionMode::Smoothed,
    }
}

/// Training loss for the baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// Multi-class hinge.
    Svm,
    CrossEntropy,
}

impl Loss {
    pub fn value(self, scores: &[f64], y: usize) -> f64 {
        match self {
            Loss::Svm => hinge_loss(scores, y),
            Loss::CrossEntropy => cross_entropy(scores, y),
        }
    }

    /// Gradient of the loss with respect to the scores, written as `s - 1_y`
    /// for the simplex point `s` that realizes it (hinge argmax vertex or
    /// softmax).
    pub fn score_gradient(self, scores: &[f64], y: usize) -> Vec<f64> {
        let s = match self {
            Loss::Svm => conditional_gradient_direction(&augmented_scores(scores, y)),
            Loss::CrossEntropy => softmax_direction(scores),
        };
        coefficients_minus_label(&s, y)
    }
}

/// `s - 1_y`, the coefficients of `s^T b` on the raw scores.
pub(crate) fn coefficients_minus_label(s: &SimplexDirection, y: usize) -> Vec<f64> {
    let mut c = s.weights.clone();
    c[y] -= 1.0;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn task_loss_is_zero_one() {
        assert_eq!(task_loss(2, 2), 0.0);
        assert_eq!(task_loss(0, 2), 1.0);
        assert_eq!((0..5).map(|yb| task_loss(yb, 3)).sum::<f64>(), 4.0);
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_loss(&[2.0, 0.0], 0), 0.0);
        assert_eq!(hinge_loss(&[0.0, 0.0, 0.0], 0), 1.0);
        // max(0.5 + 1 - 0.3, -0.2 + 1 - 0.3, 0) = 1.2
        assert!(close(hinge_loss(&[0.3, 0.5, -0.2], 0), 1.2, 1e-15));
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(close(cross_entropy(&[0.0, 0.0], 0), 2f64.ln(), 1e-15));
        assert!(close(cross_entropy(&[1.0, 1.0, 1.0], 2), 3f64.ln(), 1e-15));
        // log(1 + e^-20) computed without cancellation.
        let v = cross_entropy(&[10.0, -10.0], 0);
        assert!(close(v, (-20f64).exp().ln_1p(), 1e-20), "{v}");
        assert!(close(v, 2.0612e-9, 1e-13));
    }

    #[test]
    fn augmented_examples() {
        assert_eq!(augmented_scores(&[0.0, 0.0], 0).values(), &[0.0, 1.0]);
        assert_eq!(augmented_scores(&[2.0, 0.0], 0).values(), &[0.0, -1.0]);
        assert_eq!(augmented_scores(&[5.0, 0.0], 0).values(), &[0.0, -4.0]);
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_direction(&[0.0, 0.0, 0.0]);
        assert!(s.weights().iter().all(|&x| close(x, 1.0 / 3.0, 1e-15)));
        let s = softmax_direction(&[2f64.ln(), 0.0]);
        assert!(close(s.weights()[0], 2.0 / 3.0, 1e-15));
        assert!(close(s.weights()[1], 1.0 / 3.0, 1e-15));
        let s = softmax_direction(&[5.0, 0.0]);
        assert!(close(s.weights()[0], 0.993307, 1e-6));
        assert!(close(s.weights()[1], 0.006693, 1e-6));
    }

    #[test]
    fn conditional_gradient_examples() {
        let cg = |v: &[f64]| {
            conditional_gradient_direction(&AugmentedScores {
                values: v.to_vec(),
                label: 0,
            })
        };
        assert_eq!(cg(&[0.0, 1.0]).weights(), &[0.0, 1.0]);
        assert_eq!(cg(&[0.0, -4.0]).weights(), &[1.0, 0.0]);
        assert_eq!(cg(&[0.0, 0.0]).weights(), &[1.0, 0.0]);
    }

    #[test]
    fn switch_examples() {
        let b = augmented_scores(&[0.0, 0.0], 0);
        let c = select_direction(&b, &[0.0, 0.0], DirectionMode::Smoothed);
        assert_eq!(c.direction.weights(), &[0.5, 0.5]);
        assert_eq!(c.source, DirectionSource::Softmax);

        let b = augmented_scores(&[5.0, 0.0], 0);
        let c = select_direction(&b, &[5.0, 0.0], DirectionMode::Smoothed);
        assert!(close(
            softmax_direction(&[5.0, 0.0]).dot(b.values()),
            -0.0268,
            1e-4
        ));
        assert_eq!(c.direction.weights(), &[1.0, 0.0]);
        assert!(c.switched);

        let b = augmented_scores(&[0.0, 0.0], 0);
        let c = select_direction(&b, &[9.0, -3.0], DirectionMode::Conditional);
        assert_eq!(c.direction.weights(), &[0.0, 1.0]);
        assert!(!c.switched);
    }

    #[test]
    fn default_mode_by_class_count() {
        assert_eq!(DirectionMode::default_for(3), DirectionMode::Conditional);
        assert_eq!(DirectionMode::default_for(4), DirectionMode::Smoothed);
    }
}
