//! Score functions `f(w, x)` with one score per label.
//!
//! Parameters are laid out layer by layer: the `fan_in x fan_out` weight
//! matrix in row-major order, followed by the `fan_out` bias entries. Only
//! weight slots are regularized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradient, ParamVector, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// `f(w, x) = W^T x + b`.
    Linear,
    /// Fully connected network with `activation` between layers.
    Mlp,
    /// `f(w, x) = (w^T x, 0)`: a bias-free binary model whose second score
    /// is pinned at zero. Used for hand-checkable worked examples.
    BinaryMargin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

/// Where one layer lives inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: Option<usize>,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Linear,
            input_dim,
            hidden_dims: Vec::new(),
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp,
            input_dim,
            hidden_dims,
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub fn binary_margin(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::BinaryMargin,
            input_dim,
            hidden_dims: Vec::new(),
            num_classes: 2,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        match self.kind {
            ModelKind::Linear if !self.hidden_dims.is_empty() => Err(Error::InvalidArgument(
                "linear model takes no hidden layers".into(),
            )),
            ModelKind::Mlp if self.hidden_dims.contains(&0) => Err(Error::InvalidArgument(
                "hidden layer widths must be positive".into(),
            )),
            ModelKind::BinaryMargin if self.num_classes != 2 || !self.hidden_dims.is_empty() => {
                Err(Error::InvalidArgument(
                    "binary margin model has exactly 2 classes and no hidden layers".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        if self.kind == ModelKind::BinaryMargin {
            return vec![LayerLayout {
                fan_in: self.input_dim,
                fan_out: 1,
                weight_offset: 0,
                bias_offset: None,
            }];
        }
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.num_classes);
        let mut offset = 0;
        dims.windows(2)
            .map(|d| {
                let layout = LayerLayout {
                    fan_in: d[0],
                    fan_out: d[1],
                    weight_offset: offset,
                    bias_offset: Some(offset + d[0] * d[1]),
                };
                offset += d[0] * d[1] + d[1];
                layout
            })
            .collect()
    }

    /// Parameter count `p`.
    pub fn num_params(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.fan_in * l.fan_out + l.bias_offset.map_or(0, |_| l.fan_out))
            .sum()
    }

    /// `rho(w) = (l2 / 2) ||W||^2` over weight slots.
    pub fn l2_penalty(&self, w: &ParamVector, l2: f64) -> f64 {
        let w = w.as_slice();
        let sq: f64 = self
            .weight_ranges()
            .map(|r| w[r].iter().map(|x| x * x).sum::<f64>())
            .sum();
        0.5 * l2 * sq
    }

    /// Gradient of [`ModelSpec::l2_penalty`]: `l2 * w` on weights, zero on
    /// biases.
    pub fn l2_gradient(&self, w: &ParamVector, l2: f64) -> Gradient {
        let mut r = Gradient::zeros(w.len());
        for range in self.weight_ranges() {
            for i in range {
                r.as_mut_slice()[i] = l2 * w.as_slice()[i];
            }
        }
        r
    }

    fn weight_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> {
        self.layers()
            .into_iter()
            .map(|l| l.weight_offset..l.weight_offset + l.fan_in * l.fan_out)
    }
}

/// A labelled example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Seeded initialisation: weights uniform in `±sqrt(1 / fan_in)`, biases
/// zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; spec.num_params()];
    for layer in spec.layers() {
        let bound = (1.0 / layer.fan_in as f64).sqrt();
        let n = layer.fan_in * layer.fan_out;
        for v in &mut w[layer.weight_offset..layer.weight_offset + n] {
            *v = rng.random_range(-bound..=bound);
        }
    }
    ParamVector::new(w).expect("uniform draws are finite")
}

/// Scores of a mini-batch recorded on a tape.
#[derive(Clone, Debug)]
pub struct ScoreGraph {
    pub tape: Tape,
    /// `B x |Y|` score matrix.
    pub scores: Var,
    /// Weight matrices, in layer order (the regularized parameters).
    pub weights: Vec<Var>,
    pub num_classes: usize,
}

impl ScoreGraph {
    pub fn batch_size(&self) -> usize {
        self.tape.shape(self.scores).0
    }

    pub fn values(&self) -> &[f64] {
        self.tape.value(self.scores)
    }

    /// Score row of sample `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.num_classes;
        &self.values()[i * k..(i + 1) * k]
    }

    /// Gradient of `sum_ij seed_ij f_j(w, x_i)`.
    pub fn pullback(&self, seed: &[f64]) -> Result<Gradient> {
        self.tape.vjp(self.scores, seed)
    }

    /// Directional derivative of the score matrix along `direction`.
    pub fn pushforward(&self, direction: &[f64]) -> Result<Vec<f64>> {
        self.tape.jvp(self.scores, direction)
    }
}

/// Records `f(w, x_i)` for every sample of `batch` on a fresh tape.
pub fn record_scores(spec: &ModelSpec, w: &ParamVector, batch: &[Sample]) -> Result<ScoreGraph> {
    spec.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if w.len() != spec.num_params() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} parameters, got {}",
            spec.num_params(),
            w.len()
        )));
    }
    let d = spec.input_dim;
    let mut x = Vec::with_capacity(batch.len() * d);
    for (i, s) in batch.iter().enumerate() {
        if s.features.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "sample {i} has {} features, model expects {d}",
                s.features.len()
            )));
        }
        if s.label >= spec.num_classes {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                num_classes: spec.num_classes,
            });
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("features of sample {i}")));
        }
        x.extend_from_slice(&s.features);
    }
    let mut tape = Tape::new(w);
    let mut h = tape.constant(batch.len(), d, x)?;
    let mut weights = Vec::new();
    let layers = spec.layers();
    if spec.kind == ModelKind::BinaryMargin {
        let wv = tape.param(0, d, 1)?;
        let embed = tape.constant(1, 2, vec![1.0, 0.0])?;
        let wm = tape.matmul(wv, embed)?;
        weights.push(wv);
        h = tape.matmul(h, wm)?;
    } else {
        for (li, layer) in layers.iter().enumerate() {
            let wm = tape.param(layer.weight_offset, layer.fan_in, layer.fan_out)?;
            weights.push(wm);
            h = tape.matmul(h, wm)?;
            if let Some(bo) = layer.bias_offset {
                let b = tape.param(bo, 1, layer.fan_out)?;
                h = tape.add_row(h, b)?;
            }
            if li + 1 < layers.len() {
                h = match spec.activation {
                    Activation::Relu => tape.relu(h),
                };
            }
        }
    }
    Ok(ScoreGraph {
        tape,
        scores: h,
        weights,
        num_classes: spec.num_classes,
    })
}

/// Scores of a single input plus the tape that produced them.
pub fn scores(spec: &ModelSpec, w: &ParamVector, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
    let graph = record_scores(spec, w, &[Sample::new(x.to_vec(), 0)])?;
    let values = graph.values().to_vec();
    Ok((values, graph.tape))
}
