//! Independent oracles for the proximal dual.

use dfw::models::Sample;

/// `-||d||^2 / (2 eta) + lambda`, evaluated from scratch.
pub fn dual_value(displacement: &[f64], lambda: f64, eta: f64) -> f64 {
    let sq: f64 = displacement.iter().map(|x| x * x).sum();
    -sq / (2.0 * eta) + lambda
}

/// Best dual objective over the grid `gamma in {0, 1/n, ..., 1}` along the
/// segment from the current state towards the vertex.
pub fn grid_dual_max(
    displacement: &[f64],
    lambda: f64,
    w_s: &[f64],
    lambda_s: f64,
    eta: f64,
    n: usize,
) -> f64 {
    (0..=n)
        .map(|i| {
            let g = i as f64 / n as f64;
            let d: Vec<f64> = displacement
                .iter()
                .zip(w_s)
                .map(|(di, ws)| (1.0 - g) * di + g * ws)
                .collect();
            dual_value(&d, (1.0 - g) * lambda + g * lambda_s, eta)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Dual of the proximal problem for a linear model, built from explicit
/// per-sample Jacobians.
///
/// Parameters follow the linear layout: the `d x k` weight matrix in
/// row-major order, then `k` biases. The regularizer is `(l2 / 2) ||W||^2`.
pub struct LinearSvmDual {
    d: usize,
    k: usize,
    eta: f64,
    r: Vec<f64>,
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
    /// Augmented scores at the anchor, per sample.
    b: Vec<Vec<f64>>,
}

impl LinearSvmDual {
    pub fn new(d: usize, k: usize, w0: &[f64], batch: &[Sample], eta: f64, l2: f64) -> Self {
        assert_eq!(w0.len(), d * k + k);
        let mut r = vec![0.0; w0.len()];
        for i in 0..d * k {
            r[i] = l2 * w0[i];
        }
        let scores = |x: &[f64]| -> Vec<f64> {
            (0..k)
                .map(|j| (0..d).map(|p| x[p] * w0[p * k + j]).sum::<f64>() + w0[d * k + j])
                .collect()
        };
        let b = batch
            .iter()
            .map(|s| {
                let f = scores(&s.features);
                (0..k)
                    .map(|j| f[j] - f[s.label] + if j == s.label { 0.0 } else { 1.0 })
                    .collect()
            })
            .collect();
        Self {
            d,
            k,
            eta,
            r,
            xs: batch.iter().map(|s| s.features.clone()).collect(),
            ys: batch.iter().map(|s| s.label).collect(),
            b,
        }
    }

    fn n(&self) -> f64 {
        self.xs.len() as f64
    }

    /// `sum_{i, j} c_ij G_i[j]` where `G_i[j]` is the gradient of score `j` of
    /// sample `i`.
    fn combine(&self, coeffs: &[Vec<f64>]) -> Vec<f64> {
        let (d, k) = (self.d, self.k);
        let mut out = vec![0.0; d * k + k];
        for (x, c) in self.xs.iter().zip(coeffs) {
            for j in 0..k {
                if c[j] == 0.0 {
                    continue;
                }
                for p in 0..d {
                    out[p * k + j] += c[j] * x[p];
                }
                out[d * k + j] += c[j];
            }
        }
        out
    }

    /// `G_i[j] . v` for every sample and label.
    fn project(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let (d, k) = (self.d, self.k);
        self.xs
            .iter()
            .map(|x| {
                (0..k)
                    .map(|j| (0..d).map(|p| x[p] * v[p * k + j]).sum::<f64>() + v[d * k + j])
                    .collect()
            })
            .collect()
    }

    /// `A alpha = eta (r + mean_i G_i^T (alpha_i - 1_{y_i}))`.
    pub fn a_alpha(&self, alpha: &[Vec<f64>]) -> Vec<f64> {
        let shifted: Vec<Vec<f64>> = alpha
            .iter()
            .zip(&self.ys)
            .map(|(a, &y)| {
                let mut c: Vec<f64> = a.iter().map(|v| v / self.n()).collect();
                c[y] -= 1.0 / self.n();
                c
            })
            .collect();
        self.combine(&shifted)
            .iter()
            .zip(&self.r)
            .map(|(g, r)| self.eta * (r + g))
            .collect()
    }

    pub fn objective(&self, alpha: &[Vec<f64>]) -> f64 {
        let aa = self.a_alpha(alpha);
        let lin: f64 = alpha
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
            / self.n();
        -aa.iter().map(|x| x * x).sum::<f64>() / (2.0 * self.eta) + lin
    }

    fn gradient(&self, alpha: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let aa = self.a_alpha(alpha);
        let ga = self.project(&aa);
        ga.iter()
            .zip(&self.b)
            .map(|(g, b)| {
                g.iter()
                    .zip(b)
                    .map(|(gj, bj)| (bj - gj) / self.n())
                    .collect()
            })
            .collect()
    }

    /// Largest eigenvalue of the (negated) dual Hessian, by power iteration.
    fn lipschitz(&self) -> f64 {
        let mut v: Vec<Vec<f64>> = (0..self.xs.len())
            .map(|i| {
                (0..self.k)
                    .map(|j| 1.0 + ((i * 7 + j * 3) % 5) as f64)
                    .collect()
            })
            .collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let norm = v.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            for row in &mut v {
                for x in row.iter_mut() {
                    *x /= norm;
                }
            }
            let mv = self.combine(&v);
            let back = self.project(&mv);
            let scale = self.eta / (self.n() * self.n());
            v = back
                .into_iter()
                .map(|row| row.into_iter().map(|x| x * scale).collect())
                .collect();
            lambda = v.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        }
        lambda
    }

    /// Accelerated projected-gradient ascent from the dual corner
    /// `alpha_i = 1_{y_i}`; returns the best dual objective seen.
    pub fn solve(&self, iters: usize) -> f64 {
        let step = 1.0 / (1.01 * self.lipschitz());
        let start: Vec<Vec<f64>> = self
            .ys
            .iter()
            .map(|&y| {
                (0..self.k)
                    .map(|j| if j == y { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut x = start.clone();
        let mut y = start;
        let mut t = 1.0f64;
        let mut best = self.objective(&x);
        for _ in 0..iters {
            let g = self.gradient(&y);
            let next: Vec<Vec<f64>> = y
                .iter()
                .zip(&g)
                .map(|(yi, gi)| {
                    let moved: Vec<f64> = yi.iter().zip(gi).map(|(a, b)| a + step * b).collect();
                    project_simplex(&moved)
                })
                .collect();
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            y = next
                .iter()
                .zip(&x)
                .map(|(n, p)| {
                    let e: Vec<f64> = n.iter().zip(p).map(|(a, b)| a + beta * (a - b)).collect();
                    project_simplex(&e)
                })
                .collect();
            x = next;
            t = t_next;
            best = best.max(self.objective(&x));
        }
        best
    }
}
