//! Reverse-mode differentiation over a recorded tape of matrix operations.
//!
//! A [`Tape`] is built against a parameter vector: every node is evaluated
//! eagerly as it is recorded, so values are available immediately. The same
//! graph can be replayed at a different point with [`Tape::forward_eval`].
//! Nodes hold row-major matrices; a mini-batch of inputs is a `B x d`
//! constant and parameters enter through [`Tape::param`], which views a
//! contiguous slot range of the flat parameter vector as a matrix.
//!
//! Three sweeps are available over a recorded graph:
//!
//! - [`Tape::backward_grad`]: gradient of the scalar output,
//! - [`Tape::vjp`]: vector-Jacobian product of any node,
//! - [`Tape::jvp`]: Jacobian-vector product (forward tangent sweep).
//!
//! Kinks of piecewise-linear primitives use a fixed subgradient: `relu`
//! has derivative 0 at 0 and row maxima route the gradient to the lowest
//! index among tied maximisers.

use crate::error::{Error, Result};

/// Flattened model parameters with a fixed layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "parameter slot {i} is {}",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// A gradient, layout-aligned with the [`ParamVector`] it differentiates.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    values: Vec<f64>,
}

impl Gradient {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &Gradient) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }
}

impl AsRef<[f64]> for Gradient {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Handle to a node of a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Param { offset: usize },
    Const,
    MatMul(Var, Var),
    AddRow(Var, Var),
    SubCol(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Exp(Var),
    Log(Var),
    MaxRows(Var),
    SelectCols(Var, Vec<usize>),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    LogSumExpRows(Var),
}

impl Op {
    fn inputs(&self) -> [Option<Var>; 2] {
        use Op::*;
        match self {
            Param { .. } | Const => [None, None],
            MatMul(a, b) | AddRow(a, b) | SubCol(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => {
                [Some(*a), Some(*b)]
            }
            Scale(a, _)
            | Relu(a)
            | Exp(a)
            | Log(a)
            | MaxRows(a)
            | SelectCols(a, _)
            | SumRows(a)
            | Sum(a)
            | Mean(a)
            | LogSumExpRows(a) => [Some(*a), None],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    // Row maximisers for `MaxRows`, empty otherwise.
    argmax: Vec<usize>,
    needs_grad: bool,
}

/// Recorded computation graph over a flat parameter vector.
///
/// Tapes are plain values; they can be moved between threads but are used by
/// one thread at a time.
#[derive(Clone, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<f64>,
}

impl Tape {
    /// Starts an empty tape evaluated at `w`.
    pub fn new(w: &ParamVector) -> Self {
        Self {
            nodes: Vec::new(),
            params: w.as_slice().to_vec(),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Length of the parameter vector this tape reads from.
    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// The most recently recorded node.
    pub fn output(&self) -> Option<Var> {
        self.nodes.len().checked_sub(1).map(Var)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Views `rows * cols` parameter slots starting at `offset` as a matrix.
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> Result<Var> {
        let end = offset + rows * cols;
        if end > self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter slots {offset}..{end} exceed vector length {}",
                self.params.len()
            )));
        }
        Ok(self.push(Op::Param { offset }, rows, cols, true))
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "constant of shape {rows}x{cols} given {} values",
                data.len()
            )));
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            op: Op::Const,
            rows,
            cols,
            value: data,
            argmax: Vec::new(),
            needs_grad: false,
        });
        Ok(Var(idx))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(mismatch("matmul", (m, k), (k2, n)));
        }
        Ok(self.push(Op::MatMul(a, b), m, n, self.grad2(a, b)))
    }

    /// Adds the `1 x n` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(row) != (1, n) {
            return Err(mismatch("add_row", (m, n), self.shape(row)));
        }
        Ok(self.push(Op::AddRow(a, row), m, n, self.grad2(a, row)))
    }

    /// Subtracts the `m x 1` column `col` from every column of `a`.
    pub fn sub_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(col) != (m, 1) {
            return Err(mismatch("sub_col", (m, n), self.shape(col)));
        }
        Ok(self.push(Op::SubCol(a, col), m, n, self.grad2(a, col)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (m, n) = self.shape(a);
        self.push(Op::Scale(a, c), m, n, self.grad1(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a))
    }

    /// Row-wise maximum, `m x n -> m x 1`.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let (m, _) = self.shape(a);
        self.push(Op::MaxRows(a), m, 1, self.grad1(a))
    }

    /// Picks entry `indices[i]` of row `i`, `m x n -> m x 1`.
    pub fn select_cols(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let (m, n) = self.shape(a);
        if indices.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "select_cols on {m} rows given {} indices",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::DimensionMismatch(format!(
                "select_cols index {bad} out of range for {n} columns"
            )));
        }
        Ok(self.push(Op::SelectCols(a, indices), m, 1, self.grad1(a)))
    }

    /// Row sums, `m x n -> m x 1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (m, _) = self.shape(a);
        self.push(Op::SumRows(a), m, 1, self.grad1(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::Sum(a), 1, 1, self.grad1(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.push(Op::Mean(a), 1, 1, self.grad1(a))
    }

    /// Max-shifted `log sum exp` of each row, `m x n -> m x 1`.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let (m, _) = self.shape(a);
        self.push(Op::LogSumExpRows(a), m, 1, self.grad1(a))
    }

    /// Re-evaluates every node at `w` and returns the value of the output
    /// node.
    pub fn forward_eval(&mut self, w: &ParamVector) -> Result<&[f64]> {
        if w.len() != self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "tape records {} parameter slots, got vector of length {}",
                self.params.len(),
                w.len()
            )));
        }
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("empty tape".into()));
        }
        self.params.copy_from_slice(w.as_slice());
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Const) {
                continue;
            }
            let (value, argmax) = eval(&self.nodes[i], &self.nodes, &self.params);
            let node = &mut self.nodes[i];
            node.value = value;
            node.argmax = argmax;
        }
        Ok(&self.nodes[self.nodes.len() - 1].value)
    }

    /// Gradient of the scalar output node with respect to the parameters.
    pub fn backward_grad(&self) -> Result<Gradient> {
        let out = self
            .output()
            .ok_or_else(|| Error::InvalidArgument("empty tape".into()))?;
        let (rows, cols) = self.shape(out);
        if (rows, cols) != (1, 1) {
            return Err(Error::NotScalar { rows, cols });
        }
        self.vjp(out, &[1.0])
    }

    /// Vector-Jacobian product `seed^T d(out)/dw`.
    pub fn vjp(&self, out: Var, seed: &[f64]) -> Result<Gradient> {
        self.vjp_counted(out, seed).map(|(g, _)| g)
    }

    /// Like [`Tape::vjp`], also reporting how many nodes the reverse sweep
    /// visited.
    pub fn vjp_counted(&self, out: Var, seed: &[f64]) -> Result<(Gradient, usize)> {
        let node = &self.nodes[out.0];
        if seed.len() != node.value.len() {
            return Err(Error::DimensionMismatch(format!(
                "seed of length {} for node of shape {}x{}",
                seed.len(),
                node.rows,
                node.cols
            )));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        adj[out.0] = Some(seed.to_vec());
        let mut visited = 0;
        for i in (0..=out.0).rev() {
            visited += 1;
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.reverse_node(node, &g, &mut adj, &mut grad);
        }
        Ok((Gradient::new(grad), visited))
    }

    /// Jacobian-vector product `d(out)/dw · tangent`.
    pub fn jvp(&self, out: Var, tangent: &[f64]) -> Result<Vec<f64>> {
        if tangent.len() != self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "tangent of length {} for {} parameters",
                tangent.len(),
                self.params.len()
            )));
        }
        let mut tan: Vec<Option<Vec<f64>>> = Vec::with_capacity(out.0 + 1);
        for i in 0..=out.0 {
            let t = self.forward_tangent(&self.nodes[i], tangent, &tan);
            tan.push(t);
        }
        let n = &self.nodes[out.0];
        Ok(tan
            .pop()
            .flatten()
            .unwrap_or_else(|| vec![0.0; n.rows * n.cols]))
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, needs_grad: bool) -> Var {
        let mut node = Node {
            op,
            rows,
            cols,
            value: Vec::new(),
            argmax: Vec::new(),
            needs_grad,
        };
        let (value, argmax) = eval(&node, &self.nodes, &self.params);
        node.value = value;
        node.argmax = argmax;
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    fn grad1(&self, a: Var) -> bool {
        self.nodes[a.0].needs_grad
    }

    fn grad2(&self, a: Var, b: Var) -> bool {
        self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad
    }

    fn unary(&mut self, a: Var, op: Op) -> Var {
        let (m, n) = self.shape(a);
        self.push(op, m, n, self.grad1(a))
    }

    fn elementwise(&mut self, a: Var, b: Var, op: Op, name: &str) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(mismatch(name, sa, sb));
        }
        Ok(self.push(op, sa.0, sa.1, self.grad2(a, b)))
    }

    fn reverse_node(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>], grad: &mut [f64]) {
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let (m, n) = (node.rows, node.cols);
        match &node.op {
            Op::Param { offset } => {
                for (dst, &gi) in grad[*offset..*offset + g.len()].iter_mut().zip(g) {
                    *dst += gi;
                }
            }
            Op::Const => {}
            Op::MatMul(a, b) => {
                let k = self.nodes[a.0].cols;
                if needs(*a) {
                    let bv = val(*b);
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            da[i * k + p] = dot(grow, &bv[p * n..(p + 1) * n]);
                        }
                    }
                    accumulate(adj, *a, da);
                }
                if needs(*b) {
                    let av = val(*a);
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (d, &gj) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += aip * gj;
                            }
                        }
                    }
                    accumulate(adj, *b, db);
                }
            }
            Op::AddRow(a, row) => {
                if needs(*a) {
                    accumulate(adj, *a, g.to_vec());
                }
                if needs(*row) {
                    let mut dr = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            dr[j] += g[i * n + j];
                        }
                    }
                    accumulate(adj, *row, dr);
                }
            }
            Op::SubCol(a, col) => {
                if needs(*a) {
                    accumulate(adj, *a, g.to_vec());
                }
                if needs(*col) {
                    let dc = (0..m).map(|i| -g[i * n..(i + 1) * n].iter().sum::<f64>());
                    accumulate(adj, *col, dc.collect());
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    accumulate(adj, *a, g.to_vec());
                }
                if needs(*b) {
                    accumulate(adj, *b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    accumulate(adj, *a, g.to_vec());
                }
                if needs(*b) {
                    accumulate(adj, *b, g.iter().map(|x| -x).collect());
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let d = g.iter().zip(val(*b)).map(|(x, y)| x * y).collect();
                    accumulate(adj, *a, d);
                }
                if needs(*b) {
                    let d = g.iter().zip(val(*a)).map(|(x, y)| x * y).collect();
                    accumulate(adj, *b, d);
                }
            }
            Op::Scale(a, c) => accumulate(adj, *a, g.iter().map(|x| c * x).collect()),
            Op::Relu(a) => {
                let d = g
                    .iter()
                    .zip(val(*a))
                    .map(|(gi, &x)| if x > 0.0 { *gi } else { 0.0 })
                    .collect();
                accumulate(adj, *a, d);
            }
            Op::Exp(a) => {
                let d = g.iter().zip(&node.value).map(|(x, e)| x * e).collect();
                accumulate(adj, *a, d);
            }
            Op::Log(a) => {
                let d = g.iter().zip(val(*a)).map(|(x, v)| x / v).collect();
                accumulate(adj, *a, d);
            }
            Op::MaxRows(a) => {
                let cols = self.nodes[a.0].cols;
                let mut d = vec![0.0; m * cols];
                for (i, &j) in node.argmax.iter().enumerate() {
                    d[i * cols + j] = g[i];
                }
                accumulate(adj, *a, d);
            }
            Op::SelectCols(a, idx) => {
                let cols = self.nodes[a.0].cols;
                let mut d = vec![0.0; m * cols];
                for (i, &j) in idx.iter().enumerate() {
                    d[i * cols + j] = g[i];
                }
                accumulate(adj, *a, d);
            }
            Op::SumRows(a) => {
                let cols = self.nodes[a.0].cols;
                let d = (0..m * cols).map(|k| g[k / cols]).collect();
                accumulate(adj, *a, d);
            }
            Op::Sum(a) => {
                let len = self.nodes[a.0].value.len();
                accumulate(adj, *a, vec![g[0]; len]);
            }
            Op::Mean(a) => {
                let len = self.nodes[a.0].value.len();
                accumulate(adj, *a, vec![g[0] / len as f64; len]);
            }
            Op::LogSumExpRows(a) => {
                let cols = self.nodes[a.0].cols;
                let av = val(*a);
                let d = (0..m * cols)
                    .map(|k| g[k / cols] * (av[k] - node.value[k / cols]).exp())
                    .collect();
                accumulate(adj, *a, d);
            }
        }
    }

    fn forward_tangent(
        &self,
        node: &Node,
        tangent: &[f64],
        tan: &[Option<Vec<f64>>],
    ) -> Option<Vec<f64>> {
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        let t = |v: Var| tan[v.0].as_deref();
        if !node.needs_grad {
            return None;
        }
        if let [Some(a), b] = node.op.inputs() {
            if t(a).is_none() && b.is_none_or(|b| t(b).is_none()) {
                return None;
            }
        }
        let (m, n) = (node.rows, node.cols);
        let len = m * n;
        let out = match &node.op {
            Op::Param { offset } => tangent[*offset..*offset + len].to_vec(),
            Op::Const => return None,
            Op::MatMul(a, b) => {
                let k = self.nodes[a.0].cols;
                let mut c = vec![0.0; len];
                if let Some(ta) = t(*a) {
                    matmul_acc(ta, val(*b), &mut c, m, k, n);
                }
                if let Some(tb) = t(*b) {
                    matmul_acc(val(*a), tb, &mut c, m, k, n);
                }
                c
            }
            Op::AddRow(a, row) => {
                let mut c = t(*a).map_or_else(|| vec![0.0; len], <[f64]>::to_vec);
                if let Some(tr) = t(*row) {
                    for (k, ck) in c.iter_mut().enumerate() {
                        *ck += tr[k % n];
                    }
                }
                c
            }
            Op::SubCol(a, col) => {
                let mut c = t(*a).map_or_else(|| vec![0.0; len], <[f64]>::to_vec);
                if let Some(tc) = t(*col) {
                    for (k, ck) in c.iter_mut().enumerate() {
                        *ck -= tc[k / n];
                    }
                }
                c
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Add(..)) {
                    1.0
                } else {
                    -1.0
                };
                let mut c = t(*a).map_or_else(|| vec![0.0; len], <[f64]>::to_vec);
                if let Some(tb) = t(*b) {
                    for (ck, x) in c.iter_mut().zip(tb) {
                        *ck += sign * x;
                    }
                }
                c
            }
            Op::Mul(a, b) => {
                let mut c = vec![0.0; len];
                if let Some(ta) = t(*a) {
                    for ((ck, x), y) in c.iter_mut().zip(ta).zip(val(*b)) {
                        *ck += x * y;
                    }
                }
                if let Some(tb) = t(*b) {
                    for ((ck, x), y) in c.iter_mut().zip(val(*a)).zip(tb) {
                        *ck += x * y;
                    }
                }
                c
            }
            Op::Scale(a, s) => t(*a)?.iter().map(|x| s * x).collect(),
            Op::Relu(a) => t(*a)?
                .iter()
                .zip(val(*a))
                .map(|(ti, &x)| if x > 0.0 { *ti } else { 0.0 })
                .collect(),
            Op::Exp(a) => t(*a)?.iter().zip(&node.value).map(|(x, e)| x * e).collect(),
            Op::Log(a) => t(*a)?.iter().zip(val(*a)).map(|(x, v)| x / v).collect(),
            Op::MaxRows(a) => {
                let ta = t(*a)?;
                let cols = self.nodes[a.0].cols;
                node.argmax
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| ta[i * cols + j])
                    .collect()
            }
            Op::SelectCols(a, idx) => {
                let ta = t(*a)?;
                let cols = self.nodes[a.0].cols;
                idx.iter()
                    .enumerate()
                    .map(|(i, &j)| ta[i * cols + j])
                    .collect()
            }
            Op::SumRows(a) => {
                let ta = t(*a)?;
                let cols = self.nodes[a.0].cols;
                ta.chunks(cols).map(|r| r.iter().sum()).collect()
            }
            Op::Sum(a) => vec![t(*a)?.iter().sum()],
            Op::Mean(a) => {
                let ta = t(*a)?;
                vec![ta.iter().sum::<f64>() / ta.len() as f64]
            }
            Op::LogSumExpRows(a) => {
                let ta = t(*a)?;
                let cols = self.nodes[a.0].cols;
                let av = val(*a);
                (0..m)
                    .map(|i| {
                        (0..cols)
                            .map(|j| {
                                let k = i * cols + j;
                                (av[k] - node.value[i]).exp() * ta[k]
                            })
                            .sum()
                    })
                    .collect()
            }
        };
        Some(out)
    }
}

fn mismatch(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::DimensionMismatch(format!(
        "{op}: incompatible shapes {}x{} and {}x{}",
        a.0, a.1, b.0, b.1
    ))
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

// c += a (m x k) * b (k x n)
fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (cj, &bj) in crow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cj += aip * bj;
            }
        }
    }
}

fn eval(node: &Node, nodes: &[Node], params: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let val = |v: &Var| nodes[v.0].value.as_slice();
    let shape = |v: &Var| (nodes[v.0].rows, nodes[v.0].cols);
    let (m, n) = (node.rows, node.cols);
    let value = match &node.op {
        Op::Param { offset } => params[*offset..*offset + m * n].to_vec(),
        Op::Const => node.value.clone(),
        Op::MatMul(a, b) => {
            let k = shape(a).1;
            let mut c = vec![0.0; m * n];
            matmul_acc(val(a), val(b), &mut c, m, k, n);
            c
        }
        Op::AddRow(a, row) => {
            let r = val(row);
            val(a)
                .iter()
                .enumerate()
                .map(|(k, x)| x + r[k % n])
                .collect()
        }
        Op::SubCol(a, col) => {
            let c = val(col);
            val(a)
                .iter()
                .enumerate()
                .map(|(k, x)| x - c[k / n])
                .collect()
        }
        Op::Add(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x + y).collect(),
        Op::Sub(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x - y).collect(),
        Op::Mul(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x * y).collect(),
        Op::Scale(a, c) => val(a).iter().map(|x| c * x).collect(),
        Op::Relu(a) => val(a)
            .iter()
            .map(|&x| if x > 0.0 { x } else { 0.0 })
            .collect(),
        Op::Exp(a) => val(a).iter().map(|x| x.exp()).collect(),
        Op::Log(a) => val(a).iter().map(|x| x.ln()).collect(),
        Op::MaxRows(a) => {
            let cols = shape(a).1;
            let argmax: Vec<usize> = val(a).chunks(cols).map(argmax_lowest).collect();
            let v = val(a)
                .chunks(cols)
                .zip(&argmax)
                .map(|(r, &j)| r[j])
                .collect();
            return (v, argmax);
        }
        Op::SelectCols(a, idx) => {
            let cols = shape(a).1;
            let av = val(a);
            idx.iter()
                .enumerate()
                .map(|(i, &j)| av[i * cols + j])
                .collect()
        }
        Op::SumRows(a) => val(a).chunks(shape(a).1).map(|r| r.iter().sum()).collect(),
        Op::Sum(a) => vec![val(a).iter().sum()],
        Op::Mean(a) => {
            let av = val(a);
            vec![av.iter().sum::<f64>() / av.len() as f64]
        }
        Op::LogSumExpRows(a) => val(a).chunks(shape(a).1).map(log_sum_exp).collect(),
    };
    (value, Vec::new())
}

/// Index of the maximum entry, lowest index on ties.
pub(crate) fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let (m, tail) = max_and_shifted_tail(row);
    m + tail.ln_1p()
}

/// Row maximum and `sum_{k != argmax} exp(x_k - max)`, so that
/// `log sum exp = max + ln_1p(tail)` keeps full precision when one entry
/// dominates.
pub(crate) fn max_and_shifted_tail(row: &[f64]) -> (f64, f64) {
    let j = argmax_lowest(row);
    let m = row[j];
    let tail = row
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, x)| (x - m).exp())
        .sum();
    (m, tail)
}

/// Central finite-difference estimate of the gradient of `f` at `w`.
///
/// This is the test oracle for [`Tape::backward_grad`]; it shares no code
/// with the tape.
pub fn fd_gradient<F, E>(mut f: F, w: &ParamVector, epsilon: f64) -> Result<Gradient>
where
    F: FnMut(&ParamVector) -> std::result::Result<f64, E>,
    E: std::fmt::Display,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {epsilon}"
        )));
    }
    let eval_err = |e: E| Error::InvalidArgument(format!("function evaluation failed: {e}"));
    let mut probe = w.as_slice().to_vec();
    let mut grad = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let plus = f(&ParamVector::new(probe.clone())?).map_err(eval_err)?;
        probe[i] = orig - epsilon;
        let minus = f(&ParamVector::new(probe.clone())?).map_err(eval_err)?;
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(Gradient::new(grad))
}
