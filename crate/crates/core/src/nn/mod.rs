//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! Every operation appends a node to the [`Tape`] and returns a [`Var`]
//! handle. Nodes are stored in creation order, which is a topological order,
//! so [`Tape::backward`] is a single reverse sweep. Gradients of shared
//! subexpressions accumulate.

mod adam;
mod params;

pub use adam::Adam;
pub use params::ParamSet;

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};
use thiserror::Error;

use crate::sparse::CsrMatrix;

pub type Matrix = Array2<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{0}: produced a non-finite value")]
    NonFinite(&'static str),
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("backward already ran on this tape; call reset_grads first")]
    BackwardTwice,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("row {row} out of range for {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("loss mask selects no rows")]
    EmptyMask,
    #[error("{0}: empty input list")]
    EmptyList(&'static str),
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<CsrMatrix>, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    MulConst(Var, Arc<Matrix>),
    ScaleRows(Var, Arc<Vec<f64>>),
    MulColumn(Var, Var),
    Relu(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Mean(Vec<Var>),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Arc<Vec<(usize, usize)>>,
        probs: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    backward_done: bool,
    check_finite: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape(m: &Matrix) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

impl Tape {
    /// Non-finite checking defaults to on in debug builds and off in release.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            check_finite: cfg!(debug_assertions),
        }
    }

    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape(self.value(v))
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input. Only leaves created with `requires_grad` (and
    /// nodes depending on them) receive gradients.
    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    fn push(&mut self, op_name: &'static str, value: Matrix, op: Op, parents: &[Var]) -> Result<Var, NnError> {
        if self.check_finite && value.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFinite(op_name));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(NnError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(NnError::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let value = self.value(a).dot(self.value(b));
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Constant sparse matrix times a dense node.
    pub fn spmm(&mut self, m: &Arc<CsrMatrix>, x: Var) -> Result<Var, NnError> {
        let sx = self.shape(x);
        if m.cols() != sx.0 {
            return Err(NnError::ShapeMismatch {
                op: "spmm",
                left: (m.rows(), m.cols()),
                right: sx,
            });
        }
        let value = m.mul_dense(self.value(x));
        self.push("spmm", value, Op::SpMM(Arc::clone(m), x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var, NnError> {
        let value = self.value(a) * k;
        self.push("scale", value, Op::Scale(a, k), &[a])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Elementwise product with a constant matrix (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, mask: Arc<Matrix>) -> Result<Var, NnError> {
        let (sa, sm) = (self.shape(a), shape(&mask));
        if sa != sm {
            return Err(NnError::ShapeMismatch {
                op: "mul_const",
                left: sa,
                right: sm,
            });
        }
        let value = self.value(a) * &*mask;
        self.push("mul_const", value, Op::MulConst(a, mask), &[a])
    }

    /// Row `i` multiplied by the constant `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: Arc<Vec<f64>>) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if factors.len() != sa.0 {
            return Err(NnError::ShapeMismatch {
                op: "scale_rows",
                left: sa,
                right: (factors.len(), 1),
            });
        }
        let mut value = self.value(a).clone();
        for (mut row, &f) in value.rows_mut().into_iter().zip(factors.iter()) {
            row *= f;
        }
        self.push("scale_rows", value, Op::ScaleRows(a, factors), &[a])
    }

    /// `a` (n×d) with row `i` multiplied by `c[i, 0]` (c is n×1).
    pub fn mul_column(&mut self, a: Var, c: Var) -> Result<Var, NnError> {
        let (sa, sc) = (self.shape(a), self.shape(c));
        if sc != (sa.0, 1) {
            return Err(NnError::ShapeMismatch {
                op: "mul_column",
                left: sa,
                right: sc,
            });
        }
        let value = self.value(a) * self.value(c);
        self.push("mul_column", value, Op::MulColumn(a, c), &[a, c])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NnError> {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push("relu", value, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NnError> {
        let value = self.value(a).mapv(f64::tanh);
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NnError> {
        let value = softmax_rows(self.value(a));
        self.push("softmax_rows", value, Op::SoftmaxRows(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts.first().ok_or(NnError::EmptyList("concat_cols"))?;
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(NnError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(first),
                    right: self.shape(p),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if start + len > sa.1 {
            return Err(NnError::ShapeMismatch {
                op: "slice_cols",
                left: sa,
                right: (sa.0, start + len),
            });
        }
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push("slice_cols", value, Op::SliceCols(a, start), &[a])
    }

    /// Elementwise mean of equally shaped nodes.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts.first().ok_or(NnError::EmptyList("mean"))?;
        let mut value = Matrix::zeros(self.shape(first));
        for &p in parts {
            self.same_shape("mean", first, p)?;
            value += self.value(p);
        }
        value /= parts.len() as f64;
        self.push("mean", value, Op::Mean(parts.to_vec()), parts)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NnError> {
        let value = Matrix::from_elem((1, 1), self.value(a).sum());
        self.push("sum", value, Op::Sum(a), &[a])
    }

    /// Mean negative log-likelihood of `targets` (row, class) under
    /// `softmax(logits)`, computed with the log-sum-exp shift.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Result<Var, NnError> {
        if targets.is_empty() {
            return Err(NnError::EmptyMask);
        }
        let (rows, classes) = self.shape(logits);
        for &(r, c) in targets {
            if r >= rows {
                return Err(NnError::RowOutOfRange { row: r, rows });
            }
            if c >= classes {
                return Err(NnError::LabelOutOfRange { label: c, classes });
            }
        }
        let z = self.value(logits);
        let mut probs = Matrix::zeros((rows, classes));
        let mut loss = 0.0;
        for &(r, c) in targets {
            let row = z.row(r);
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[c];
            for k in 0..classes {
                probs[[r, k]] = (row[k] - lse).exp();
            }
        }
        loss /= targets.len() as f64;
        let op = Op::CrossEntropy {
            logits,
            targets: Arc::new(targets.to_vec()),
            probs,
        };
        self.push("cross_entropy", Matrix::from_elem((1, 1), loss), op, &[logits])
    }

    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Populates gradients of `loss` with respect to every node that
    /// requires them.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if self.backward_done {
            return Err(NnError::BackwardTwice);
        }
        let sl = self.shape(loss);
        if sl != (1, 1) {
            return Err(NnError::NotScalar(sl));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Matrix::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                self.grads[i] = Some(g);
                continue;
            }
            let contributions = self.local_grads(i, &g);
            self.grads[i] = Some(g);
            for (parent, pg) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut self.grads[parent.0] {
                    Some(acc) => *acc += &pg,
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Matrix) -> Vec<(Var, Matrix)> {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &self.nodes[i].op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if needs(*a) {
                    out.push((*a, g.dot(&val(*b).t())));
                }
                if needs(*b) {
                    out.push((*b, val(*a).t().dot(g)));
                }
                out
            }
            Op::SpMM(m, x) => vec![(*x, m.transpose_mul_dense(g))],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Scale(a, k) => vec![(*a, g * *k)],
            Op::Mul(a, b) => vec![(*a, g * val(*b)), (*b, g * val(*a))],
            Op::MulConst(a, mask) => vec![(*a, g * &**mask)],
            Op::ScaleRows(a, f) => {
                let mut ga = g.clone();
                for (mut row, &k) in ga.rows_mut().into_iter().zip(f.iter()) {
                    row *= k;
                }
                vec![(*a, ga)]
            }
            Op::MulColumn(a, c) => {
                let ga = g * val(*c);
                let gc = (g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                vec![(*a, ga), (*c, gc)]
            }
            Op::Relu(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                });
                vec![(*a, ga)]
            }
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                vec![(*a, g * &y.mapv(|t| 1.0 - t * t))]
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut ga = g * y;
                let dots = ga.sum_axis(Axis(1));
                Zip::from(ga.rows_mut())
                    .and(y.rows())
                    .and(&dots)
                    .for_each(|mut row, yrow, &d| row.scaled_add(-d, &yrow));
                vec![(*a, ga)]
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let w = val(p).ncols();
                        let piece = g.slice(s![.., offset..offset + w]).to_owned();
                        offset += w;
                        (p, piece)
                    })
                    .collect()
            }
            Op::SliceCols(a, start) => {
                let mut ga = Matrix::zeros(val(*a).raw_dim());
                let w = g.ncols();
                ga.slice_mut(s![.., *start..*start + w]).assign(g);
                vec![(*a, ga)]
            }
            Op::Mean(parts) => {
                let share = g / parts.len() as f64;
                parts.iter().map(|&p| (p, share.clone())).collect()
            }
            Op::Sum(a) => vec![(*a, Matrix::from_elem(val(*a).raw_dim(), g[[0, 0]]))],
            Op::CrossEntropy { logits, targets, probs } => {
                let scale = g[[0, 0]] / targets.len() as f64;
                let mut gz = Matrix::zeros(val(*logits).raw_dim());
                for &(r, c) in targets.iter() {
                    for k in 0..gz.ncols() {
                        gz[[r, k]] += scale * probs[[r, k]];
                    }
                    gz[[r, c]] -= scale;
                }
                vec![(*logits, gz)]
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}
