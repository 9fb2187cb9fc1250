//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node to a [`Tape`]; a node's inputs always
//! precede it, so the tape is a topological order and [`Tape::backward`]
//! is a single reverse sweep. Only the small op set the models need is
//! supported. Broadcasting exists in one form: a `1×d` row added to every
//! row of an `m×d` matrix.

use std::sync::Arc;

use crate::error::{Result, TnaError};
use crate::tensor::{exp, CsrMatrix, Matrix};

/// Default negative slope of [`Tape::leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.01;

/// Default epsilon of [`Tape::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<CsrMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Var, Var),
    Transpose(Var),
    Sum(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    /// Scalar computed outside the tape together with its gradient.
    Custom(Var, Matrix),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

/// Record of a computation, in execution order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: receives a gradient on `backward`.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf; `None` before `backward`, for
    /// constants, and for intermediate nodes.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TnaError::shape(op, sa, sb));
        }
        Ok(())
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        let rg = self.any_grad(&[x]);
        self.push(value, rg, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// Product of a constant sparse matrix with a tracked dense one.
    pub fn spmm(&mut self, lhs: Arc<CsrMatrix>, b: Var) -> Result<Var> {
        let value = lhs.matmul(self.value(b))?;
        let rg = self.any_grad(&[b]);
        Ok(self.push(value, rg, Op::SpMM(lhs, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Hadamard(a, b)))
    }

    /// Adds a `1×d` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xs, rs) = (self.value(x).shape(), self.value(row).shape());
        if rs.0 != 1 || rs.1 != xs.1 {
            return Err(TnaError::shape("add_row", xs, rs));
        }
        let mut value = self.value(x).clone();
        let r = self.value(row).as_slice().to_vec();
        for i in 0..xs.0 {
            for (v, b) in value.row_mut(i).iter_mut().zip(&r) {
                *v += b;
            }
        }
        let rg = self.any_grad(&[x, row]);
        Ok(self.push(value, rg, Op::AddRow(x, row)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(
            x,
            |v| if v > 0.0 { v } else { slope * v },
            Op::LeakyRelu(x, slope),
        )
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Ln(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.rows() != mb.rows() {
            return Err(TnaError::shape("concat_cols", ma.shape(), mb.shape()));
        }
        let (p, q) = (ma.cols(), mb.cols());
        let mut value = Matrix::zeros(ma.rows(), p + q);
        for r in 0..ma.rows() {
            let out = value.row_mut(r);
            out[..p].copy_from_slice(ma.row(r));
            out[p..].copy_from_slice(mb.row(r));
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::ConcatCols(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        let rg = self.any_grad(&[x]);
        self.push(value, rg, Op::Transpose(x))
    }

    /// Sum of all entries as a `1×1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        self.push(value, rg, Op::Sum(x))
    }

    /// Row-wise normalisation to zero mean and unit population variance,
    /// followed by the affine map `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xs = self.value(x).shape();
        for p in [gain, bias] {
            let ps = self.value(p).shape();
            if ps != (1, xs.1) {
                return Err(TnaError::shape("layer_norm", xs, ps));
            }
        }
        if xs.1 == 0 {
            return Err(TnaError::contract("layer_norm needs at least one column"));
        }
        let d = xs.1 as f64;
        let input = self.value(x);
        let g = self.value(gain).as_slice();
        let b = self.value(bias).as_slice();
        let mut normalized = Matrix::zeros(xs.0, xs.1);
        let mut value = Matrix::zeros(xs.0, xs.1);
        let mut inv_std = Vec::with_capacity(xs.0);
        for r in 0..xs.0 {
            let row = input.row(r);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            let nrow = normalized.row_mut(r);
            for (n, v) in nrow.iter_mut().zip(row) {
                *n = (v - mean) * is;
            }
            let nrow = normalized.row(r).to_vec();
            for (c, o) in value.row_mut(r).iter_mut().enumerate() {
                *o = g[c] * nrow[c] + b[c];
            }
        }
        let rg = self.any_grad(&[x, gain, bias]);
        Ok(self.push(
            value,
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        ))
    }

    /// Records a scalar whose value and gradient with respect to `input`
    /// were computed by a fused kernel outside the tape.
    pub fn custom_scalar(&mut self, input: Var, value: f64, grad: Matrix) -> Result<Var> {
        let s = self.value(input).shape();
        if grad.shape() != s {
            return Err(TnaError::shape("custom_scalar", s, grad.shape()));
        }
        let rg = self.any_grad(&[input]);
        Ok(self.push(Matrix::scalar(value), rg, Op::Custom(input, grad)))
    }

    /// Clears all gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    /// Propagates d`loss`/d(node) to every node that depends on a trainable
    /// leaf. May run once per [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(TnaError::contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        if self.backward_done {
            return Err(TnaError::State(
                "backward already ran on this tape; call zero_grad first".into(),
            ));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            self.propagate(idx, &g);
            // Intermediate gradients are dropped once consumed; only leaves keep theirs.
            if matches!(self.nodes[idx].op, Op::Leaf) {
                self.nodes[idx].grad = Some(g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Matrix) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&delta),
            None => node.grad = Some(delta),
        }
    }

    fn propagate(&mut self, idx: usize, g: &Matrix) {
        // Split borrow: the node's own op and value are read while parents
        // are written, and parents always have smaller indices.
        let (before, rest) = self.nodes.split_at_mut(idx);
        let node = &rest[0];
        let val = |v: Var| &before[v.0].value;
        let mut deltas: Vec<(Var, Matrix)> = Vec::with_capacity(3);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if before[a.0].requires_grad {
                    deltas.push((*a, g.matmul_nt(val(*b))));
                }
                if before[b.0].requires_grad {
                    deltas.push((*b, val(*a).matmul_tn(g)));
                }
            }
            Op::SpMM(lhs, b) => deltas.push((*b, lhs.matmul_transposed(g))),
            Op::Add(a, b) => {
                deltas.push((*a, g.clone()));
                deltas.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                deltas.push((*a, g.clone()));
                deltas.push((*b, g.scale(-1.0)));
            }
            Op::Hadamard(a, b) => {
                if before[a.0].requires_grad {
                    deltas.push((*a, g.zip_map(val(*b), |x, y| x * y)));
                }
                if before[b.0].requires_grad {
                    deltas.push((*b, g.zip_map(val(*a), |x, y| x * y)));
                }
            }
            Op::AddRow(x, row) => {
                deltas.push((*x, g.clone()));
                if before[row.0].requires_grad {
                    let mut rg = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in rg.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    deltas.push((*row, rg));
                }
            }
            Op::Scale(x, c) => deltas.push((*x, g.scale(*c))),
            Op::AddScalar(x) => deltas.push((*x, g.clone())),
            Op::Sigmoid(x) => deltas.push((*x, g.zip_map(&node.value, |g, y| g * y * (1.0 - y)))),
            Op::Tanh(x) => deltas.push((*x, g.zip_map(&node.value, |g, y| g * (1.0 - y * y)))),
            Op::Relu(x) => {
                deltas.push((*x, g.zip_map(val(*x), |g, v| if v > 0.0 { g } else { 0.0 })))
            }
            Op::LeakyRelu(x, slope) => deltas.push((
                *x,
                g.zip_map(val(*x), |g, v| if v > 0.0 { g } else { slope * g }),
            )),
            Op::Exp(x) => deltas.push((*x, g.zip_map(&node.value, |g, y| g * y))),
            Op::Ln(x) => deltas.push((*x, g.zip_map(val(*x), |g, v| g / v))),
            Op::Clamp(x, lo, hi) => deltas.push((
                *x,
                g.zip_map(val(*x), |g, v| if v >= *lo && v <= *hi { g } else { 0.0 }),
            )),
            Op::ConcatCols(a, b) => {
                let p = val(*a).cols();
                let q = val(*b).cols();
                let mut ga = Matrix::zeros(g.rows(), p);
                let mut gb = Matrix::zeros(g.rows(), q);
                for r in 0..g.rows() {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..p]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[p..]);
                }
                deltas.push((*a, ga));
                deltas.push((*b, gb));
            }
            Op::Transpose(x) => deltas.push((*x, g.transpose())),
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                deltas.push((*x, Matrix::filled(r, c, g.item())));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let (rows, cols) = normalized.shape();
                let gain_v = val(*gain).as_slice();
                if before[x.0].requires_grad {
                    let d = cols as f64;
                    let mut gx = Matrix::zeros(rows, cols);
                    for (r, &is) in inv_std.iter().enumerate() {
                        let xhat = normalized.row(r);
                        let dxhat: Vec<f64> =
                            g.row(r).iter().zip(gain_v).map(|(g, w)| g * w).collect();
                        let sum_d: f64 = dxhat.iter().sum();
                        let sum_dx: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum();
                        for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                            *o = is / d * (d * dxhat[c] - sum_d - xhat[c] * sum_dx);
                        }
                    }
                    deltas.push((*x, gx));
                }
                let mut ggain = Matrix::zeros(1, cols);
                let mut gbias = Matrix::zeros(1, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let gv = g.get(r, c);
                        ggain.as_mut_slice()[c] += gv * normalized.get(r, c);
                        gbias.as_mut_slice()[c] += gv;
                    }
                }
                deltas.push((*gain, ggain));
                deltas.push((*bias, gbias));
            }
            Op::Custom(x, grad) => deltas.push((*x, grad.scale(g.item()))),
        }
        for (v, d) in deltas {
            self.accumulate(v, d);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let e = exp(-x.abs());
    let s = 1.0 / (1.0 + e);
    if x >= 0.0 {
        s
    } else {
        e * s
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    let e = exp(-2.0 * x.abs());
    ((1.0 - e) / (1.0 + e)).copysign(x)
}
