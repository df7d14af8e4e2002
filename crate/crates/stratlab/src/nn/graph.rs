//! Define-by-run reverse-mode autodiff over [`Tensor`]s.
//!
//! A [`Graph`] is a tape: every operation appends a node holding the forward
//! value and enough information to push gradients back to its parents. The op
//! set is exactly what the blocks in this crate need — this is not a general
//! autodiff library and does not try to be one.
//!
//! All forward evaluation happens eagerly when the op is recorded, so a graph
//! doubles as the forward-only evaluator (just never call `backward`).

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Input,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Elu(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    SumAll(Var),
    MeanAll(Var),
    SoftmaxCols(Var),
    LogSoftmaxCols(Var),
    SoftmaxRows(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    AddColBroadcast(Var, Var),
    AddRowBroadcast(Var, Var),
    Minimum(Var, Var),
    Maximum(Var, Var),
    Clamp(Var, f64, f64),
    /// Shift columns right by `d`, zero-filling on the left (causal shift).
    ShiftCols(Var, usize),
    Abs(Var),
    /// Row-major reinterpretation to a new shape of equal size.
    Reshape(Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node. Gradients are accumulated for every leaf; whether anyone
    /// reads them is the caller's business (parameters do, constants don't).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.input(t)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.input(Tensor::scalar(v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), t)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), |x, y| x / y);
        self.push(Op::Div(a, b), t)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), t)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a).transpose();
        self.push(Op::Transpose(a), t)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), t)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), t)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), t)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), t)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), t)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| if x > 0.0 { x } else { x.exp() - 1.0 });
        self.push(Op::Elu(a), t)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        self.push(Op::Softplus(a), t)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), t)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::ln);
        self.push(Op::Ln(a), t)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), t)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(Op::SumAll(a), t)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let t = Tensor::scalar(v.sum() / v.len() as f64);
        self.push(Op::MeanAll(a), t)
    }

    /// Softmax within each column (used for per-agent action distributions
    /// when actions are rows and agents are columns).
    pub fn softmax_cols(&mut self, a: Var) -> Var {
        let t = softmax_cols_value(self.value(a));
        self.push(Op::SoftmaxCols(a), t)
    }

    pub fn log_softmax_cols(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = Tensor::zeros(v.rows(), v.cols());
        for c in 0..v.cols() {
            let m = (0..v.rows()).map(|r| v.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
            let lse = (0..v.rows()).map(|r| (v.get(r, c) - m).exp()).sum::<f64>().ln() + m;
            for r in 0..v.rows() {
                out.set(r, c, v.get(r, c) - lse);
            }
        }
        self.push(Op::LogSoftmaxCols(a), out)
    }

    /// Softmax within each row (attention weights over neighbors).
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = Tensor::zeros(v.rows(), v.cols());
        for r in 0..v.rows() {
            let m = (0..v.cols()).map(|c| v.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for c in 0..v.cols() {
                denom += (v.get(r, c) - m).exp();
            }
            for c in 0..v.cols() {
                out.set(r, c, (v.get(r, c) - m).exp() / denom);
            }
        }
        self.push(Op::SoftmaxRows(a), out)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let rows: usize = parts.iter().map(|p| self.value(*p).rows()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut r0 = 0;
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.cols(), cols, "concat_rows col mismatch");
            for r in 0..v.rows() {
                for c in 0..cols {
                    out.set(r0 + r, c, v.get(r, c));
                }
            }
            r0 += v.rows();
        }
        self.push(Op::ConcatRows(parts.to_vec()), out)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                for c in 0..v.cols() {
                    out.set(r, c0 + c, v.get(r, c));
                }
            }
            c0 += v.cols();
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn slice_rows(&mut self, a: Var, r0: usize, r1: usize) -> Var {
        let v = self.value(a);
        assert!(r0 < r1 && r1 <= v.rows(), "slice_rows out of range");
        let mut out = Tensor::zeros(r1 - r0, v.cols());
        for r in r0..r1 {
            for c in 0..v.cols() {
                out.set(r - r0, c, v.get(r, c));
            }
        }
        self.push(Op::SliceRows(a, r0, r1), out)
    }

    pub fn slice_cols(&mut self, a: Var, c0: usize, c1: usize) -> Var {
        let v = self.value(a);
        assert!(c0 < c1 && c1 <= v.cols(), "slice_cols out of range");
        let mut out = Tensor::zeros(v.rows(), c1 - c0);
        for r in 0..v.rows() {
            for c in c0..c1 {
                out.set(r, c - c0, v.get(r, c));
            }
        }
        self.push(Op::SliceCols(a, c0, c1), out)
    }

    /// `(m x n) + (m x 1)`, the column vector added to every column.
    pub fn add_col_broadcast(&mut self, mat: Var, col: Var) -> Var {
        let m = self.value(mat);
        let c = self.value(col);
        assert_eq!(c.shape(), (m.rows(), 1), "add_col_broadcast shape mismatch");
        let mut out = m.clone();
        for r in 0..m.rows() {
            for cc in 0..m.cols() {
                out.set(r, cc, out.get(r, cc) + c.get(r, 0));
            }
        }
        self.push(Op::AddColBroadcast(mat, col), out)
    }

    /// `(m x n) + (1 x n)`, the row vector added to every row.
    pub fn add_row_broadcast(&mut self, mat: Var, row: Var) -> Var {
        let m = self.value(mat);
        let r = self.value(row);
        assert_eq!(r.shape(), (1, m.cols()), "add_row_broadcast shape mismatch");
        let mut out = m.clone();
        for rr in 0..m.rows() {
            for c in 0..m.cols() {
                out.set(rr, c, out.get(rr, c) + r.get(0, c));
            }
        }
        self.push(Op::AddRowBroadcast(mat, row), out)
    }

    /// Elementwise minimum; gradient routes to whichever side is smaller
    /// (ties go to the first argument).
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), f64::min);
        self.push(Op::Minimum(a, b), t)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip_map(self.value(b), f64::max);
        self.push(Op::Maximum(a, b), t)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), t)
    }

    /// Elementwise absolute value; subgradient 0 at 0.
    pub fn abs(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::abs);
        self.push(Op::Abs(a), t)
    }

    /// Row-major reshape; total size must match.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.value(a);
        assert_eq!(v.len(), rows * cols, "reshape size mismatch");
        let t = Tensor::from_vec(rows, cols, v.data().to_vec());
        self.push(Op::Reshape(a), t)
    }

    /// Causal shift: `y[:, t] = x[:, t - d]`, zeros for `t < d`.
    pub fn shift_cols(&mut self, a: Var, d: usize) -> Var {
        let v = self.value(a);
        let mut out = Tensor::zeros(v.rows(), v.cols());
        for r in 0..v.rows() {
            for c in d..v.cols() {
                out.set(r, c, v.get(r, c - d));
            }
        }
        self.push(Op::ShiftCols(a, d), out)
    }

    // ----- composite convenience ops -----

    /// Mean of squared entries (MSE against zero).
    pub fn mean_sq(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a);
        self.mean_all(sq)
    }

    /// Sum of squared entries.
    pub fn sum_sq(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a);
        self.sum_all(sq)
    }

    /// Reverse-mode sweep from a scalar loss. Returns one gradient slot per
    /// node; only leaf (`input`) slots are usually read.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::invalid_argument("backward expects a scalar loss"));
        }
        if !lv.item().is_finite() {
            return Err(Error::numeric(format!("non-finite loss: {}", lv.item())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    let ga = g.zip_map(bv, |x, y| x / y);
                    let yv = &node.value;
                    let gb_raw = g.zip_map(yv, |x, y| x * y);
                    let gb = gb_raw.zip_map(bv, |x, y| -x / y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Neg(a) => accumulate(&mut grads, *a, g.map(|x| -x)),
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose());
                    let gb = self.value(*a).transpose().matmul(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.map(|x| c * x)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Elu(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| {
                        if v > 0.0 {
                            x
                        } else {
                            x * v.exp()
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| x * sigmoid(v));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Ln(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| x / v);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sqrt(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x / (2.0 * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let s = g.item();
                    let av = self.value(*a);
                    accumulate(&mut grads, *a, Tensor::full(av.rows(), av.cols(), s));
                }
                Op::MeanAll(a) => {
                    let av = self.value(*a);
                    let s = g.item() / av.len() as f64;
                    accumulate(&mut grads, *a, Tensor::full(av.rows(), av.cols(), s));
                }
                Op::SoftmaxCols(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for c in 0..y.cols() {
                        let mut dot = 0.0;
                        for r in 0..y.rows() {
                            dot += g.get(r, c) * y.get(r, c);
                        }
                        for r in 0..y.rows() {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmaxCols(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for c in 0..y.cols() {
                        let gsum: f64 = (0..y.rows()).map(|r| g.get(r, c)).sum();
                        for r in 0..y.rows() {
                            ga.set(r, c, g.get(r, c) - y.get(r, c).exp() * gsum);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let mut dot = 0.0;
                        for c in 0..y.cols() {
                            dot += g.get(r, c) * y.get(r, c);
                        }
                        for c in 0..y.cols() {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut r0 = 0;
                    for p in parts {
                        let v = self.value(*p);
                        let mut gp = Tensor::zeros(v.rows(), v.cols());
                        for r in 0..v.rows() {
                            for c in 0..v.cols() {
                                gp.set(r, c, g.get(r0 + r, c));
                            }
                        }
                        r0 += v.rows();
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let v = self.value(*p);
                        let mut gp = Tensor::zeros(v.rows(), v.cols());
                        for r in 0..v.rows() {
                            for c in 0..v.cols() {
                                gp.set(r, c, g.get(r, c0 + c));
                            }
                        }
                        c0 += v.cols();
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::SliceRows(a, r0, _r1) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga.set(r0 + r, c, g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceCols(a, c0, _c1) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga.set(r, c0 + c, g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::AddColBroadcast(mat, col) => {
                    let cv = self.value(*col);
                    let mut gc = Tensor::zeros(cv.rows(), 1);
                    for r in 0..g.rows() {
                        let mut s = 0.0;
                        for c in 0..g.cols() {
                            s += g.get(r, c);
                        }
                        gc.set(r, 0, s);
                    }
                    accumulate(&mut grads, *mat, g);
                    accumulate(&mut grads, *col, gc);
                }
                Op::AddRowBroadcast(mat, row) => {
                    let rv = self.value(*row);
                    let mut gr = Tensor::zeros(1, rv.cols());
                    for c in 0..g.cols() {
                        let mut s = 0.0;
                        for r in 0..g.rows() {
                            s += g.get(r, c);
                        }
                        gr.set(0, c, s);
                    }
                    accumulate(&mut grads, *mat, g);
                    accumulate(&mut grads, *row, gr);
                }
                Op::Minimum(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = g.zip_map(&av.zip_map(bv, |x, y| if x <= y { 1.0 } else { 0.0 }), |x, m| x * m);
                    let gb = g.zip_map(&av.zip_map(bv, |x, y| if x <= y { 0.0 } else { 1.0 }), |x, m| x * m);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Maximum(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = g.zip_map(&av.zip_map(bv, |x, y| if x >= y { 1.0 } else { 0.0 }), |x, m| x * m);
                    let gb = g.zip_map(&av.zip_map(bv, |x, y| if x >= y { 0.0 } else { 1.0 }), |x, m| x * m);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_map(self.value(*a), |x, v| if v > *lo && v < *hi { x } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::ShiftCols(a, d) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        for c in 0..av.cols() - d {
                            ga.set(r, c, g.get(r, c + *d));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| {
                        if v > 0.0 {
                            x
                        } else if v < 0.0 {
                            -x
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let av = self.value(*a);
                    let ga = Tensor::from_vec(av.rows(), av.cols(), g.data().to_vec());
                    accumulate(&mut grads, *a, ga);
                }
            }
        }

        Ok(Gradients { slots: grads })
    }
}

/// Gradient slots aligned with graph node indices.
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a node; zero tensor if the node never
    /// received gradient (shape taken from `shape_like`).
    pub fn get(&self, v: Var, shape_like: &Tensor) -> Tensor {
        match &self.slots[v.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(shape_like.rows(), shape_like.cols()),
        }
    }

    pub fn get_opt(&self, v: Var) -> Option<&Tensor> {
        self.slots[v.0].as_ref()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_cols_value(v: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(v.rows(), v.cols());
    for c in 0..v.cols() {
        let m = (0..v.rows()).map(|r| v.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for r in 0..v.rows() {
            denom += (v.get(r, c) - m).exp();
        }
        for r in 0..v.rows() {
            out.set(r, c, (v.get(r, c) - m).exp() / denom);
        }
    }
    out
}
