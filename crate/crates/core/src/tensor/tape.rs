use std::sync::Arc;

use rand::Rng;

use super::{SegmentLayout, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    LeakyRelu(Var, f64),
    Elu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Cos(Var),
    Sin(Var),
    Dropout(Var, Vec<f64>),
    SoftmaxRows(Var),
    SegmentSoftmax(Var, Arc<SegmentLayout>),
    SegmentWeightedSum(Var, Var, Arc<SegmentLayout>),
    ComplexMul(Var, Var),
    Sum(Var),
    MeanRows(Var),
    RowDot(Var, Var),
    PickColumns(Var, Arc<[usize]>),
    LogClamped(Var, f64),
    LogSigmoid(Var, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records tensor operations for one forward pass.
///
/// Values are appended in evaluation order, so the node list is already a
/// topological order and [`Tape::backward`] is a single reverse sweep.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    train: bool,
    kinks: Vec<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::matrix(rows, cols, data).expect("internal shape bookkeeping")
}

/// `a (m x k) * b (k x n)`
fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a (m x n) * b^T` where `b` is `k x n`.
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            out[i * k + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T * b` where `a` is `m x k` and `b` is `m x n`.
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            train: false,
            kinks: Vec::new(),
        }
    }

    /// A tape in training mode; dropout is active only in this mode.
    pub fn training() -> Self {
        Self {
            train: true,
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
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

    /// Sign pattern of every nondifferentiable point met so far.
    ///
    /// Two evaluations with equal signatures took the same branch at every
    /// kink, so a finite difference between them is meaningful.
    pub fn kink_signature(&self) -> &[bool] {
        &self.kinks
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        let ng = self.ng(x);
        self.push(value, op, ng)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims(self.value(a));
        let (k2, n) = dims(self.value(b));
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} * {k2}x{n}")));
        }
        let out = matmul_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(mat(m, n, out), Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (r, c) = dims(t);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data()[i * c + j];
            }
        }
        let ng = self.ng(x);
        self.push(mat(c, r, out), Op::Transpose(x), ng)
    }

    /// `x * w^T`, the usual linear layer with `w` stored as `out x in`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let wt = self.transpose(w);
        self.matmul(x, wt)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if dims(self.value(a)) != dims(self.value(b)) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (r, c) = dims(self.value(a));
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(mat(r, c, out), op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    /// `x + b` with the `1 x c` row `b` added to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (r, c) = dims(self.value(x));
        if dims(self.value(b)) != (1, c) {
            return Err(Error::shape(
                "add_row",
                format!("{r}x{c} + {:?}", self.value(b).shape()),
            ));
        }
        let bv = self.value(b).data();
        let out = self
            .value(x)
            .data()
            .chunks(c.max(1))
            .flat_map(|row| row.iter().zip(bv).map(|(a, b)| a + b))
            .collect();
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(mat(r, c, out), Op::AddRow(x, b), ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    /// `x * s` with `s` a `1 x 1` tensor on the tape.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item().map_err(|_| {
            Error::shape("mul_scalar", format!("scale has shape {:?}", self.value(s).shape()))
        })?;
        let (r, c) = dims(self.value(x));
        let out = self.value(x).data().iter().map(|v| v * sv).collect();
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(mat(r, c, out), Op::MulScalar(x, s), ng))
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let r = self.value(first).rows();
        if xs.iter().any(|&x| self.value(x).rows() != r) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let total: usize = xs.iter().map(|&x| self.value(x).cols()).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &x in xs {
                out.extend_from_slice(self.value(x).row(i));
            }
        }
        let ng = xs.iter().any(|&x| self.ng(x));
        Ok(self.push(mat(r, total, out), Op::ConcatCols(xs.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let c = self.value(first).cols();
        if xs.iter().any(|&x| self.value(x).cols() != c) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let mut out = Vec::new();
        let mut r = 0;
        for &x in xs {
            out.extend_from_slice(self.value(x).data());
            r += self.value(x).rows();
        }
        let ng = xs.iter().any(|&x| self.ng(x));
        Ok(self.push(mat(r, c, out), Op::ConcatRows(xs.to_vec()), ng))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = dims(self.value(x));
        if start > end || end > c {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {c}")));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&self.value(x).row(i)[start..end]);
        }
        let ng = self.ng(x);
        Ok(self.push(mat(r, w, out), Op::SliceCols(x, start), ng))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = dims(self.value(x));
        if start > end || end > r {
            return Err(Error::shape("slice_rows", format!("{start}..{end} of {r}")));
        }
        let out = self.value(x).data()[start * c..end * c].to_vec();
        let ng = self.ng(x);
        Ok(self.push(mat(end - start, c, out), Op::SliceRows(x, start), ng))
    }

    /// Rows selected by index; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        let r = self.value(x).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {r}")));
        }
        let out = self.value(x).select_rows(&idx);
        let ng = self.ng(x);
        Ok(self.push(out, Op::GatherRows(x, idx), ng))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let signs: Vec<bool> = self.value(x).data().iter().map(|&v| v > 0.0).collect();
        self.kinks.extend(signs);
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    /// Exponential-linear unit with scale `alpha` on the negative side.
    pub fn elu(&mut self, x: Var, alpha: f64) -> Var {
        self.unary(
            x,
            |v| if v > 0.0 { v } else { alpha * v.exp_m1() },
            Op::Elu(x, alpha),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, f64::cos, Op::Cos(x))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, f64::sin, Op::Sin(x))
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - p)`.
    ///
    /// Identity when the tape is not in training mode or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout rate {p} not in [0, 1)")));
        }
        if !self.train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let (r, c) = dims(self.value(x));
        let out = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let ng = self.ng(x);
        Ok(self.push(mat(r, c, out), Op::Dropout(x, mask), ng))
    }

    /// Softmax across the columns of each row.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = dims(self.value(x));
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let ng = self.ng(x);
        self.push(mat(r, c, out), Op::SoftmaxRows(x), ng)
    }

    /// Softmax over the rows of each segment, independently per column.
    pub fn segment_softmax(&mut self, x: Var, layout: Arc<SegmentLayout>) -> Result<Var> {
        let (r, c) = dims(self.value(x));
        if layout.total() != r {
            return Err(Error::shape(
                "segment_softmax",
                format!("layout covers {} rows, input has {r}", layout.total()),
            ));
        }
        let xv = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for s in 0..layout.num_segments() {
            let seg = layout.segment(s);
            if seg.is_empty() {
                continue;
            }
            for j in 0..c {
                let m = seg.clone().map(|i| xv[i * c + j]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for i in seg.clone() {
                    let e = (xv[i * c + j] - m).exp();
                    out[i * c + j] = e;
                    z += e;
                }
                for i in seg.clone() {
                    out[i * c + j] /= z;
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(mat(r, c, out), Op::SegmentSoftmax(x, layout), ng))
    }

    /// Per segment `s` and head `k`: `sum_i weights[i, k] * values[i, :]`.
    ///
    /// `values` is `n x d`, `weights` is `n x K`; the output is
    /// `segments x (K * d)` with heads laid out head-major. Empty segments
    /// give zero rows.
    pub fn segment_weighted_sum(
        &mut self,
        values: Var,
        weights: Var,
        layout: Arc<SegmentLayout>,
    ) -> Result<Var> {
        let (n, d) = dims(self.value(values));
        let (nw, k) = dims(self.value(weights));
        if n != nw || layout.total() != n {
            return Err(Error::shape(
                "segment_weighted_sum",
                format!("values {n} rows, weights {nw} rows, layout {}", layout.total()),
            ));
        }
        let vv = self.value(values).data();
        let wv = self.value(weights).data();
        let segs = layout.num_segments();
        let mut out = vec![0.0; segs * k * d];
        for s in 0..segs {
            let orow = &mut out[s * k * d..(s + 1) * k * d];
            for i in layout.segment(s) {
                let vrow = &vv[i * d..(i + 1) * d];
                for h in 0..k {
                    let w = wv[i * k + h];
                    for (o, &v) in orow[h * d..(h + 1) * d].iter_mut().zip(vrow) {
                        *o += w * v;
                    }
                }
            }
        }
        let ng = self.ng(values) || self.ng(weights);
        Ok(self.push(
            mat(segs, k * d, out),
            Op::SegmentWeightedSum(values, weights, layout),
            ng,
        ))
    }

    /// Elementwise complex product. A row of even length `d` holds `d / 2`
    /// complex numbers: real parts first, imaginary parts second.
    ///
    /// `b` is either the same shape as `a` or a single row broadcast over
    /// the rows of `a`.
    pub fn complex_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, d) = dims(self.value(a));
        let (rb, db) = dims(self.value(b));
        if d % 2 != 0 {
            return Err(Error::shape("complex_mul", format!("odd row length {d}")));
        }
        if db != d || (rb != r && rb != 1) {
            return Err(Error::shape("complex_mul", format!("{r}x{d} with {rb}x{db}")));
        }
        let h = d / 2;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; r * d];
        for i in 0..r {
            let ar = &av[i * d..(i + 1) * d];
            let br = if rb == 1 { &bv[..d] } else { &bv[i * d..(i + 1) * d] };
            let o = &mut out[i * d..(i + 1) * d];
            for j in 0..h {
                let (x, y) = (ar[j], ar[j + h]);
                let (u, v) = (br[j], br[j + h]);
                o[j] = x * u - y * v;
                o[j + h] = x * v + y * u;
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(mat(r, d, out), Op::ComplexMul(a, b), ng))
    }

    /// Sum of all entries, as a `1 x 1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Column means, as a `1 x c` row. An empty input gives zeros.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let (r, c) = dims(self.value(x));
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c.max(1)) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        if r > 0 {
            for o in &mut out {
                *o /= r as f64;
            }
        }
        let ng = self.ng(x);
        self.push(mat(1, c, out), Op::MeanRows(x), ng)
    }

    /// Row-wise dot products of two equally shaped matrices, as `n x 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (r, c) = dims(self.value(a));
        let out = self
            .value(a)
            .data()
            .chunks(c.max(1))
            .zip(self.value(b).data().chunks(c.max(1)))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .take(r)
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(mat(r, 1, out), Op::RowDot(a, b), ng))
    }

    /// Picks column `cols[i]` of row `i`, giving an `n x 1` column.
    pub fn pick_columns(&mut self, x: Var, cols: Arc<[usize]>) -> Result<Var> {
        let (r, c) = dims(self.value(x));
        if cols.len() != r {
            return Err(Error::shape("pick_columns", format!("{} picks for {r} rows", cols.len())));
        }
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(Error::shape("pick_columns", format!("column {bad} of {c}")));
        }
        let out = cols.iter().enumerate().map(|(i, &j)| self.value(x).get(i, j)).collect();
        let ng = self.ng(x);
        Ok(self.push(mat(r, 1, out), Op::PickColumns(x, cols), ng))
    }

    /// `ln(max(x, floor))`.
    pub fn log_clamped(&mut self, x: Var, floor: f64) -> Var {
        let signs: Vec<bool> = self.value(x).data().iter().map(|&v| v > floor).collect();
        self.kinks.extend(signs);
        self.unary(x, |v| v.max(floor).ln(), Op::LogClamped(x, floor))
    }

    /// `max(ln(sigmoid(x)), ln(floor))`, computed stably.
    pub fn log_sigmoid(&mut self, x: Var, floor: f64) -> Var {
        let lf = floor.ln();
        let signs: Vec<bool> = self.value(x).data().iter().map(|&v| log_sigmoid(v) > lf).collect();
        self.kinks.extend(signs);
        self.unary(x, |v| log_sigmoid(v).max(lf), Op::LogSigmoid(x, lf))
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let gd = g.data();
        let val = |v: Var| &self.nodes[v.0].value;

        // Accumulate `delta` (same shape as the target) into `grads[v]`.
        let mut acc = |v: Var, delta: Vec<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(t) => {
                    for (a, d) in t.data_mut().iter_mut().zip(delta) {
                        *a += d;
                    }
                }
                slot @ None => {
                    let shape = self.nodes[v.0].value.shape().to_vec();
                    *slot = Some(Tensor::from_vec(shape, delta).expect("gradient shape"));
                }
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(val(*a));
                let n = val(*b).cols();
                if self.ng(*a) {
                    acc(*a, matmul_nt(gd, val(*b).data(), m, n, k));
                }
                if self.ng(*b) {
                    acc(*b, matmul_tn(val(*a).data(), gd, m, k, n));
                }
            }
            Op::Transpose(x) => {
                let (r, c) = dims(val(*x));
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] = gd[j * r + i];
                    }
                }
                acc(*x, d);
            }
            Op::Add(a, b) => {
                acc(*a, gd.to_vec());
                acc(*b, gd.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, gd.to_vec());
                acc(*b, gd.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                acc(*a, gd.iter().zip(bv).map(|(g, y)| g * y).collect());
                acc(*b, gd.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::AddRow(x, b) => {
                acc(*x, gd.to_vec());
                let c = out.cols();
                let mut db = vec![0.0; c];
                for row in gd.chunks(c.max(1)) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*b, db);
            }
            Op::Scale(x, s) => acc(*x, gd.iter().map(|v| v * s).collect()),
            Op::MulScalar(x, s) => {
                let sv = val(*s).data()[0];
                acc(*x, gd.iter().map(|v| v * sv).collect());
                let ds: f64 = gd.iter().zip(val(*x).data()).map(|(g, x)| g * x).sum();
                acc(*s, vec![ds]);
            }
            Op::ConcatCols(xs) => {
                let (r, total) = dims(out);
                let mut start = 0;
                for &x in xs {
                    let c = val(x).cols();
                    let mut d = Vec::with_capacity(r * c);
                    for i in 0..r {
                        d.extend_from_slice(&gd[i * total + start..i * total + start + c]);
                    }
                    acc(x, d);
                    start += c;
                }
            }
            Op::ConcatRows(xs) => {
                let mut start = 0;
                for &x in xs {
                    let n = val(x).len();
                    acc(x, gd[start..start + n].to_vec());
                    start += n;
                }
            }
            Op::SliceCols(x, start) => {
                let (r, c) = dims(val(*x));
                let w = out.cols();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    d[i * c + start..i * c + start + w].copy_from_slice(&gd[i * w..(i + 1) * w]);
                }
                acc(*x, d);
            }
            Op::SliceRows(x, start) => {
                let (r, c) = dims(val(*x));
                let mut d = vec![0.0; r * c];
                d[start * c..start * c + gd.len()].copy_from_slice(gd);
                acc(*x, d);
            }
            Op::GatherRows(x, idx) => {
                let (r, c) = dims(val(*x));
                let mut d = vec![0.0; r * c];
                for (k, &i) in idx.iter().enumerate() {
                    for (t, v) in d[i * c..(i + 1) * c].iter_mut().zip(&gd[k * c..(k + 1) * c]) {
                        *t += v;
                    }
                }
                acc(*x, d);
            }
            Op::LeakyRelu(x, slope) => {
                let d = gd
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, &v)| if v > 0.0 { *g } else { g * slope })
                    .collect();
                acc(*x, d);
            }
            Op::Elu(x, alpha) => {
                let d = gd
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, &v)| if v > 0.0 { *g } else { g * alpha * v.exp() })
                    .collect();
                acc(*x, d);
            }
            Op::Tanh(x) => {
                let d = gd.iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                acc(*x, d);
            }
            Op::Sigmoid(x) => {
                let d = gd.iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                acc(*x, d);
            }
            Op::Cos(x) => {
                let d = gd.iter().zip(val(*x).data()).map(|(g, v)| -g * v.sin()).collect();
                acc(*x, d);
            }
            Op::Sin(x) => {
                let d = gd.iter().zip(val(*x).data()).map(|(g, v)| g * v.cos()).collect();
                acc(*x, d);
            }
            Op::Dropout(x, mask) => {
                acc(*x, gd.iter().zip(mask).map(|(g, m)| g * m).collect());
            }
            Op::SoftmaxRows(x) => {
                let c = out.cols();
                let mut d = vec![0.0; out.len()];
                for ((drow, grow), yrow) in d
                    .chunks_mut(c.max(1))
                    .zip(gd.chunks(c.max(1)))
                    .zip(out.data().chunks(c.max(1)))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                    for ((dv, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *dv = y * (g - dot);
                    }
                }
                acc(*x, d);
            }
            Op::SegmentSoftmax(x, layout) => {
                let c = out.cols();
                let y = out.data();
                let mut d = vec![0.0; out.len()];
                for s in 0..layout.num_segments() {
                    let seg = layout.segment(s);
                    for j in 0..c {
                        let dot: f64 = seg.clone().map(|i| gd[i * c + j] * y[i * c + j]).sum();
                        for i in seg.clone() {
                            d[i * c + j] = y[i * c + j] * (gd[i * c + j] - dot);
                        }
                    }
                }
                acc(*x, d);
            }
            Op::SegmentWeightedSum(values, weights, layout) => {
                let (n, dd) = dims(val(*values));
                let k = val(*weights).cols();
                let vv = val(*values).data();
                let wv = val(*weights).data();
                let mut dv = vec![0.0; n * dd];
                let mut dw = vec![0.0; n * k];
                for s in 0..layout.num_segments() {
                    let grow = &gd[s * k * dd..(s + 1) * k * dd];
                    for i in layout.segment(s) {
                        let vrow = &vv[i * dd..(i + 1) * dd];
                        for h in 0..k {
                            let gh = &grow[h * dd..(h + 1) * dd];
                            let w = wv[i * k + h];
                            let mut dot = 0.0;
                            for ((t, &gv), &v) in dv[i * dd..(i + 1) * dd].iter_mut().zip(gh).zip(vrow) {
                                *t += w * gv;
                                dot += gv * v;
                            }
                            dw[i * k + h] = dot;
                        }
                    }
                }
                acc(*values, dv);
                acc(*weights, dw);
            }
            Op::ComplexMul(a, b) => {
                let (r, d) = dims(val(*a));
                let rb = val(*b).rows();
                let h = d / 2;
                let av = val(*a).data();
                let bv = val(*b).data();
                let mut da = vec![0.0; r * d];
                let mut db = vec![0.0; rb * d];
                for i in 0..r {
                    let ar = &av[i * d..(i + 1) * d];
                    let bo = if rb == 1 { 0 } else { i * d };
                    let br = &bv[bo..bo + d];
                    let g = &gd[i * d..(i + 1) * d];
                    for j in 0..h {
                        let (gr, gi) = (g[j], g[j + h]);
                        let (x, y) = (ar[j], ar[j + h]);
                        let (u, v) = (br[j], br[j + h]);
                        da[i * d + j] += gr * u + gi * v;
                        da[i * d + j + h] += -gr * v + gi * u;
                        db[bo + j] += gr * x + gi * y;
                        db[bo + j + h] += -gr * y + gi * x;
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::Sum(x) => {
                let g0 = gd[0];
                acc(*x, vec![g0; val(*x).len()]);
            }
            Op::MeanRows(x) => {
                let (r, c) = dims(val(*x));
                let inv = if r > 0 { 1.0 / r as f64 } else { 0.0 };
                let mut d = Vec::with_capacity(r * c);
                for _ in 0..r {
                    d.extend(gd.iter().map(|g| g * inv));
                }
                acc(*x, d);
            }
            Op::RowDot(a, b) => {
                let c = val(*a).cols();
                let (av, bv) = (val(*a).data(), val(*b).data());
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                for (i, &g) in gd.iter().enumerate() {
                    for j in 0..c {
                        da[i * c + j] = g * bv[i * c + j];
                        db[i * c + j] = g * av[i * c + j];
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::PickColumns(x, cols) => {
                let c = val(*x).cols();
                let mut d = vec![0.0; val(*x).len()];
                for (i, &j) in cols.iter().enumerate() {
                    d[i * c + j] = gd[i];
                }
                acc(*x, d);
            }
            Op::LogClamped(x, floor) => {
                let d = gd
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, &v)| if v > *floor { g / v } else { 0.0 })
                    .collect();
                acc(*x, d);
            }
            Op::LogSigmoid(x, lf) => {
                let d = gd
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, &v)| if log_sigmoid(v) > *lf { g * sigmoid(-v) } else { 0.0 })
                    .collect();
                acc(*x, d);
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` was not reached.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn softmax_oracle(xs: &[f64]) -> Vec<f64> {
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn single_element_segment_softmax_is_one() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::column_vector(vec![3.7]));
        let y = t.segment_softmax(x, Arc::new(SegmentLayout::single(1))).unwrap();
        assert_eq!(t.value(y).data(), &[1.0]);
    }

    #[test]
    fn segment_softmax_matches_scalar_loop() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::column_vector(vec![1.0, 2.0, 3.0]));
        let y = t.segment_softmax(x, Arc::new(SegmentLayout::single(3))).unwrap();
        let want = softmax_oracle(&[1.0, 2.0, 3.0]);
        for (a, b) in t.value(y).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((want[2] - 0.665_240_955_774_821_5).abs() < 1e-15);
    }

    #[test]
    fn segment_softmax_empty_segment_and_bad_layout() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::column_vector(vec![1.0, 2.0]));
        let layout = Arc::new(SegmentLayout::from_lengths([0, 2, 0]));
        let y = t.segment_softmax(x, layout).unwrap();
        let s: f64 = t.value(y).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(t.segment_softmax(x, Arc::new(SegmentLayout::single(3))).is_err());
    }

    #[test]
    fn complex_mul_by_i() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::row_vector(vec![1.0, 0.0]));
        let b = t.constant(Tensor::row_vector(vec![0.0, 1.0]));
        let c = t.complex_mul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[0.0, 1.0]);
        let odd = t.constant(Tensor::row_vector(vec![1.0, 2.0, 3.0]));
        assert!(t.complex_mul(odd, odd).is_err());
    }

    #[test]
    fn linear_map_gradient_is_input() {
        let mut t = Tape::new();
        let w = t.param(Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let x = t.constant(Tensor::column_vector(vec![1.0, -2.0, 0.5]));
        let y = t.matmul(w, x).unwrap();
        let l = t.sum(y);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(0.0));
        let y = t.sigmoid(x);
        let g = t.backward(y).unwrap();
        assert_eq!(t.value(y).data(), &[0.5]);
        assert_eq!(g.get(x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.param(Tensor::row_vector(vec![1.0, 2.0]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn backward_is_repeatable() {
        let build = || {
            let mut t = Tape::new();
            let w = t.param(Tensor::matrix(2, 2, vec![0.3, -0.1, 0.7, 0.2]).unwrap());
            let h = t.tanh(w);
            let l = t.sum(h);
            let g = t.backward(l).unwrap();
            g.get(w).unwrap().clone()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut t = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = t.constant(Tensor::row_vector(vec![1.0, 2.0, 3.0]));
        let y = t.dropout(x, 0.5, &mut rng).unwrap();
        assert_eq!(x, y);
        assert!(t.dropout(x, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dropout_is_unbiased() {
        let n = 16;
        let x = Tensor::row_vector((0..n).map(|i| 1.0 + i as f64 / 4.0).collect());
        let mut sum = vec![0.0; n];
        let trials = 10_000u64;
        for seed in 0..trials {
            let mut t = Tape::training();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = t.constant(x.clone());
            let y = t.dropout(v, 0.5, &mut rng).unwrap();
            for (s, v) in sum.iter_mut().zip(t.value(y).data()) {
                *s += v;
            }
        }
        let total_in: f64 = x.data().iter().sum();
        let total_mean: f64 = sum.iter().sum::<f64>() / trials as f64;
        assert!(((total_mean - total_in) / total_in).abs() < 0.01);
    }

    fn check<F>(shapes: &[(usize, usize)], seed: u64, f: F)
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<Tensor> = shapes.iter().map(|&(r, c)| rand_tensor(&mut rng, r, c)).collect();
        let report = grad_check(f, &params, &GradCheckOptions::default()).unwrap();
        assert!(report.checked > 0);
        assert!(report.max_rel_error < 1e-4, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn gradcheck_every_op() {
        let s = |t: &mut Tape, v: Var| -> Var {
            // weighted sum so that each output coordinate gets a distinct gradient
            let n = t.value(v).len();
            let (r, c) = (t.value(v).rows(), t.value(v).cols());
            let w = t.constant(
                Tensor::matrix(r, c, (0..n).map(|i| 0.3 + (i as f64 * 0.37).sin()).collect())
                    .unwrap(),
            );
            let m = t.mul(v, w).unwrap();
            t.sum(m)
        };
        check(&[(3, 4), (4, 2)], 1, |t, p| {
            let y = t.matmul(p[0], p[1])?;
            Ok(s(t, y))
        });
        check(&[(3, 4), (2, 4)], 2, |t, p| {
            let y = t.linear(p[0], p[1])?;
            Ok(s(t, y))
        });
        check(&[(3, 4), (3, 4)], 3, |t, p| {
            let a = t.add(p[0], p[1])?;
            let b = t.sub(a, p[1])?;
            let c = t.mul(b, p[1])?;
            Ok(s(t, c))
        });
        check(&[(3, 4), (1, 4), (1, 1)], 4, |t, p| {
            let a = t.add_row(p[0], p[1])?;
            let b = t.mul_scalar(a, p[2])?;
            let c = t.scale(b, -1.7);
            Ok(s(t, c))
        });
        check(&[(3, 2), (3, 3), (2, 3)], 5, |t, p| {
            let a = t.concat_cols(&[p[0], p[1]])?;
            let b = t.transpose(a);
            let c = t.concat_rows(&[b, p[2]])?;
            let d = t.slice_cols(c, 1, 3)?;
            let e = t.slice_rows(d, 2, 6)?;
            Ok(s(t, e))
        });
        check(&[(4, 3)], 6, |t, p| {
            let a = t.gather_rows(p[0], Arc::from(vec![2, 0, 2, 3, 1]))?;
            Ok(s(t, a))
        });
        check(&[(4, 3)], 7, |t, p| {
            let a = t.leaky_relu(p[0], 0.2);
            let b = t.elu(a, 1.0);
            let c = t.tanh(b);
            let d = t.sigmoid(c);
            let e = t.cos(d);
            let f = t.sin(e);
            Ok(s(t, f))
        });
        check(&[(4, 3)], 8, |t, p| {
            let a = t.softmax_rows(p[0]);
            Ok(s(t, a))
        });
        check(&[(6, 2)], 9, |t, p| {
            let layout = Arc::new(SegmentLayout::from_lengths([2, 0, 3, 1]));
            let a = t.segment_softmax(p[0], layout)?;
            Ok(s(t, a))
        });
        check(&[(6, 3), (6, 2)], 10, |t, p| {
            let layout = Arc::new(SegmentLayout::from_lengths([2, 0, 3, 1]));
            let a = t.segment_weighted_sum(p[0], p[1], layout)?;
            Ok(s(t, a))
        });
        check(&[(3, 4), (3, 4), (1, 4)], 11, |t, p| {
            let a = t.complex_mul(p[0], p[1])?;
            let b = t.complex_mul(a, p[2])?;
            Ok(s(t, b))
        });
        check(&[(3, 4), (3, 4)], 12, |t, p| {
            let a = t.mean_rows(p[0]);
            let b = t.row_dot(p[0], p[1])?;
            let c = t.sum(a);
            let d = t.sum(b);
            let e = t.add(c, d)?;
            Ok(e)
        });
        check(&[(3, 4)], 13, |t, p| {
            let a = t.softmax_rows(p[0]);
            let b = t.pick_columns(a, Arc::from(vec![1, 3, 0]))?;
            let c = t.log_clamped(b, 1e-12);
            let d = t.log_sigmoid(p[0], 1e-12);
            let e = t.sum(c);
            let f = t.sum(d);
            t.add(e, f)
        });
    }
}
