//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Operations are recorded eagerly on a Wengert tape during the forward
//! pass and replayed in reverse to accumulate vector-Jacobian products.
//! Tapes are single-threaded, consumed by exactly one backward pass, and
//! sized for small MLPs evaluated over a batch dimension.

use crate::autodiff::tensor::{softmax_stable, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// out = a @ b, a: m*k, b: k*n
    Matmul { a: Var, b: Var },
    /// out[i, :] = a[i, :] + bias
    AddRow { a: Var, bias: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    /// Elementwise minimum; gradient follows the winning side.
    MinPair { a: Var, b: Var },
    Neg { a: Var },
    Scale { a: Var, c: f64 },
    AddConst {
        a: Var,
        #[allow(dead_code)]
        c: f64,
    },
    /// out[i, :] = a[i, :] * row (fixed, not differentiated)
    MulRowConst { a: Var, row: Vec<f64> },
    Relu { a: Var },
    Tanh { a: Var },
    Exp { a: Var },
    Softplus { a: Var },
    Sqrt { a: Var },
    Clamp { a: Var, lo: f64, hi: f64 },
    /// Row-wise softmax with max subtraction.
    RowSoftmax { a: Var },
    /// out = sum_n weights[:, n] (*) parts[n]; parts are m*h, weights m*N.
    Blend { parts: Vec<Var>, weights: Var },
    ConcatCols { a: Var, b: Var },
    SliceCols { a: Var, start: usize, len: usize },
    /// m*n -> m*1 row sums
    RowSum { a: Var },
    Sum { a: Var },
    Mean { a: Var },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul { .. } => "matmul",
            Op::AddRow { .. } => "add_row",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::MinPair { .. } => "min_pair",
            Op::Neg { .. } => "neg",
            Op::Scale { .. } => "scale",
            Op::AddConst { .. } => "add_const",
            Op::MulRowConst { .. } => "mul_row_const",
            Op::Relu { .. } => "relu",
            Op::Tanh { .. } => "tanh",
            Op::Exp { .. } => "exp",
            Op::Softplus { .. } => "softplus",
            Op::Sqrt { .. } => "sqrt",
            Op::Clamp { .. } => "clamp",
            Op::RowSoftmax { .. } => "row_softmax",
            Op::Blend { .. } => "blend",
            Op::ConcatCols { .. } => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::RowSum { .. } => "row_sum",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
        }
    }
}

/// Wengert tape holding recorded operations, their values, and gradients.
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<Tensor>,
    grads: Vec<Option<Vec<f64>>>,
    constant: Vec<bool>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::with_capacity(128),
            vals: Vec::with_capacity(128),
            grads: Vec::with_capacity(128),
            constant: Vec::with_capacity(128),
            consumed: false,
        }
    }

    /// Register a leaf value. Leaves are snapshots: later mutation of the
    /// source tensor does not affect the tape.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn leaf_from(&mut self, t: &Tensor) -> Var {
        self.leaf(t.clone())
    }

    /// A leaf whose own gradient is never needed; backward skips
    /// accumulating into it (gradients still flow through ops that read
    /// it). Use for batch data, noise draws, and frozen networks.
    pub fn leaf_const(&mut self, t: Tensor) -> Var {
        let v = self.leaf(t);
        self.constant[v.0] = true;
        v
    }

    pub fn leaf_const_from(&mut self, t: &Tensor) -> Var {
        self.leaf_const(t.clone())
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.vals[v.0]
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    fn push(&mut self, op: Op, val: Tensor) -> Var {
        let id = self.vals.len();
        self.ops.push(op);
        self.vals.push(val);
        self.grads.push(None);
        self.constant.push(false);
        Var(id)
    }

    fn push_checked(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: op.name() });
        }
        let val = Tensor::new(shape, data)?;
        Ok(self.push(op, val))
    }

    // ── forward operations ───────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.vals[a.0], &self.vals[b.0]);
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        self.push_checked(Op::Matmul { a, b }, vec![m, n], out)
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (&self.vals[a.0], &self.vals[bias.0]);
        let (m, n) = (ta.rows(), ta.cols());
        if tb.numel() != n {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + bias {:?}", ta.shape(), tb.shape()),
            ));
        }
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = &ta.data()[r * n..(r + 1) * n];
            out.extend(row.iter().zip(tb.data()).map(|(x, b)| x + b));
        }
        self.push_checked(Op::AddRow { a, bias }, vec![m, n], out)
    }

    fn binary_same_shape(
        &mut self,
        a: Var,
        b: Var,
        opname: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (&self.vals[a.0], &self.vals[b.0]);
        if !ta.same_shape(tb) {
            return Err(Error::shape(
                opname,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let out: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = ta.shape().to_vec();
        self.push_checked(op, shape, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "add", |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "sub", |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "mul", |x, y| x * y, Op::Mul { a, b })
    }

    pub fn min_pair(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "min_pair", f64::min, Op::MinPair { a, b })
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = &self.vals[a.0];
        let out: Vec<f64> = ta.data().iter().map(|&x| f(x)).collect();
        let shape = ta.shape().to_vec();
        self.push_checked(op, shape, out)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| -x, Op::Neg { a })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |x| c * x, Op::Scale { a, c })
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |x| x + c, Op::AddConst { a, c })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.max(0.0), Op::Relu { a })
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh { a })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp { a })
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, softplus, Op::Softplus { a })
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::sqrt, Op::Sqrt { a })
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp { a, lo, hi })
    }

    pub fn mul_row_const(&mut self, a: Var, row: Vec<f64>) -> Result<Var> {
        let ta = &self.vals[a.0];
        let (m, n) = (ta.rows(), ta.cols());
        if row.len() != n {
            return Err(Error::shape(
                "mul_row_const",
                format!("{:?} * row of {}", ta.shape(), row.len()),
            ));
        }
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let src = &ta.data()[r * n..(r + 1) * n];
            out.extend(src.iter().zip(&row).map(|(x, c)| x * c));
        }
        self.push_checked(Op::MulRowConst { a, row }, vec![m, n], out)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let ta = &self.vals[a.0];
        let (m, n) = (ta.rows(), ta.cols());
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            out.extend(softmax_stable(&ta.data()[r * n..(r + 1) * n]));
        }
        self.push_checked(Op::RowSoftmax { a }, vec![m, n], out)
    }

    /// Blend `parts[n]` by the n-th column of `weights`:
    /// `out = sum_n weights[:, n] (*) parts[n]`.
    pub fn blend(&mut self, parts: &[Var], weights: Var) -> Result<Var> {
        let tw = &self.vals[weights.0];
        let (m, nw) = (tw.rows(), tw.cols());
        if parts.is_empty() || parts.len() != nw {
            return Err(Error::shape(
                "blend",
                format!("{} parts vs {} weight columns", parts.len(), nw),
            ));
        }
        let (pm, h) = {
            let t0 = &self.vals[parts[0].0];
            (t0.rows(), t0.cols())
        };
        if pm != m {
            return Err(Error::shape(
                "blend",
                format!("parts have {pm} rows, weights {m}"),
            ));
        }
        let mut out = vec![0.0; m * h];
        for (n, part) in parts.iter().enumerate() {
            let tp = &self.vals[part.0];
            if tp.rows() != m || tp.cols() != h {
                return Err(Error::shape("blend", "part shapes differ".to_string()));
            }
            let pd = tp.data();
            for r in 0..m {
                let w = tw.data()[r * nw + n];
                let dst = &mut out[r * h..(r + 1) * h];
                let src = &pd[r * h..(r + 1) * h];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        self.push_checked(
            Op::Blend {
                parts: parts.to_vec(),
                weights,
            },
            vec![m, h],
            out,
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.vals[a.0], &self.vals[b.0]);
        let (m, p) = (ta.rows(), ta.cols());
        let (m2, q) = (tb.rows(), tb.cols());
        if m != m2 {
            return Err(Error::shape(
                "concat_cols",
                format!("{:?} | {:?}", ta.shape(), tb.shape()),
            ));
        }
        let mut out = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            out.extend_from_slice(&ta.data()[r * p..(r + 1) * p]);
            out.extend_from_slice(&tb.data()[r * q..(r + 1) * q]);
        }
        self.push_checked(Op::ConcatCols { a, b }, vec![m, p + q], out)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = &self.vals[a.0];
        let (m, n) = (ta.rows(), ta.cols());
        if start + len > n {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}..{}] of {n} cols", start + len),
            ));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&ta.data()[r * n + start..r * n + start + len]);
        }
        self.push_checked(Op::SliceCols { a, start, len }, vec![m, len], out)
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let ta = &self.vals[a.0];
        let (m, n) = (ta.rows(), ta.cols());
        let out: Vec<f64> = (0..m)
            .map(|r| ta.data()[r * n..(r + 1) * n].iter().sum())
            .collect();
        self.push_checked(Op::RowSum { a }, vec![m, 1], out)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.vals[a.0].data().iter().sum();
        self.push_checked(Op::Sum { a }, vec![1], vec![s])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = &self.vals[a.0];
        let s: f64 = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push_checked(Op::Mean { a }, vec![1], vec![s])
    }

    /// Scalar value of a one-element variable.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.vals[v.0].data()[0]
    }

    // ── backward pass ────────────────────────────────────────────────

    /// Accumulate gradients of a scalar loss with respect to every
    /// recorded variable. Consumes the tape: a second call is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::contract("backward", "tape already consumed"));
        }
        if self.vals[loss.0].numel() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.vals[loss.0].shape()),
            ));
        }
        self.consumed = true;
        self.grads[loss.0] = Some(vec![1.0]);

        let Tape {
            ops,
            vals,
            grads,
            constant,
            ..
        } = self;
        for i in (0..ops.len()).rev() {
            let dout = match &grads[i] {
                Some(g) => g.clone(),
                None => continue,
            };
            match &ops[i] {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (m, k) = (vals[a.0].rows(), vals[a.0].cols());
                    let n = vals[b.0].cols();
                    // dA = dOut @ B^T
                    if !constant[a.0] {
                        let bd = vals[b.0].data();
                        let ga = grads[a.0].get_or_insert_with(|| vec![0.0; m * k]);
                        for r in 0..m {
                            let drow = &dout[r * n..(r + 1) * n];
                            let garow = &mut ga[r * k..(r + 1) * k];
                            for (kk, gv) in garow.iter_mut().enumerate() {
                                let brow = &bd[kk * n..(kk + 1) * n];
                                let mut acc = 0.0;
                                for (d, bvl) in drow.iter().zip(brow) {
                                    acc += d * bvl;
                                }
                                *gv += acc;
                            }
                        }
                    }
                    // dB = A^T @ dOut
                    if !constant[b.0] {
                        let ad = vals[a.0].data();
                        let gb = grads[b.0].get_or_insert_with(|| vec![0.0; k * n]);
                        for r in 0..m {
                            let drow = &dout[r * n..(r + 1) * n];
                            for kk in 0..k {
                                let av = ad[r * k + kk];
                                if av == 0.0 {
                                    continue;
                                }
                                let gbrow = &mut gb[kk * n..(kk + 1) * n];
                                for (g, &d) in gbrow.iter_mut().zip(drow) {
                                    *g += av * d;
                                }
                            }
                        }
                    }
                }
                Op::AddRow { a, bias } => {
                    let n = vals[bias.0].numel();
                    accum_nc(grads, constant, a.0, vals[a.0].numel(), |ga| {
                        for (g, &d) in ga.iter_mut().zip(&dout) {
                            *g += d;
                        }
                    });
                    accum_nc(grads, constant, bias.0, n, |gb| {
                        for (i, &d) in dout.iter().enumerate() {
                            gb[i % n] += d;
                        }
                    });
                }
                Op::Add { a, b } => {
                    for id in [a.0, b.0] {
                        accum_nc(grads, constant, id, vals[id].numel(), |g| {
                            for (gv, &d) in g.iter_mut().zip(&dout) {
                                *gv += d;
                            }
                        });
                    }
                }
                Op::Sub { a, b } => {
                    accum_nc(grads, constant, a.0, vals[a.0].numel(), |g| {
                        for (gv, &d) in g.iter_mut().zip(&dout) {
                            *gv += d;
                        }
                    });
                    accum_nc(grads, constant, b.0, vals[b.0].numel(), |g| {
                        for (gv, &d) in g.iter_mut().zip(&dout) {
                            *gv -= d;
                        }
                    });
                }
                Op::Mul { a, b } => {
                    let (ad, bd) = (vals[a.0].data(), vals[b.0].data());
                    accum_nc(grads, constant, a.0, ad.len(), |g| {
                        for ((gv, &d), &bv) in g.iter_mut().zip(&dout).zip(bd) {
                            *gv += d * bv;
                        }
                    });
                    accum_nc(grads, constant, b.0, bd.len(), |g| {
                        for ((gv, &d), &av) in g.iter_mut().zip(&dout).zip(ad) {
                            *gv += d * av;
                        }
                    });
                }
                Op::MinPair { a, b } => {
                    let (ad, bd) = (vals[a.0].data(), vals[b.0].data());
                    accum_nc(grads, constant, a.0, ad.len(), |g| {
                        for i in 0..ad.len() {
                            if ad[i] <= bd[i] {
                                g[i] += dout[i];
                            }
                        }
                    });
                    accum_nc(grads, constant, b.0, bd.len(), |g| {
                        for i in 0..bd.len() {
                            if ad[i] > bd[i] {
                                g[i] += dout[i];
                            }
                        }
                    });
                }
                Op::Neg { a } => accum_nc(grads, constant, a.0, vals[a.0].numel(), |g| {
                    for (gv, &d) in g.iter_mut().zip(&dout) {
                        *gv -= d;
                    }
                }),
                Op::Scale { a, c } => {
                    let c = *c;
                    accum_nc(grads, constant, a.0, vals[a.0].numel(), |g| {
                        for (gv, &d) in g.iter_mut().zip(&dout) {
                            *gv += c * d;
                        }
                    })
                }
                Op::AddConst { a, .. } => accum_nc(grads, constant, a.0, vals[a.0].numel(), |g| {
                    for (gv, &d) in g.iter_mut().zip(&dout) {
                        *gv += d;
                    }
                }),
                Op::MulRowConst { a, row } => {
                    let n = row.len();
                    accum_nc(grads, constant, a.0, vals[a.0].numel(), |g| {
                        for (i, &d) in dout.iter().enumerate() {
                            g[i] += d * row[i % n];
                        }
                    });
                }
                Op::Relu { a } => {
                    let ad = vals[a.0].data();
                    accum_nc(grads, constant, a.0, ad.len(), |g| {
                        for i in 0..ad.len() {
                            if ad[i] > 0.0 {
                                g[i] += dout[i];
                            }
                        }
                    });
                }
                Op::Tanh { a } => {
                    let yd = vals[i].data();
                    accum_nc(grads, constant, a.0, yd.len(), |g| {
                        for i2 in 0..yd.len() {
                            g[i2] += dout[i2] * (1.0 - yd[i2] * yd[i2]);
                        }
                    });
                }
                Op::Exp { a } => {
                    let yd = vals[i].data();
                    accum_nc(grads, constant, a.0, yd.len(), |g| {
                        for i2 in 0..yd.len() {
                            g[i2] += dout[i2] * yd[i2];
                        }
                    });
                }
                Op::Softplus { a } => {
                    let ad = vals[a.0].data();
                    accum_nc(grads, constant, a.0, ad.len(), |g| {
                        for i2 in 0..ad.len() {
                            g[i2] += dout[i2] * sigmoid(ad[i2]);
                        }
                    });
                }
                Op::Sqrt { a } => {
                    let yd = vals[i].data();
                    accum_nc(grads, constant, a.0, yd.len(), |g| {
                        for i2 in 0..yd.len() {
                            g[i2] += dout[i2] * 0.5 / yd[i2].max(1e-150);
                        }
                    });
                }
                Op::Clamp { a, lo, hi } => {
                    let ad = vals[a.0].data();
                    let (lo, hi) = (*lo, *hi);
                    accum_nc(grads, constant, a.0, ad.len(), |g| {
                        for i2 in 0..ad.len() {
                            if ad[i2] > lo && ad[i2] < hi {
                                g[i2] += dout[i2];
                            }
                        }
                    });
                }
                Op::RowSoftmax { a } => {
                    let yd = vals[i].data();
                    let (m, n) = (vals[i].rows(), vals[i].cols());
                    accum_nc(grads, constant, a.0, m * n, |g| {
                        for r in 0..m {
                            let y = &yd[r * n..(r + 1) * n];
                            let d = &dout[r * n..(r + 1) * n];
                            let dot: f64 = y.iter().zip(d).map(|(&yv, &dv)| yv * dv).sum();
                            let grow = &mut g[r * n..(r + 1) * n];
                            for i2 in 0..n {
                                grow[i2] += y[i2] * (d[i2] - dot);
                            }
                        }
                    });
                }
                Op::Blend { parts, weights } => {
                    let tw = &vals[weights.0];
                    let (m, nw) = (tw.rows(), tw.cols());
                    let h = vals[parts[0].0].cols();
                    for (n, part) in parts.iter().enumerate() {
                        let pd = vals[part.0].data();
                        let wd = tw.data();
                        accum_nc(grads, constant, part.0, m * h, |g| {
                            for r in 0..m {
                                let w = wd[r * nw + n];
                                let grow = &mut g[r * h..(r + 1) * h];
                                let drow = &dout[r * h..(r + 1) * h];
                                for (gv, &d) in grow.iter_mut().zip(drow) {
                                    *gv += w * d;
                                }
                            }
                        });
                        accum_nc(grads, constant, weights.0, m * nw, |g| {
                            for r in 0..m {
                                let prow = &pd[r * h..(r + 1) * h];
                                let drow = &dout[r * h..(r + 1) * h];
                                let mut acc = 0.0;
                                for (p, &d) in prow.iter().zip(drow) {
                                    acc += p * d;
                                }
                                g[r * nw + n] += acc;
                            }
                        });
                    }
                }
                Op::ConcatCols { a, b } => {
                    let (m, p) = (vals[a.0].rows(), vals[a.0].cols());
                    let q = vals[b.0].cols();
                    accum_nc(grads, constant, a.0, m * p, |g| {
                        for r in 0..m {
                            let src = &dout[r * (p + q)..r * (p + q) + p];
                            let dst = &mut g[r * p..(r + 1) * p];
                            for (gv, &d) in dst.iter_mut().zip(src) {
                                *gv += d;
                            }
                        }
                    });
                    accum_nc(grads, constant, b.0, m * q, |g| {
                        for r in 0..m {
                            let src = &dout[r * (p + q) + p..(r + 1) * (p + q)];
                            let dst = &mut g[r * q..(r + 1) * q];
                            for (gv, &d) in dst.iter_mut().zip(src) {
                                *gv += d;
                            }
                        }
                    });
                }
                Op::SliceCols { a, start, len } => {
                    let (m, n) = (vals[a.0].rows(), vals[a.0].cols());
                    let (start, len) = (*start, *len);
                    accum_nc(grads, constant, a.0, m * n, |g| {
                        for r in 0..m {
                            let src = &dout[r * len..(r + 1) * len];
                            let dst = &mut g[r * n + start..r * n + start + len];
                            for (gv, &d) in dst.iter_mut().zip(src) {
                                *gv += d;
                            }
                        }
                    });
                }
                Op::RowSum { a } => {
                    let (m, n) = (vals[a.0].rows(), vals[a.0].cols());
                    accum_nc(grads, constant, a.0, m * n, |g| {
                        for r in 0..m {
                            let d = dout[r];
                            for gv in &mut g[r * n..(r + 1) * n] {
                                *gv += d;
                            }
                        }
                    });
                }
                Op::Sum { a } => {
                    let d = dout[0];
                    accum_nc(grads, constant, a.0, vals[a.0].numel(), |g| {
                        for gv in g.iter_mut() {
                            *gv += d;
                        }
                    });
                }
                Op::Mean { a } => {
                    let numel = vals[a.0].numel();
                    let d = dout[0] / numel as f64;
                    accum_nc(grads, constant, a.0, numel, |g| {
                        for gv in g.iter_mut() {
                            *gv += d;
                        }
                    });
                }
            }
        }
        Ok(())
    }

    /// Gradient of the loss with respect to `v`, if any flowed to it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient as a tensor shaped like `v`; zeros when no gradient flowed.
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let shape = self.vals[v.0].shape().to_vec();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient finite"),
            None => Tensor::zeros(shape),
        }
    }
}

fn accum(grads: &mut [Option<Vec<f64>>], id: usize, numel: usize, f: impl FnOnce(&mut Vec<f64>)) {
    let g = grads[id].get_or_insert_with(|| vec![0.0; numel]);
    f(g);
}

fn accum_nc(
    grads: &mut [Option<Vec<f64>>],
    constant: &[bool],
    id: usize,
    numel: usize,
    f: impl FnOnce(&mut Vec<f64>),
) {
    if constant[id] {
        return;
    }
    accum(grads, id, numel, f);
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        let arow = &a[r * k..(r + 1) * k];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
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

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
