//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Graph`] records every operation of one forward pass. Nodes are
//! appended in evaluation order, so walking them backwards is a valid
//! topological order for [`Graph::backward`]. Graphs are rebuilt for every
//! example; nothing persists between steps.

use std::borrow::Cow;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::tensor::{matmul, matmul_nt, matmul_tn};
use crate::numerics::{Real, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row-major boolean allow-set shared by a masked softmax node.
pub type AllowMask = Arc<[bool]>;

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { src: Var, start: usize },
    GatherRows { src: Var, index: Vec<usize> },
    MaskedSoftmax { src: Var },
    LayerNorm {
        src: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<F>,
        inv_std: Vec<F>,
    },
    Gelu(Var),
    Exp(Var),
    Ln(Var),
    Sum(Var),
    CrossEntropy {
        src: Var,
        targets: Vec<usize>,
        probs: Vec<F>,
    },
}

struct Node<'a, F: Real> {
    value: Cow<'a, Tensor<F>>,
    op: Op<F>,
}

/// A tape of recorded operations.
pub struct Graph<'a, F: Real> {
    nodes: Vec<Node<'a, F>>,
}

impl<F: Real> Default for Graph<'_, F> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims<F: Real>(t: &Tensor<F>) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<'a, F: Real> Graph<'a, F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    /// Owned input (constant or variable; every leaf receives a gradient).
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Borrowed input, typically a model parameter.
    pub fn leaf_ref(&mut self, value: &'a Tensor<F>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims(self.value(a));
        let (k2, n) = dims(self.value(b));
        if k != k2 {
            return Err(Error::shape(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims(self.value(a));
        let (n, k2) = dims(self.value(b));
        if k != k2 {
            return Err(Error::shape(format!("matmul_nt {m}x{k} by ({n}x{k2})^T")));
        }
        let out = matmul_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b)))
    }

    fn same_dims(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let da = dims(self.value(a));
        let db = dims(self.value(b));
        if da != db {
            return Err(Error::shape(format!("{what}: {da:?} vs {db:?}")));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.same_dims(a, b, "add")?;
        let out: Vec<F> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Add(a, b)))
    }

    /// Broadcast-adds the single row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = dims(self.value(a));
        let (r, c) = dims(self.value(row));
        if r != 1 || c != n {
            return Err(Error::shape(format!("add_row {m}x{n} with {r}x{c}")));
        }
        let b = self.value(row).data();
        let out: Vec<F> = self
            .value(a)
            .data()
            .chunks(n.max(1))
            .flat_map(|chunk| chunk.iter().zip(b).map(|(&x, &y)| x + y))
            .collect();
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::AddRow(a, row)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.same_dims(a, b, "mul")?;
        let out: Vec<F> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let (m, n) = dims(self.value(a));
        let out = self.value(a).data().iter().map(|&x| x * s).collect();
        let t = Tensor::matrix(m, n, out).expect("same size");
        self.push(t, Op::Scale(a, s))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_cols of nothing"))?;
        let rows = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims(self.value(p));
            if r != rows {
                return Err(Error::shape(format!("concat_cols rows {rows} vs {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows of nothing"))?;
        let cols = self.value(*first).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = dims(self.value(p));
            if c != cols {
                return Err(Error::shape(format!("concat_rows cols {cols} vs {c}")));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = dims(self.value(src));
        if start + len > n {
            return Err(Error::shape(format!(
                "slice_cols [{start}, {}) of width {n}",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&self.value(src).row(r)[start..start + len]);
        }
        Ok(self.push(Tensor::matrix(m, len, out)?, Op::SliceCols { src, start }))
    }

    /// Row lookup; the embedding gather.
    pub fn gather_rows(&mut self, src: Var, index: &[usize]) -> Result<Var> {
        let (m, n) = dims(self.value(src));
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            if i >= m {
                return Err(Error::shape(format!("gather row {i} of {m}")));
            }
            out.extend_from_slice(self.value(src).row(i));
        }
        let t = Tensor::matrix(index.len(), n, out)?;
        Ok(self.push(
            t,
            Op::GatherRows {
                src,
                index: index.to_vec(),
            },
        ))
    }

    /// Row softmax restricted to the allowed entries of `allow`.
    ///
    /// Disallowed entries get exactly zero weight and receive exactly zero
    /// gradient. `None` allows everything.
    pub fn masked_softmax(&mut self, src: Var, allow: Option<&AllowMask>) -> Result<Var> {
        let (m, n) = dims(self.value(src));
        if let Some(mask) = allow {
            if mask.len() != m * n {
                return Err(Error::shape(format!(
                    "mask of {} entries for {m}x{n} logits",
                    mask.len()
                )));
            }
        }
        let x = self.value(src).data();
        let mut out = vec![F::zero(); m * n];
        for r in 0..m {
            let row = &x[r * n..(r + 1) * n];
            let allowed = |j: usize| allow.is_none_or(|a| a[r * n + j]);
            let mut max = F::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if allowed(j) && v > max {
                    max = v;
                }
            }
            if max == F::neg_infinity() {
                return Err(Error::Numeric(format!(
                    "masked softmax row {r} has no allowed finite entry"
                )));
            }
            let mut z = F::zero();
            let dst = &mut out[r * n..(r + 1) * n];
            for (j, &v) in row.iter().enumerate() {
                if allowed(j) {
                    let e = (v - max).exp();
                    dst[j] = e;
                    z = z + e;
                }
            }
            for d in dst.iter_mut() {
                *d = *d / z;
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MaskedSoftmax { src }))
    }

    /// Per-row normalization followed by elementwise `gain` and `bias`.
    pub fn layer_norm(&mut self, src: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = dims(self.value(src));
        for (v, what) in [(gain, "gain"), (bias, "bias")] {
            if self.value(v).len() != n {
                return Err(Error::shape(format!(
                    "layer_norm {what} of {} for width {n}",
                    self.value(v).len()
                )));
            }
        }
        let eps = F::of(LAYER_NORM_EPS);
        let nf = F::of(n as f64);
        let x = self.value(src).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut normalized = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = &x[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<F>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / nf;
            let is = F::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let xh = (v - mean) * is;
                normalized.push(xh);
                out.push(xh * g[j] + b[j]);
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                src,
                gain,
                bias,
                normalized,
                inv_std,
            },
        ))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let c = F::of(GELU_C);
        let k = F::of(GELU_A);
        let half = F::of(0.5);
        let t = self
            .value(a)
            .map(|x| half * x * (F::one() + (c * (x + k * x * x * x)).tanh()));
        let (m, n) = dims(&t);
        let t = t.reshaped(vec![m, n]).expect("same size");
        self.push(t, Op::Gelu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.exp());
        let (m, n) = dims(&t);
        let t = t.reshaped(vec![m, n]).expect("same size");
        self.push(t, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.ln());
        let (m, n) = dims(&t);
        let t = t.reshaped(vec![m, n]).expect("same size");
        self.push(t, Op::Ln(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean over rows of `-log softmax(row)[target]`, max-subtracted.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (m, n) = dims(self.value(logits));
        if targets.len() != m {
            return Err(Error::shape(format!(
                "{} targets for {m} logit rows",
                targets.len()
            )));
        }
        let x = self.value(logits).data();
        let mut probs = Vec::with_capacity(m * n);
        let mut loss = F::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::InvalidArgument(format!(
                    "target {t} out of range for {n} classes"
                )));
            }
            let row = &x[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let z: F = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = z.ln() + max;
            loss = loss + (log_z - row[t]);
            probs.extend(row.iter().map(|&v| (v - log_z).exp()));
        }
        let mean = loss / F::of(m as f64);
        Ok(self.push(
            Tensor::scalar(mean),
            Op::CrossEntropy {
                src: logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients<F>> {
        if self.value(root).len() != 1 {
            return Err(Error::shape(format!(
                "backward from non-scalar node of shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(self.value(root).shape(), F::one()));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(self.value(*a));
                let n = self.value(*b).cols();
                let da = matmul_nt(gd, self.value(*b).data(), m, n, k);
                let db = matmul_tn(self.value(*a).data(), gd, m, k, n);
                accumulate(grads, *a, self.value(*a), da);
                accumulate(grads, *b, self.value(*b), db);
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = dims(self.value(*a));
                let n = self.value(*b).rows();
                let da = matmul(gd, self.value(*b).data(), m, n, k);
                let db = matmul_tn(gd, self.value(*a).data(), m, n, k);
                accumulate(grads, *a, self.value(*a), da);
                accumulate(grads, *b, self.value(*b), db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, self.value(*a), gd.to_vec());
                accumulate(grads, *b, self.value(*b), gd.to_vec());
            }
            Op::AddRow(a, row) => {
                let n = self.value(*row).len();
                let mut db = vec![F::zero(); n];
                for chunk in gd.chunks(n.max(1)) {
                    for (d, &v) in db.iter_mut().zip(chunk) {
                        *d = *d + v;
                    }
                }
                accumulate(grads, *a, self.value(*a), gd.to_vec());
                accumulate(grads, *row, self.value(*row), db);
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let da = gd.iter().zip(bv).map(|(&g, &y)| g * y).collect();
                let db = gd.iter().zip(av).map(|(&g, &x)| g * x).collect();
                accumulate(grads, *a, self.value(*a), da);
                accumulate(grads, *b, self.value(*b), db);
            }
            Op::Scale(a, s) => {
                let da = gd.iter().map(|&g| g * *s).collect();
                accumulate(grads, *a, self.value(*a), da);
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    accumulate(grads, p, self.value(p), dp);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    accumulate(grads, p, self.value(p), gd[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::SliceCols { src, start } => {
                let (m, n) = dims(self.value(*src));
                let w = g.cols();
                let mut ds = vec![F::zero(); m * n];
                for r in 0..m {
                    ds[r * n + start..r * n + start + w].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                accumulate(grads, *src, self.value(*src), ds);
            }
            Op::GatherRows { src, index } => {
                let (m, n) = dims(self.value(*src));
                let mut ds = vec![F::zero(); m * n];
                for (r, &i) in index.iter().enumerate() {
                    for (d, &v) in ds[i * n..(i + 1) * n].iter_mut().zip(&gd[r * n..(r + 1) * n]) {
                        *d = *d + v;
                    }
                }
                accumulate(grads, *src, self.value(*src), ds);
            }
            Op::MaskedSoftmax { src } => {
                let y = node.value.data();
                let n = node.value.cols();
                let mut ds = vec![F::zero(); y.len()];
                for r in 0..node.value.rows() {
                    let yr = &y[r * n..(r + 1) * n];
                    let gr = &gd[r * n..(r + 1) * n];
                    let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for j in 0..n {
                        // Disallowed entries have y == 0 and so get exactly 0.
                        ds[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, *src, self.value(*src), ds);
            }
            Op::LayerNorm {
                src,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let (m, n) = dims(&node.value);
                let gv = self.value(*gain).data();
                let nf = F::of(n as f64);
                let mut dx = vec![F::zero(); m * n];
                let mut dgain = vec![F::zero(); n];
                let mut dbias = vec![F::zero(); n];
                for r in 0..m {
                    let gr = &gd[r * n..(r + 1) * n];
                    let xh = &normalized[r * n..(r + 1) * n];
                    let mut sum_dxh = F::zero();
                    let mut sum_dxh_xh = F::zero();
                    for j in 0..n {
                        let dxh = gr[j] * gv[j];
                        sum_dxh = sum_dxh + dxh;
                        sum_dxh_xh = sum_dxh_xh + dxh * xh[j];
                        dgain[j] = dgain[j] + gr[j] * xh[j];
                        dbias[j] = dbias[j] + gr[j];
                    }
                    let scale = inv_std[r] / nf;
                    for j in 0..n {
                        let dxh = gr[j] * gv[j];
                        dx[r * n + j] = scale * (nf * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
                accumulate(grads, *src, self.value(*src), dx);
                accumulate(grads, *gain, self.value(*gain), dgain);
                accumulate(grads, *bias, self.value(*bias), dbias);
            }
            Op::Gelu(a) => {
                let c = F::of(GELU_C);
                let k = F::of(GELU_A);
                let half = F::of(0.5);
                let three = F::of(3.0);
                let x = self.value(*a).data();
                let da = x
                    .iter()
                    .zip(gd)
                    .map(|(&x, &g)| {
                        let t = (c * (x + k * x * x * x)).tanh();
                        let dt = (F::one() - t * t) * c * (F::one() + three * k * x * x);
                        g * (half * (F::one() + t) + half * x * dt)
                    })
                    .collect();
                accumulate(grads, *a, self.value(*a), da);
            }
            Op::Exp(a) => {
                let y = node.value.data();
                let da = gd.iter().zip(y).map(|(&g, &y)| g * y).collect();
                accumulate(grads, *a, self.value(*a), da);
            }
            Op::Ln(a) => {
                let x = self.value(*a).data();
                let da = gd.iter().zip(x).map(|(&g, &x)| g / x).collect();
                accumulate(grads, *a, self.value(*a), da);
            }
            Op::Sum(a) => {
                let da = vec![gd[0]; self.value(*a).len()];
                accumulate(grads, *a, self.value(*a), da);
            }
            Op::CrossEntropy {
                src,
                targets,
                probs,
            } => {
                let n = self.value(*src).cols();
                let scale = gd[0] / F::of(targets.len() as f64);
                let mut ds: Vec<F> = probs.iter().map(|&p| p * scale).collect();
                for (r, &t) in targets.iter().enumerate() {
                    ds[r * n + t] = ds[r * n + t] - scale;
                }
                accumulate(grads, *src, self.value(*src), ds);
            }
        }
        Ok(())
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Tensor<F>>], v: Var, like: &Tensor<F>, data: Vec<F>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(data) {
                *e = *e + d;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(like.shape().to_vec(), data).expect("gradient shape"));
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient of `v`, or `None` when the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
