//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node whose inputs are earlier nodes, so the node
//! order is already topological and the backward pass is a single reverse
//! sweep. A tape is single-use: a second `backward` call is rejected.

use crate::error::{Error, Result};
use crate::ops::{self, ConvGeometry};
use crate::real::{gemm, Mat, Real};
use crate::tensor::{numel, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var },
    AddBias { x: Var, bias: Var, inner: usize },
    Relu { x: Var },
    Reshape { x: Var },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeometry },
    LogSoftmax { x: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    SelectPerRow { x: Var, labels: Vec<usize> },
    Mse { a: Var, b: Var },
    WeightedSqDist { x: Var, anchor: Vec<T>, weights: Vec<T> },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Sum { x: Var },
    Mean { x: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T: Real = f64> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    consumed: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a tensor that gradients flow into.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a tensor treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a leaf whose gradient flag follows `value.requires_grad()`.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let rg = value.requires_grad();
        self.push(value, Op::Leaf, rg)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads[v.0].take()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = ops::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::MatMul { a, b }, rg))
    }

    /// Adds a per-channel bias along dimension 1 of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() < 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::shape("add_bias", sx, sb));
        }
        let inner = numel(&sx[2..]);
        let mut out = self.value(x).clone().with_requires_grad(false);
        ops::add_bias_channels(out.data_mut(), self.value(bias).data(), inner);
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddBias { x, bias, inner }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone().with_requires_grad(false);
        ops::relu_inplace(out.data_mut());
        let rg = self.rg(x);
        self.push(out, Op::Relu { x }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().with_requires_grad(false).reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Reshape { x }, rg))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::from_shapes(self.shape(x), self.shape(w), stride, padding)?;
        if self.shape(b) != [geom.out_channels] {
            return Err(Error::shape("conv2d bias", self.shape(b), &[geom.out_channels]));
        }
        let data = ops::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            &geom,
        );
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::new(geom.out_shape(), data)?, Op::Conv2d { x, w, b, geom }, rg))
    }

    fn rows_cols(&self, x: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::shape(op, s, &[0, 0]));
        }
        Ok((s[0], s[1]))
    }

    fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
        if labels.len() != rows {
            return Err(Error::shape("labels", &[rows], &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Index {
                context: "class label",
                index: bad,
                bound: classes,
            });
        }
        Ok(())
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (n, c) = self.rows_cols(x, "log_softmax")?;
        let data = ops::log_softmax_rows(self.value(x).data(), c);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![n, c], data)?, Op::LogSoftmax { x }, rg))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, c) = self.rows_cols(logits, "softmax_cross_entropy")?;
        Self::check_labels(labels, n, c)?;
        if n == 0 {
            return Err(Error::shape("softmax_cross_entropy (empty batch)", &[n, c], &[1, c]));
        }
        let logp = ops::log_softmax_rows(self.value(logits).data(), c);
        let mut loss = T::zero();
        for (i, &y) in labels.iter().enumerate() {
            loss -= logp[i * c + y];
        }
        loss /= T::lit(n as f64);
        let probs = logp.into_iter().map(T::exp).collect();
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Picks `x[i, labels[i]]` from each row, producing a `[n]` tensor.
    pub fn select_per_row(&mut self, x: Var, labels: &[usize]) -> Result<Var> {
        let (n, c) = self.rows_cols(x, "select_per_row")?;
        Self::check_labels(labels, n, c)?;
        let xv = self.value(x).data();
        let data = labels.iter().enumerate().map(|(i, &y)| xv[i * c + y]).collect();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(vec![n], data)?,
            Op::SelectPerRow {
                x,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// Mean of the squared elementwise difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("mse", va.shape(), vb.shape()));
        }
        if va.numel() == 0 {
            return Err(Error::shape("mse (empty)", va.shape(), vb.shape()));
        }
        let mut acc = T::zero();
        for (x, y) in va.data().iter().zip(vb.data()) {
            let d = *x - *y;
            acc += d * d;
        }
        acc /= T::lit(va.numel() as f64);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(acc), Op::Mse { a, b }, rg))
    }

    /// `Σ weights[i]·(x[i] − anchor[i])²`; anchor and weights are constants.
    pub fn weighted_sq_dist(&mut self, x: Var, anchor: &[T], weights: &[T]) -> Result<Var> {
        let vx = self.value(x);
        if anchor.len() != vx.numel() || weights.len() != vx.numel() {
            return Err(Error::shape("weighted_sq_dist", vx.shape(), &[anchor.len(), weights.len()]));
        }
        let mut acc = T::zero();
        for ((v, a), w) in vx.data().iter().zip(anchor).zip(weights) {
            let d = *v - *a;
            acc += *w * d * d;
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::scalar(acc),
            Op::WeightedSqDist {
                x,
                anchor: anchor.to_vec(),
                weights: weights.to_vec(),
            },
            rg,
        ))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(name, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let mut out = self.value(x).clone().with_requires_grad(false);
        for v in out.data_mut() {
            *v *= factor;
        }
        let rg = self.rg(x);
        self.push(out, Op::Scale { x, factor }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.numel() == 0 {
            return Err(Error::shape("mean (empty)", v.shape(), &[1]));
        }
        let s: T = v.data().iter().copied().sum::<T>() / T::lit(v.numel() as f64);
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::Mean { x }, rg))
    }

    /// Propagates d`loss`/d(node) to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::shape("backward (loss must be scalar)", self.shape(loss), &[1]));
        }
        self.consumed = true;
        if !self.rg(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accum(&mut self, target: Var) -> Option<&mut [T]> {
        if !self.nodes[target.0].requires_grad {
            return None;
        }
        let len = self.nodes[target.0].value.numel();
        Some(self.grads[target.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn accum_with(&mut self, target: Var, f: impl FnOnce(&[Node<T>], &mut [T])) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        let len = self.nodes[target.0].value.numel();
        let grad = self.grads[target.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(&self.nodes, grad);
    }

    fn propagate(&mut self, idx: usize, g: &[T]) {
        // Temporarily move the op out so node values can be borrowed freely.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                self.accum_with(*a, |nodes, ga| {
                    let bv = nodes[b.0].value.data();
                    gemm(Mat::new(g, m, n), Mat::new(bv, k, n).t(), ga, true);
                });
                self.accum_with(*b, |nodes, gb| {
                    let av = nodes[a.0].value.data();
                    gemm(Mat::new(av, m, k).t(), Mat::new(g, m, n), gb, true);
                });
            }
            Op::AddBias { x, bias, inner } => {
                if let Some(gx) = self.accum(*x) {
                    for (d, s) in gx.iter_mut().zip(g) {
                        *d += *s;
                    }
                }
                let inner = *inner;
                if let Some(gb) = self.accum(*bias) {
                    let c = gb.len();
                    if c > 0 && inner > 0 {
                        for block in g.chunks(c * inner) {
                            for (ch, plane) in block.chunks(inner).enumerate() {
                                gb[ch] += plane.iter().copied().sum::<T>();
                            }
                        }
                    }
                }
            }
            Op::Relu { x } => {
                self.accum_with(*x, |nodes, gx| {
                    let out = nodes[idx].value.data();
                    for ((d, s), o) in gx.iter_mut().zip(g).zip(out) {
                        if *o > T::zero() {
                            *d += *s;
                        }
                    }
                });
            }
            Op::Reshape { x } => {
                if let Some(gx) = self.accum(*x) {
                    for (d, s) in gx.iter_mut().zip(g) {
                        *d += *s;
                    }
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let xv = self.nodes[x.0].value.data().to_vec();
                let wv = self.nodes[w.0].value.data().to_vec();
                if let Some(gx) = self.accum(*x) {
                    ops::conv2d_backward(&xv, &wv, g, geom, Some(gx), None, None);
                }
                if let Some(gw) = self.accum(*w) {
                    ops::conv2d_backward(&xv, &wv, g, geom, None, Some(gw), None);
                }
                if let Some(gb) = self.accum(*b) {
                    ops::conv2d_backward(&xv, &wv, g, geom, None, None, Some(gb));
                }
            }
            Op::LogSoftmax { x } => {
                self.accum_with(*x, |nodes, gx| {
                    let out = nodes[idx].value.data();
                    let c = nodes[idx].value.shape()[1];
                    if c == 0 {
                        return;
                    }
                    for ((dst, gy), y) in gx.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c)) {
                        let total: T = gy.iter().copied().sum();
                        for j in 0..c {
                            dst[j] += gy[j] - y[j].exp() * total;
                        }
                    }
                });
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                if let Some(gx) = self.accum(*logits) {
                    let n = labels.len();
                    let c = probs.len() / n;
                    let scale = g[0] / T::lit(n as f64);
                    for (i, &y) in labels.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == y { T::one() } else { T::zero() };
                            gx[i * c + j] += scale * (probs[i * c + j] - onehot);
                        }
                    }
                }
            }
            Op::SelectPerRow { x, labels } => {
                if let Some(gx) = self.accum(*x) {
                    let n = labels.len();
                    let c = gx.len().checked_div(n).unwrap_or(0);
                    for (i, &y) in labels.iter().enumerate() {
                        gx[i * c + y] += g[i];
                    }
                }
            }
            Op::Mse { a, b } => {
                let diff: Vec<T> = {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    va.iter().zip(vb).map(|(x, y)| *x - *y).collect()
                };
                let scale = T::lit(2.0) * g[0] / T::lit(diff.len() as f64);
                if let Some(ga) = self.accum(*a) {
                    for (d, v) in ga.iter_mut().zip(&diff) {
                        *d += scale * *v;
                    }
                }
                if let Some(gb) = self.accum(*b) {
                    for (d, v) in gb.iter_mut().zip(&diff) {
                        *d -= scale * *v;
                    }
                }
            }
            Op::WeightedSqDist { x, anchor, weights } => {
                self.accum_with(*x, |nodes, gx| {
                    let xv = nodes[x.0].value.data();
                    let two = T::lit(2.0) * g[0];
                    for (((d, v), a), w) in gx.iter_mut().zip(xv).zip(anchor).zip(weights) {
                        *d += two * *w * (*v - *a);
                    }
                });
            }
            Op::Add { a, b } => {
                for t in [*a, *b] {
                    if let Some(gt) = self.accum(t) {
                        for (d, s) in gt.iter_mut().zip(g) {
                            *d += *s;
                        }
                    }
                }
            }
            Op::Sub { a, b } => {
                if let Some(ga) = self.accum(*a) {
                    for (d, s) in ga.iter_mut().zip(g) {
                        *d += *s;
                    }
                }
                if let Some(gb) = self.accum(*b) {
                    for (d, s) in gb.iter_mut().zip(g) {
                        *d -= *s;
                    }
                }
            }
            Op::Mul { a, b } => {
                self.accum_with(*a, |nodes, ga| {
                    for ((d, s), v) in ga.iter_mut().zip(g).zip(nodes[b.0].value.data()) {
                        *d += *s * *v;
                    }
                });
                self.accum_with(*b, |nodes, gb| {
                    for ((d, s), v) in gb.iter_mut().zip(g).zip(nodes[a.0].value.data()) {
                        *d += *s * *v;
                    }
                });
            }
            Op::Scale { x, factor } => {
                let factor = *factor;
                if let Some(gx) = self.accum(*x) {
                    for (d, s) in gx.iter_mut().zip(g) {
                        *d += *s * factor;
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(gx) = self.accum(*x) {
                    for d in gx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::Mean { x } => {
                if let Some(gx) = self.accum(*x) {
                    let s = g[0] / T::lit(gx.len() as f64);
                    for d in gx.iter_mut() {
                        *d += s;
                    }
                }
            }
        }
        self.nodes[idx].op = op;
    }
}
