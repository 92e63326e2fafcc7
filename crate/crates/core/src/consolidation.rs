//! Diagonal Fisher importance, its stochastic EMA aggregate, the filter-level
//! adjustment and the quadratic consolidation penalty.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FilterMap, Layer, Network, ParamRole, ParamVars};
use crate::ops::{self, ConvGeometry};
use crate::par::{self, Exec};
use crate::real::{gemm, Mat, Real};
use crate::rng::{self, Rng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// How the first Fisher estimate enters the running aggregate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherInit {
    /// The first triggered estimate is copied in as is.
    #[default]
    FirstAssign,
    /// Plain EMA starting from zeros.
    ZeroEma,
}

/// Rows `range` of a batch tensor.
fn slice_rows<T: Real>(x: &Tensor<T>, range: std::ops::Range<usize>) -> Result<Tensor<T>> {
    let w = x.row_len();
    let mut shape = x.shape().to_vec();
    shape[0] = range.len();
    Tensor::new(shape, x.data()[range.start * w..range.end * w].to_vec())
}

fn check_batch<T: Real>(inputs: &Tensor<T>, labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if inputs.batch_len() != labels.len() {
        return Err(Error::shape("fisher batch", inputs.shape(), &[labels.len()]));
    }
    Ok(())
}

/// Sum over a chunk of squared per-sample gradients of `log p(y|x)`.
///
/// One batched forward/backward of `Σ log p(y_n|x_n)` yields every sample's
/// gradient with respect to each layer output. Dense weights then use
/// `Σ_n (a_n²)ᵀ(δ_n²)`, conv weights a per-sample weight-gradient pass.
fn chunk_sq_grad_sum<T: Real>(model: &Network<T>, inputs: Tensor<T>, labels: &[usize]) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let pv = model.bind(&mut tape);
    let x = tape.constant(inputs);
    let (logits, traces) = model.forward_traced(&mut tape, &pv, x)?;
    let lp = tape.log_softmax(logits)?;
    let picked = tape.select_per_row(lp, labels)?;
    let total = tape.sum(picked);
    tape.backward(total)?;

    let offsets = model.param_offsets();
    let ids = model.param_ids();
    let slot = |layer: usize, role: ParamRole| {
        ids.iter()
            .position(|id| id.layer == layer && id.role == role)
            .expect("parameterised layer has weight and bias")
    };
    let mut out = vec![T::zero(); model.param_count()];
    for tr in traces {
        let Some(delta) = tape.grad(tr.output) else {
            continue;
        };
        let (wi, bi) = (slot(tr.layer, ParamRole::Weight), slot(tr.layer, ParamRole::Bias));
        let (woff, wlen) = (offsets[wi], model.params()[wi].numel());
        let (boff, blen) = (offsets[bi], model.params()[bi].numel());
        let d2: Vec<T> = delta.iter().map(|v| *v * *v).collect();
        match model.layers()[tr.layer] {
            Layer::Dense { inputs, outputs } => {
                let n = labels.len();
                let a2: Vec<T> = tape.value(tr.input).data().iter().map(|v| *v * *v).collect();
                gemm(
                    Mat::new(&a2, n, inputs).t(),
                    Mat::new(&d2, n, outputs),
                    &mut out[woff..woff + wlen],
                    true,
                );
                for row in d2.chunks(outputs) {
                    for (o, v) in out[boff..boff + blen].iter_mut().zip(row) {
                        *o += *v;
                    }
                }
            }
            Layer::Conv2d { stride, padding, .. } => {
                let xin = tape.value(tr.input);
                let mut one = xin.shape().to_vec();
                one[0] = 1;
                let w = &model.params()[wi];
                let g = ConvGeometry::from_shapes(&one, w.shape(), stride, padding)?;
                let yw = delta.len() / labels.len();
                let mut gw = vec![T::zero(); wlen];
                let mut gb = vec![T::zero(); blen];
                for n in 0..labels.len() {
                    gw.fill(T::zero());
                    gb.fill(T::zero());
                    ops::conv2d_backward(
                        xin.row(n),
                        w.data(),
                        &delta[n * yw..(n + 1) * yw],
                        &g,
                        None,
                        Some(&mut gw),
                        Some(&mut gb),
                    );
                    for (o, v) in out[woff..woff + wlen].iter_mut().zip(&gw) {
                        *o += *v * *v;
                    }
                    for (o, v) in out[boff..boff + blen].iter_mut().zip(&gb) {
                        *o += *v * *v;
                    }
                }
            }
            Layer::Relu | Layer::Flatten => {}
        }
    }
    Ok(out)
}

fn reduce_mean<T: Real>(parts: Vec<Result<Vec<T>>>, len: usize, n: usize) -> Result<Vec<T>> {
    let mut total = vec![T::zero(); len];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    let inv = T::one() / T::lit(n as f64);
    for t in total.iter_mut() {
        *t *= inv;
    }
    Ok(total)
}

/// Diagonal empirical Fisher: the mean over samples of the squared gradient
/// of `log p(y|x; θ)`, flat and aligned with `model`'s parameters.
///
/// Samples are processed in chunks of `chunk` rows; chunk sums are reduced
/// in chunk order, so the result does not depend on `exec`.
pub fn estimate_fisher<T: Real>(
    model: &Network<T>,
    inputs: &Tensor<T>,
    labels: &[usize],
    chunk: usize,
    exec: Exec,
) -> Result<Vec<T>> {
    check_batch(inputs, labels)?;
    let n = labels.len();
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let parts = par::map(exec, &starts, |&s| {
        let e = (s + chunk).min(n);
        chunk_sq_grad_sum(model, slice_rows(inputs, s..e)?, &labels[s..e])
    });
    reduce_mean(parts, model.param_count(), n)
}

/// Reference implementation of [`estimate_fisher`] with one full backward
/// pass per sample.
pub fn estimate_fisher_per_sample<T: Real>(
    model: &Network<T>,
    inputs: &Tensor<T>,
    labels: &[usize],
    exec: Exec,
) -> Result<Vec<T>> {
    check_batch(inputs, labels)?;
    let parts = par::map_range(exec, labels.len(), |i| -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let pv = model.bind(&mut tape);
        let x = tape.constant(slice_rows(inputs, i..i + 1)?);
        let logits = model.forward(&mut tape, &pv, x)?;
        let lp = tape.log_softmax(logits)?;
        let picked = tape.select_per_row(lp, &labels[i..i + 1])?;
        let total = tape.sum(picked);
        tape.backward(total)?;
        let mut out = Vec::with_capacity(model.param_count());
        for (v, p) in pv.vars().iter().zip(model.params()) {
            match tape.grad(*v) {
                Some(g) => out.extend(g.iter().map(|x| *x * *x)),
                None => out.extend(std::iter::repeat_n(T::zero(), p.numel())),
            }
        }
        Ok(out)
    });
    reduce_mean(parts, model.param_count(), labels.len())
}

/// Fisher diagonal with every conv filter's entries replaced by the filter
/// mean.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjustedFisher<T: Real = f64> {
    pub f_adj: Vec<T>,
}

pub fn adjust_fisher<T: Real>(f_star: &[T], filters: &FilterMap) -> Result<AdjustedFisher<T>> {
    if f_star.len() != filters.len() {
        return Err(Error::shape("adjust_fisher", &[filters.len()], &[f_star.len()]));
    }
    let mut f_adj = f_star.to_vec();
    for r in filters.filters() {
        let mean = f_star[r.clone()].iter().copied().sum::<T>() / T::lit(r.len() as f64);
        f_adj[r.clone()].fill(mean);
    }
    Ok(AdjustedFisher { f_adj })
}

/// Running importance estimate `F*` with its stochastic update gate.
#[derive(Clone, Debug)]
pub struct FisherState<T: Real = f64> {
    f_star: Vec<T>,
    f_adj: Vec<T>,
    filters: FilterMap,
    alpha: T,
    rate: f64,
    init: FisherInit,
    adjust: bool,
    initialized: bool,
    updates: u64,
    rng: Rng,
}

impl<T: Real> FisherState<T> {
    /// Zero-initialised state aligned with `model`. With `adjust` off the
    /// penalty weights are the raw `F*`.
    pub fn new(model: &Network<T>, alpha: f64, rate: f64, init: FisherInit, adjust: bool, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "fisher decay {alpha} and rate {rate} must lie in [0, 1]"
            )));
        }
        let n = model.param_count();
        Ok(FisherState {
            f_star: vec![T::zero(); n],
            f_adj: vec![T::zero(); n],
            filters: FilterMap::of(model),
            alpha: T::lit(alpha),
            rate,
            init,
            adjust,
            initialized: false,
            updates: 0,
            rng: rng::stream(seed, "gate.fisher"),
        })
    }

    pub fn f_star(&self) -> &[T] {
        &self.f_star
    }

    /// Weights used by the consolidation penalty.
    pub fn weights(&self) -> &[T] {
        if self.adjust {
            &self.f_adj
        } else {
            &self.f_star
        }
    }

    pub fn initialized(&self) -> bool {
        self.initialized
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Draws `a ~ U(0,1)`; true when `rate > a`.
    pub fn gate(&mut self) -> bool {
        let a: f64 = self.rng.random();
        self.rate > a
    }

    /// Folds a fresh estimate into `F*` and refreshes the adjusted copy.
    pub fn merge(&mut self, f: &[T]) -> Result<()> {
        if f.len() != self.f_star.len() {
            return Err(Error::shape("fisher merge", &[self.f_star.len()], &[f.len()]));
        }
        if !self.initialized && self.init == FisherInit::FirstAssign {
            self.f_star.copy_from_slice(f);
        } else {
            let b = T::one() - self.alpha;
            for (s, v) in self.f_star.iter_mut().zip(f) {
                *s = self.alpha * *s + b * *v;
            }
        }
        self.initialized = true;
        self.updates += 1;
        if self.adjust {
            self.f_adj = adjust_fisher(&self.f_star, &self.filters)?.f_adj;
        }
        Ok(())
    }

    /// One gated update: draws the gate, and when it fires and `data` holds
    /// samples, estimates the Fisher of `model` on them and merges it.
    pub fn maybe_update(
        &mut self,
        model: &Network<T>,
        data: Option<(&Tensor<T>, &[usize])>,
        chunk: usize,
        exec: Exec,
    ) -> Result<bool> {
        if !self.gate() {
            return Ok(false);
        }
        match data {
            Some((x, y)) if !y.is_empty() => {
                let f = estimate_fisher(model, x, y, chunk, exec)?;
                self.merge(&f)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }
}

/// Records `Σ_i w[i]·(θ[i] − anchor[i])²` on the tape; gradients flow to
/// `params` only.
pub fn consolidation_loss<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamVars,
    anchor: &Network<T>,
    weights: &[T],
) -> Result<Var> {
    if params.vars().len() != anchor.params().len() || weights.len() != anchor.param_count() {
        return Err(Error::shape(
            "consolidation_loss",
            &[anchor.params().len(), anchor.param_count()],
            &[params.vars().len(), weights.len()],
        ));
    }
    let mut acc: Option<Var> = None;
    let mut off = 0;
    for (v, a) in params.vars().iter().zip(anchor.params()) {
        if tape.shape(*v) != a.shape() {
            return Err(Error::shape("consolidation_loss", a.shape(), tape.shape(*v)));
        }
        let n = a.numel();
        let term = tape.weighted_sq_dist(*v, a.data(), &weights[off..off + n])?;
        off += n;
        acc = Some(match acc {
            None => term,
            Some(s) => tape.add(s, term)?,
        });
    }
    Ok(match acc {
        Some(v) => v,
        None => tape.constant(Tensor::scalar(T::zero())),
    })
}

/// Tape-free value of the consolidation penalty.
pub fn consolidation_value<T: Real>(theta: &Network<T>, anchor: &Network<T>, weights: &[T]) -> Result<T> {
    if !theta.same_structure(anchor) || weights.len() != theta.param_count() {
        return Err(Error::shape(
            "consolidation_value",
            &[theta.param_count()],
            &[anchor.param_count(), weights.len()],
        ));
    }
    let mut acc = T::zero();
    let mut off = 0;
    for (p, a) in theta.params().iter().zip(anchor.params()) {
        for ((x, y), w) in p.data().iter().zip(a.data()).zip(&weights[off..off + p.numel()]) {
            let d = *x - *y;
            acc += *w * d * d;
        }
        off += p.numel();
    }
    Ok(acc)
}
