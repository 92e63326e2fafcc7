//! Episodic memory (reservoir-sampled replay buffer) and semantic memory
//! (stochastically gated EMA of the working model).

use std::io::{Read, Write};

use rand::{Rng as _, SeedableRng};

use crate::error::{Error, Result};
use crate::models::{ema_update, Network};
use crate::real::Real;
use crate::rng::{self, Rng};
use crate::tensor::{numel, Tensor};

/// Fixed-capacity buffer of `(input, label, optional logits)` entries kept by
/// reservoir sampling: after `N` offers every offered sample is present with
/// probability `capacity / N`.
#[derive(Clone, Debug)]
pub struct EpisodicBuffer<T: Real = f64> {
    capacity: usize,
    seen: u64,
    sample_shape: Option<Vec<usize>>,
    logit_dim: Option<usize>,
    inputs: Vec<T>,
    labels: Vec<usize>,
    logits: Vec<T>,
    rng: Rng,
}

/// A minibatch drawn from the buffer.
#[derive(Clone, Debug)]
pub struct ReplayBatch<T: Real = f64> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
    pub logits: Option<Tensor<T>>,
    pub indices: Vec<usize>,
}

impl<T: Real> ReplayBatch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl<T: Real> EpisodicBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        EpisodicBuffer {
            capacity,
            seen: 0,
            sample_shape: None,
            logit_dim: None,
            inputs: Vec::new(),
            labels: Vec::new(),
            logits: Vec::new(),
            rng: rng::stream(seed, "buffer"),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of samples offered so far (N_s).
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> Option<&[usize]> {
        self.sample_shape.as_deref()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[T] {
        let w = self.sample_width();
        &self.inputs[i * w..(i + 1) * w]
    }

    pub fn logits_of(&self, i: usize) -> Option<&[T]> {
        self.logit_dim.map(|d| &self.logits[i * d..(i + 1) * d])
    }

    fn sample_width(&self) -> usize {
        self.sample_shape.as_deref().map(numel).unwrap_or(0)
    }

    fn check_entry(&mut self, shape: &[usize], x: &[T], logits: Option<&[T]>) -> Result<()> {
        match &self.sample_shape {
            Some(s) if s != shape => return Err(Error::shape("buffer entry", s, shape)),
            Some(_) => {}
            None => self.sample_shape = Some(shape.to_vec()),
        }
        if x.len() != numel(shape) {
            return Err(Error::shape("buffer entry", shape, &[x.len()]));
        }
        match (self.logit_dim, logits) {
            (Some(d), Some(l)) if l.len() != d => Err(Error::shape("buffer logits", &[d], &[l.len()])),
            (Some(_), None) if !self.labels.is_empty() => {
                Err(Error::State("buffer stores logits but none were given".into()))
            }
            (None, Some(_)) if !self.labels.is_empty() => {
                Err(Error::State("buffer entries carry no logits".into()))
            }
            (None, Some(l)) => {
                self.logit_dim = Some(l.len());
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Offers one sample; returns whether it was stored.
    pub fn reservoir_add(&mut self, sample_shape: &[usize], x: &[T], label: usize, logits: Option<&[T]>) -> Result<bool> {
        self.check_entry(sample_shape, x, logits)?;
        self.seen += 1;
        let slot = if self.labels.len() < self.capacity {
            None
        } else {
            let j = self.rng.random_range(0..self.seen);
            if j >= self.capacity as u64 {
                return Ok(false);
            }
            Some(j as usize)
        };
        let w = x.len();
        match slot {
            None => {
                self.inputs.extend_from_slice(x);
                self.labels.push(label);
                if let Some(l) = logits {
                    self.logits.extend_from_slice(l);
                }
            }
            Some(j) => {
                self.inputs[j * w..(j + 1) * w].copy_from_slice(x);
                self.labels[j] = label;
                if let (Some(l), Some(d)) = (logits, self.logit_dim) {
                    self.logits[j * d..(j + 1) * d].copy_from_slice(l);
                }
            }
        }
        Ok(true)
    }

    /// Offers every row of a batch in order; returns how many were stored.
    pub fn add_batch(&mut self, inputs: &Tensor<T>, labels: &[usize], logits: Option<&Tensor<T>>) -> Result<usize> {
        if inputs.batch_len() != labels.len() {
            return Err(Error::shape("add_batch", inputs.shape(), &[labels.len()]));
        }
        let shape = &inputs.shape()[1..];
        let mut stored = 0;
        for (i, &y) in labels.iter().enumerate() {
            let l = logits.map(|t| t.row(i));
            if self.reservoir_add(shape, inputs.row(i), y, l)? {
                stored += 1;
            }
        }
        Ok(stored)
    }

    /// Draws `n` entries uniformly: without replacement when `n` does not
    /// exceed the buffer size, with replacement otherwise.
    pub fn sample_batch(&mut self, n: usize) -> Result<ReplayBatch<T>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let len = self.len();
        let indices: Vec<usize> = if n <= len {
            rand::seq::index::sample(&mut self.rng, len, n).into_vec()
        } else {
            (0..n).map(|_| self.rng.random_range(0..len)).collect()
        };
        Ok(self.gather(&indices))
    }

    /// Entries at `indices` stacked into a batch.
    pub fn gather(&self, indices: &[usize]) -> ReplayBatch<T> {
        let shape = self.sample_shape.clone().unwrap_or_default();
        let inputs = Tensor::stack_rows(&shape, indices.iter().map(|&i| self.input(i)))
            .expect("buffer rows share one shape");
        let logits = self.logit_dim.map(|d| {
            Tensor::stack_rows(&[d], indices.iter().map(|&i| self.logits_of(i).expect("logits stored")))
                .expect("logit rows share one shape")
        });
        ReplayBatch {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            logits,
            indices: indices.to_vec(),
        }
    }

    /// The whole buffer as one batch, in slot order.
    pub fn all(&self) -> ReplayBatch<T> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.gather(&idx)
    }

    /// Number of stored entries per class label.
    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut c = vec![0; classes];
        for &y in &self.labels {
            if y < classes {
                c[y] += 1;
            }
        }
        c
    }

    /// Serialises the full buffer state, RNG included.
    ///
    /// Layout (little endian): magic `SYNBUF01`, u64 capacity, u64 seen,
    /// u64 item count, u64 ndim, ndim × u64 sample dims, u64 logit dim (0 when
    /// absent), 32-byte RNG seed, u64 RNG stream, u128 RNG word position, then
    /// per item: u64 label, f64 inputs, f64 logits.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        let shape = self.sample_shape.clone().unwrap_or_default();
        for v in [
            self.capacity as u64,
            self.seen,
            self.len() as u64,
            shape.len() as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for d in &shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        w.write_all(&(self.logit_dim.unwrap_or(0) as u64).to_le_bytes())?;
        w.write_all(&self.rng.get_seed())?;
        w.write_all(&self.rng.get_stream().to_le_bytes())?;
        w.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        for i in 0..self.len() {
            w.write_all(&(self.labels[i] as u64).to_le_bytes())?;
            for v in self.input(i) {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
            if let Some(l) = self.logits_of(i) {
                for v in l {
                    w.write_all(&v.as_f64().to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn restore<R: Read>(r: R) -> Result<Self> {
        let mut rd = Reader { inner: r, offset: 0 };
        let mut magic = [0u8; 8];
        rd.exact(&mut magic, "magic")?;
        if &magic != DUMP_MAGIC {
            return Err(Error::format(DUMP_FILE, 0, "bad magic"));
        }
        let capacity = rd.u64("capacity")? as usize;
        let seen = rd.u64("seen count")?;
        let count = rd.u64("item count")? as usize;
        let ndim = rd.u64("ndim")? as usize;
        let shape = (0..ndim)
            .map(|_| rd.u64("sample dim").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let logit_dim = rd.u64("logit dim")? as usize;
        let mut seed = [0u8; 32];
        rd.exact(&mut seed, "rng seed")?;
        let stream = rd.u64("rng stream")?;
        let mut pos = [0u8; 16];
        rd.exact(&mut pos, "rng position")?;
        if count > capacity || count as u64 > seen {
            return Err(Error::format(DUMP_FILE, rd.offset, "item count exceeds capacity or seen count"));
        }
        let mut rng = Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(u128::from_le_bytes(pos));
        let width = numel(&shape);
        let mut buf = EpisodicBuffer {
            capacity,
            seen,
            sample_shape: (count > 0 || ndim > 0).then_some(shape),
            logit_dim: (logit_dim > 0).then_some(logit_dim),
            inputs: Vec::with_capacity(count * width),
            labels: Vec::with_capacity(count),
            logits: Vec::with_capacity(count * logit_dim),
            rng,
        };
        for _ in 0..count {
            buf.labels.push(rd.u64("label")? as usize);
            for _ in 0..width {
                buf.inputs.push(T::lit(rd.f64("input")?));
            }
            for _ in 0..logit_dim {
                buf.logits.push(T::lit(rd.f64("logits")?));
            }
        }
        Ok(buf)
    }
}

const DUMP_MAGIC: &[u8; 8] = b"SYNBUF01";
const DUMP_FILE: &str = "buffer dump";

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::format(DUMP_FILE, self.offset, format!("truncated while reading {what}")))?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.exact(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}

/// EMA shadow of the working model, updated with probability `rate` per call.
#[derive(Clone, Debug)]
pub struct SemanticMemory<T: Real = f64> {
    model: Network<T>,
    decay: T,
    rate: f64,
    rng: Rng,
    updates: u64,
}

impl<T: Real> SemanticMemory<T> {
    /// Starts as a copy of `working`.
    pub fn new(working: &Network<T>, decay: f64, rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) || !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "semantic memory decay {decay} and rate {rate} must lie in [0, 1]"
            )));
        }
        Ok(SemanticMemory {
            model: working.clone(),
            decay: T::lit(decay),
            rate,
            rng: rng::stream(seed, "gate.semantic"),
            updates: 0,
        })
    }

    pub fn model(&self) -> &Network<T> {
        &self.model
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Draws `a ~ U(0,1)` and applies the EMA when `rate > a`.
    pub fn maybe_update(&mut self, working: &Network<T>) -> Result<bool> {
        let a: f64 = self.rng.random();
        if self.rate > a {
            ema_update(&mut self.model, working, self.decay)?;
            self.updates += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}
