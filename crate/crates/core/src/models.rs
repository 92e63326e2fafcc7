//! Network definitions, flat parameter addressing, filter grouping and the
//! EMA weight update used by the semantic memory.

use std::io::{Read, Write};
use std::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{self, ConvGeometry};
use crate::real::Real;
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::{numel, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Flatten,
}

impl Layer {
    fn param_shapes(&self) -> Vec<(ParamRole, Vec<usize>)> {
        match *self {
            Layer::Dense { inputs, outputs } => vec![
                (ParamRole::Weight, vec![inputs, outputs]),
                (ParamRole::Bias, vec![outputs]),
            ],
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                (ParamRole::Weight, vec![out_channels, in_channels, kernel, kernel]),
                (ParamRole::Bias, vec![out_channels]),
            ],
            Layer::Relu | Layer::Flatten => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
            Layer::Relu | Layer::Flatten => 0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            Layer::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(Error::shape("dense input", input, &[inputs]));
                }
                Ok(vec![outputs])
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(Error::shape("conv2d input", input, &[in_channels, 0, 0]));
                }
                let mut full = vec![1];
                full.extend_from_slice(input);
                let g = ConvGeometry::from_shapes(&full, &[out_channels, in_channels, kernel, kernel], stride, padding)?;
                Ok(vec![out_channels, g.out_h(), g.out_w()])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![numel(input)]),
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Weight,
    Bias,
}

/// Stable identity of a parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId {
    pub layer: usize,
    pub role: ParamRole,
}

/// Parameter handles of one network bound onto a tape.
#[derive(Clone, Debug)]
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Input and output of a parameterised layer recorded during a traced forward.
#[derive(Clone, Copy, Debug)]
pub struct LayerTrace {
    pub layer: usize,
    pub input: Var,
    pub output: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Real = f64> {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<Tensor<T>>,
    ids: Vec<ParamId>,
    output_dim: usize,
}

impl<T: Real> Network<T> {
    /// Builds a network with weights drawn from U(−1/√fan_in, 1/√fan_in).
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, "model.init");
        let mut shape = input_shape.clone();
        let mut params = Vec::new();
        let mut ids = Vec::new();
        for (li, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape)?;
            let bound = match layer.fan_in() {
                0 => 0.0,
                f => 1.0 / (f as f64).sqrt(),
            };
            for (role, pshape) in layer.param_shapes() {
                let n = numel(&pshape);
                let data = (0..n)
                    .map(|_| T::lit(rng.random_range(-bound..=bound)))
                    .collect();
                params.push(Tensor::new(pshape, data)?.with_requires_grad(true));
                ids.push(ParamId { layer: li, role });
            }
        }
        if shape.len() != 1 {
            return Err(Error::Config(format!(
                "network must end in a flat output, got per-sample shape {shape:?}"
            )));
        }
        Ok(Network {
            input_shape,
            layers,
            params,
            ids,
            output_dim: shape[0],
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Starting flat index of each parameter tensor.
    pub fn param_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.params
            .iter()
            .map(|p| {
                let o = off;
                off += p.numel();
                o
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in &self.params {
            out.extend_from_slice(p.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape("set_flat_params", &[self.param_count()], &[flat.len()]));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.numel();
            p.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.layers == other.layers
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.shape() == b.shape())
    }

    fn check_structure(&self, other: &Self, op: &'static str) -> Result<()> {
        if !self.same_structure(other) {
            return Err(Error::shape(op, &[self.param_count()], &[other.param_count()]));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            ids: self.ids.clone(),
            output_dim: self.output_dim,
        }
    }

    /// Records the parameters as trainable leaves.
    pub fn bind(&self, tape: &mut Tape<T>) -> ParamVars {
        ParamVars(self.params.iter().map(|p| tape.param(p.clone())).collect())
    }

    /// Records the parameters as constants.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> ParamVars {
        ParamVars(self.params.iter().map(|p| tape.constant(p.clone())).collect())
    }

    fn batch_shape(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        let per = numel(&self.input_shape);
        if per == 0 || !x.numel().is_multiple_of(per) {
            return Err(Error::shape("network input", x.shape(), &self.input_shape));
        }
        let mut shape = vec![x.numel() / per];
        shape.extend_from_slice(&self.input_shape);
        Ok(shape)
    }

    pub fn forward(&self, tape: &mut Tape<T>, params: &ParamVars, x: Var) -> Result<Var> {
        self.forward_traced(tape, params, x).map(|(out, _)| out)
    }

    /// Forward pass that also reports the input and output of every
    /// parameterised layer.
    pub fn forward_traced(
        &self,
        tape: &mut Tape<T>,
        params: &ParamVars,
        x: Var,
    ) -> Result<(Var, Vec<LayerTrace>)> {
        if params.0.len() != self.params.len() {
            return Err(Error::shape("forward params", &[self.params.len()], &[params.0.len()]));
        }
        let shape = self.batch_shape(tape.value(x))?;
        let mut h = if tape.shape(x) == shape.as_slice() {
            x
        } else {
            tape.reshape(x, shape)?
        };
        let mut traces = Vec::new();
        let mut pi = 0;
        for (li, layer) in self.layers.iter().enumerate() {
            let input = h;
            match *layer {
                Layer::Dense { .. } => {
                    let z = tape.matmul(h, params.0[pi])?;
                    h = tape.add_bias(z, params.0[pi + 1])?;
                    pi += 2;
                }
                Layer::Conv2d { stride, padding, .. } => {
                    h = tape.conv2d(h, params.0[pi], params.0[pi + 1], stride, padding)?;
                    pi += 2;
                }
                Layer::Relu => h = tape.relu(h),
                Layer::Flatten => {
                    let s = tape.shape(h);
                    let flat = vec![s[0], numel(&s[1..])];
                    h = tape.reshape(h, flat)?;
                }
            }
            if layer.has_params() {
                traces.push(LayerTrace {
                    layer: li,
                    input,
                    output: h,
                });
            }
        }
        Ok((h, traces))
    }

    /// Tape-free forward pass returning `[N, output_dim]` logits.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut shape = self.batch_shape(x)?;
        let mut h = x.data().to_vec();
        let mut pi = 0;
        for layer in &self.layers {
            match *layer {
                Layer::Dense { inputs, outputs } => {
                    let n = shape[0];
                    h = ops::dense_forward(&h, self.params[pi].data(), self.params[pi + 1].data(), n, inputs, outputs);
                    shape = vec![n, outputs];
                    pi += 2;
                }
                Layer::Conv2d { stride, padding, .. } => {
                    let w = &self.params[pi];
                    let g = ConvGeometry::from_shapes(&shape, w.shape(), stride, padding)?;
                    h = ops::conv2d_forward(&h, w.data(), self.params[pi + 1].data(), &g);
                    shape = g.out_shape();
                    pi += 2;
                }
                Layer::Relu => ops::relu_inplace(&mut h),
                Layer::Flatten => shape = vec![shape[0], numel(&shape[1..])],
            }
        }
        Tensor::new(shape, h)
    }

    /// Copies the tape gradients of `params` into the parameters' `grad`
    /// slots (zeros where no gradient reached a parameter).
    pub fn absorb_grads(&mut self, tape: &mut Tape<T>, params: &ParamVars) -> Result<()> {
        for (p, v) in self.params.iter_mut().zip(&params.0) {
            let g = tape.take_grad(*v).unwrap_or_else(|| vec![T::zero(); p.numel()]);
            p.set_grad(g)?;
        }
        Ok(())
    }

    /// Range of flat indices occupied by each parameterised layer's weight.
    pub(crate) fn weight_ranges(&self) -> Vec<(usize, Range<usize>)> {
        let offsets = self.param_offsets();
        self.ids
            .iter()
            .zip(&self.params)
            .zip(offsets)
            .filter(|((id, _), _)| id.role == ParamRole::Weight)
            .map(|((id, p), off)| (id.layer, off..off + p.numel()))
            .collect()
    }
}

/// `Dense(input_dim, hidden)-ReLU-Dense(hidden, hidden)-ReLU-Dense(hidden, classes)`.
pub fn build_mlp<T: Real>(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<Network<T>> {
    if input_dim == 0 || hidden == 0 || classes == 0 {
        return Err(Error::Config("MLP dimensions must be positive".into()));
    }
    Network::new(
        vec![input_dim],
        vec![
            Layer::Dense {
                inputs: input_dim,
                outputs: hidden,
            },
            Layer::Relu,
            Layer::Dense {
                inputs: hidden,
                outputs: hidden,
            },
            Layer::Relu,
            Layer::Dense {
                inputs: hidden,
                outputs: classes,
            },
        ],
        seed,
    )
}

/// Small CNN for `channels × size × size` inputs:
///
/// ```text
/// Conv(channels→8, 3×3, stride 2, pad 1)   size → ⌊(size−1)/2⌋+1
/// ReLU
/// Conv(8→16, 3×3, stride 2, pad 1)         s1   → ⌊(s1−1)/2⌋+1
/// ReLU, Flatten                            16·s2·s2
/// Dense(16·s2·s2 → classes)
/// ```
///
/// For 28×28 inputs the spatial sizes are 14×14 and 7×7, so the dense layer
/// has 784 inputs.
pub fn build_small_cnn<T: Real>(channels: usize, size: usize, classes: usize, seed: u64) -> Result<Network<T>> {
    if channels == 0 || size == 0 || classes == 0 {
        return Err(Error::Config("CNN dimensions must be positive".into()));
    }
    let s1 = (size - 1) / 2 + 1;
    let s2 = (s1 - 1) / 2 + 1;
    Network::new(
        vec![channels, size, size],
        vec![
            Layer::Conv2d {
                in_channels: channels,
                out_channels: 8,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            Layer::Relu,
            Layer::Conv2d {
                in_channels: 8,
                out_channels: 16,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense {
                inputs: 16 * s2 * s2,
                outputs: classes,
            },
        ],
        seed,
    )
}

/// `target ← alpha·target + (1 − alpha)·source`, parameter by parameter.
pub fn ema_update<T: Real>(target: &mut Network<T>, source: &Network<T>, alpha: T) -> Result<()> {
    target.check_structure(source, "ema_update")?;
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::Config(format!("EMA decay {alpha} outside [0, 1]")));
    }
    let beta = T::one() - alpha;
    for (t, s) in target.params.iter_mut().zip(&source.params) {
        for (a, b) in t.data_mut().iter_mut().zip(s.data()) {
            *a = alpha * *a + beta * *b;
        }
    }
    Ok(())
}

/// Importance groups over flat parameter indices: each output channel of a
/// convolution kernel is one group; every other parameter (dense weights and
/// all biases) is a group of its own.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterMap {
    len: usize,
    filters: Vec<Range<usize>>,
}

impl FilterMap {
    pub fn of<T: Real>(net: &Network<T>) -> Self {
        let mut filters = Vec::new();
        for (layer, range) in net.weight_ranges() {
            if let Layer::Conv2d {
                in_channels, kernel, ..
            } = net.layers[layer]
            {
                let size = in_channels * kernel * kernel;
                let mut start = range.start;
                while start < range.end {
                    filters.push(start..start + size);
                    start += size;
                }
            }
        }
        FilterMap {
            len: net.param_count(),
            filters,
        }
    }

    /// Total number of parameters covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Multi-parameter (convolution filter) groups.
    pub fn filters(&self) -> &[Range<usize>] {
        &self.filters
    }

    /// Every group, singletons included, in index order.
    pub fn groups(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut next = 0;
        for f in &self.filters {
            out.extend((next..f.start).map(|i| i..i + 1));
            out.push(f.clone());
            next = f.end;
        }
        out.extend((next..self.len).map(|i| i..i + 1));
        out
    }

    pub fn group_of(&self, index: usize) -> Range<usize> {
        let pos = self.filters.partition_point(|f| f.end <= index);
        match self.filters.get(pos) {
            Some(f) if f.contains(&index) => f.clone(),
            _ => index..index + 1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    param_counts: Vec<usize>,
    #[serde(default)]
    fisher_len: usize,
}

const CHECKPOINT_FORMAT: &str = "synergy-checkpoint";

/// Writes `[u64 LE header length][JSON header][f64 LE parameters][f64 LE fisher]`.
pub fn save_checkpoint<T: Real, W: Write>(mut w: W, net: &Network<T>, fisher: Option<&[T]>) -> Result<()> {
    let fisher = fisher.unwrap_or(&[]);
    if !fisher.is_empty() && fisher.len() != net.param_count() {
        return Err(Error::shape("checkpoint fisher", &[net.param_count()], &[fisher.len()]));
    }
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        input_shape: net.input_shape.clone(),
        layers: net.layers.clone(),
        param_counts: net.params.iter().map(Tensor::numel).collect(),
        fisher_len: fisher.len(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in net.params.iter().flat_map(|p| p.data()).chain(fisher) {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint<T: Real, R: Read>(mut r: R) -> Result<(Network<T>, Option<Vec<T>>)> {
    const FILE: &str = "checkpoint";
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::format(FILE, 0, "missing header length"))?;
    let hlen = u64::from_le_bytes(len);
    let mut json = vec![0u8; hlen as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::format(FILE, 8, format!("header truncated (expected {hlen} bytes)")))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| Error::format(FILE, 8, e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::format(FILE, 8, format!("unknown format '{}'", header.format)));
    }
    let mut net = Network::<T>::new(header.input_shape, header.layers, 0)?;
    let expected: Vec<usize> = net.params.iter().map(Tensor::numel).collect();
    if expected != header.param_counts {
        return Err(Error::format(
            FILE,
            8,
            format!("parameter counts {:?} do not match layers {:?}", header.param_counts, expected),
        ));
    }
    let mut offset = 8 + hlen;
    let mut read_values = |n: usize| -> Result<Vec<T>> {
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf).map_err(|_| {
            Error::format(FILE, offset, format!("expected {} bytes of parameter data", n * 8))
        })?;
        offset += buf.len() as u64;
        Ok(buf
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect())
    };
    let flat = read_values(net.param_count())?;
    let fisher = match header.fisher_len {
        0 => None,
        n if n == net.param_count() => Some(read_values(n)?),
        n => {
            return Err(Error::format(FILE, 8, format!("fisher length {n} does not match parameter count")));
        }
    };
    net.set_flat_params(&flat)?;
    Ok((net, fisher))
}
