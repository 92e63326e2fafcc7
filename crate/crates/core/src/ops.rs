//! Forward and backward kernels. The tape and the tape-free inference path
//! both call these, so recorded and unrecorded forwards agree bit for bit.

use crate::error::{Error, Result};
use crate::real::{gemm, Mat, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn from_shapes(input: &[usize], weight: &[usize], stride: usize, padding: usize) -> Result<Self> {
        if input.len() != 4 || weight.len() != 4 || input[1] != weight[1] || stride == 0 {
            return Err(Error::shape("conv2d", input, weight));
        }
        let g = ConvGeometry {
            batch: input[0],
            in_channels: input[1],
            height: input[2],
            width: input[3],
            out_channels: weight[0],
            kernel_h: weight[2],
            kernel_w: weight[3],
            stride,
            padding,
        };
        if g.kernel_h > g.height + 2 * padding || g.kernel_w > g.width + 2 * padding {
            return Err(Error::shape("conv2d (kernel larger than padded input)", input, weight));
        }
        Ok(g)
    }

    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.out_h(), self.out_w()]
    }

    /// Input coordinate read by output position `o` and kernel offset `k`, if
    /// it falls inside the unpadded input.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * stride + k) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

/// `y = x·w + b` for `x: [n, i]`, `w: [i, o]`, `b: [o]`.
pub fn dense_forward<T: Real>(x: &[T], w: &[T], b: &[T], n: usize, i: usize, o: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * o];
    gemm(Mat::new(x, n, i), Mat::new(w, i, o), &mut y, false);
    add_bias_rows(&mut y, b);
    y
}

pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    gemm(Mat::new(a, m, k), Mat::new(b, k, n), &mut c, false);
    c
}

/// Adds `bias[c]` to every element of channel `c` where the data is laid out
/// as `[batch, channels, inner]`.
pub fn add_bias_channels<T: Real>(y: &mut [T], bias: &[T], inner: usize) {
    let c = bias.len();
    if c == 0 || inner == 0 {
        return;
    }
    for block in y.chunks_mut(c * inner) {
        for (ch, plane) in block.chunks_mut(inner).enumerate() {
            let b = bias[ch];
            for v in plane {
                *v += b;
            }
        }
    }
}

pub fn add_bias_rows<T: Real>(y: &mut [T], bias: &[T]) {
    add_bias_channels(y, bias, 1);
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Numerically stable row-wise log-softmax of an `[n, c]` block.
pub fn log_softmax_rows<T: Real>(x: &[T], c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    if c == 0 {
        return out;
    }
    for (row, dst) in x.chunks(c).zip(out.chunks_mut(c)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row {
            sum += (*v - max).exp();
        }
        let lse = max + sum.ln();
        for (d, v) in dst.iter_mut().zip(row) {
            *d = *v - lse;
        }
    }
    out
}

pub fn softmax_rows<T: Real>(x: &[T], c: usize) -> Vec<T> {
    let mut p = log_softmax_rows(x, c);
    for v in p.iter_mut() {
        *v = v.exp();
    }
    p
}

pub fn conv2d_forward<T: Real>(x: &[T], w: &[T], b: &[T], g: &ConvGeometry) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut y = vec![T::zero(); g.batch * g.out_channels * oh * ow];
    let in_plane = g.height * g.width;
    let k_plane = g.kernel_h * g.kernel_w;
    for n in 0..g.batch {
        let xn = &x[n * g.in_channels * in_plane..(n + 1) * g.in_channels * in_plane];
        for o in 0..g.out_channels {
            let wo = &w[o * g.in_channels * k_plane..(o + 1) * g.in_channels * k_plane];
            let yo = &mut y[(n * g.out_channels + o) * oh * ow..(n * g.out_channels + o + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for c in 0..g.in_channels {
                        let xc = &xn[c * in_plane..(c + 1) * in_plane];
                        let wc = &wo[c * k_plane..(c + 1) * k_plane];
                        for ky in 0..g.kernel_h {
                            let Some(iy) = ConvGeometry::src(oy, ky, g.stride, g.padding, g.height) else {
                                continue;
                            };
                            for kx in 0..g.kernel_w {
                                let Some(ix) = ConvGeometry::src(ox, kx, g.stride, g.padding, g.width) else {
                                    continue;
                                };
                                acc += xc[iy * g.width + ix] * wc[ky * g.kernel_w + kx];
                            }
                        }
                    }
                    yo[oy * ow + ox] = acc;
                }
            }
        }
    }
    y
}

/// Accumulates input, weight and bias gradients of a convolution given the
/// output gradient `gy`. Any of the destinations may be skipped.
pub fn conv2d_backward<T: Real>(
    x: &[T],
    w: &[T],
    gy: &[T],
    g: &ConvGeometry,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let in_plane = g.height * g.width;
    let k_plane = g.kernel_h * g.kernel_w;
    for n in 0..g.batch {
        for o in 0..g.out_channels {
            let gyo = &gy[(n * g.out_channels + o) * oh * ow..(n * g.out_channels + o + 1) * oh * ow];
            if let Some(gb) = gb.as_deref_mut() {
                for v in gyo {
                    gb[o] += *v;
                }
            }
            for oy in 0..oh {
                for ox in 0..ow {
                    let d = gyo[oy * ow + ox];
                    if d == T::zero() {
                        continue;
                    }
                    for c in 0..g.in_channels {
                        let xbase = (n * g.in_channels + c) * in_plane;
                        let wbase = (o * g.in_channels + c) * k_plane;
                        for ky in 0..g.kernel_h {
                            let Some(iy) = ConvGeometry::src(oy, ky, g.stride, g.padding, g.height) else {
                                continue;
                            };
                            for kx in 0..g.kernel_w {
                                let Some(ix) = ConvGeometry::src(ox, kx, g.stride, g.padding, g.width) else {
                                    continue;
                                };
                                let xi = xbase + iy * g.width + ix;
                                let wi = wbase + ky * g.kernel_w + kx;
                                if let Some(gw) = gw.as_deref_mut() {
                                    gw[wi] += d * x[xi];
                                }
                                if let Some(gx) = gx.as_deref_mut() {
                                    gx[xi] += d * w[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
