//! Convolution, ReLU, and the index-tracking pool/unpool pair.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mininet::tensor::Tensor;

/// 2D convolution, stride 1, zero padding (k-1)/2 so spatial dims are
/// preserved. Weights are laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub ksize: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    /// Glorot-uniform init in +-sqrt(6 / (fan_in + fan_out)). Biases start at
    /// a small positive constant: the decoder convolutions see sparse
    /// unpooled maps whose all-zero windows would otherwise put
    /// pre-activations exactly on the ReLU corner.
    pub fn new(in_c: usize, out_c: usize, ksize: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (in_c * ksize * ksize) as f64;
        let fan_out = (out_c * ksize * ksize) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let weights =
            (0..out_c * in_c * ksize * ksize).map(|_| rng.random_range(-limit..limit)).collect();
        Self { in_c, out_c, ksize, weights, bias: vec![0.01; out_c] }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn widx(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.in_c + ci) * self.ksize + ky) * self.ksize + kx
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (c, h, w) = x.shape();
        if c != self.in_c {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_c
            )));
        }
        let pad = (self.ksize - 1) / 2;
        let k = self.ksize;
        let mut out = Tensor::zeros(self.out_c, h, w);
        for co in 0..self.out_c {
            for ci in 0..c {
                let plane = x.plane(ci);
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = self.weights[self.widx(co, ci, ky, kx)];
                        if wgt == 0.0 {
                            continue;
                        }
                        // Input row y + ky - pad, clipped to the valid band.
                        let y0 = pad.saturating_sub(ky);
                        let y1 = (h + pad - ky).min(h);
                        let x0 = pad.saturating_sub(kx);
                        let x1 = (w + pad - kx).min(w);
                        for y in y0..y1 {
                            let iy = y + ky - pad;
                            let src = &plane[iy * w + (x0 + kx - pad)..iy * w + (x1 + kx - pad)];
                            let base = out.idx(co, y, x0);
                            let dst = &mut out.data_mut()[base..base + (x1 - x0)];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wgt * s;
                            }
                        }
                    }
                }
            }
            let bias = self.bias[co];
            let base = co * h * w;
            for v in &mut out.data_mut()[base..base + h * w] {
                *v += bias;
            }
        }
        Ok(out)
    }

    /// Gradients of the loss w.r.t. input, weights and bias, given the
    /// forward input and the gradient at the output.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, ConvGrads)> {
        let (c, h, w) = x.shape();
        let (gc, gh, gw) = grad_out.shape();
        if c != self.in_c || gc != self.out_c || gh != h || gw != w {
            return Err(Error::Shape(format!(
                "conv backward: input ({c},{h},{w}) grad ({gc},{gh},{gw}) for {}x{} conv",
                self.in_c, self.out_c
            )));
        }
        let pad = (self.ksize - 1) / 2;
        let k = self.ksize;
        let mut dx = Tensor::zeros(c, h, w);
        let mut dw = vec![0.0; self.weights.len()];
        let mut db = vec![0.0; self.out_c];

        for co in 0..self.out_c {
            let gplane = grad_out.plane(co);
            db[co] += gplane.iter().sum::<f64>();
            for ci in 0..c {
                let xplane = x.plane(ci);
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = self.weights[self.widx(co, ci, ky, kx)];
                        let mut wsum = 0.0;
                        let y0 = pad.saturating_sub(ky);
                        let y1 = (h + pad - ky).min(h);
                        let x0 = pad.saturating_sub(kx);
                        let x1 = (w + pad - kx).min(w);
                        for y in y0..y1 {
                            let iy = y + ky - pad;
                            let grow = &gplane[y * w + x0..y * w + x1];
                            let xrow = &xplane[iy * w + (x0 + kx - pad)..iy * w + (x1 + kx - pad)];
                            let base = dx.idx(ci, iy, x0 + kx - pad);
                            let drow = &mut dx.data_mut()[base..base + (x1 - x0)];
                            for i in 0..grow.len() {
                                wsum += grow[i] * xrow[i];
                                drow[i] += wgt * grow[i];
                            }
                        }
                        dw[self.widx(co, ci, ky, kx)] += wsum;
                    }
                }
            }
        }
        Ok((dx, ConvGrads { dw, db }))
    }
}

/// Per-layer gradient accumulators, aligned with [`Conv2d::weights`] and
/// [`Conv2d::bias`].
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

pub fn relu(x: &Tensor) -> Tensor {
    let (c, h, w) = x.shape();
    let mut out = Tensor::zeros(c, h, w);
    for (o, &v) in out.data_mut().iter_mut().zip(x.data()) {
        *o = v.max(0.0);
    }
    out
}

/// Gradient through ReLU given the pre-activation values.
pub fn relu_backward(pre: &Tensor, grad: &Tensor) -> Tensor {
    let (c, h, w) = pre.shape();
    let mut out = Tensor::zeros(c, h, w);
    for i in 0..out.data().len() {
        out.data_mut()[i] = if pre.data()[i] > 0.0 { grad.data()[i] } else { 0.0 };
    }
    out
}

/// Argmax locations recorded by a 2x2/stride-2 max pool: for every output
/// cell, the flat index (y * width + x) of the winning cell in its input
/// channel plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub indices: Vec<u32>,
}

impl PoolIndices {
    pub fn out_height(&self) -> usize {
        self.in_height / 2
    }

    pub fn out_width(&self) -> usize {
        self.in_width / 2
    }

    /// True when every stored index addresses a cell inside its own 2x2
    /// window; the pool/unpool contract depends on it.
    pub fn windows_consistent(&self) -> bool {
        let (oh, ow) = (self.out_height(), self.out_width());
        for c in 0..self.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let idx = self.indices[(c * oh + oy) * ow + ox] as usize;
                    let (y, x) = (idx / self.in_width, idx % self.in_width);
                    if y / 2 != oy || x / 2 != ox {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// 2x2/stride-2 max pool that also reports argmax locations. Ties go to the
/// first cell in row-major window order.
pub fn maxpool_with_indices(x: &Tensor) -> Result<(Tensor, PoolIndices)> {
    let (c, h, w) = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("pool needs even dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut pooled = Tensor::zeros(c, oh, ow);
    let mut indices = vec![0u32; c * oh * ow];
    for ci in 0..c {
        let plane = x.plane(ci);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0u32;
                for wy in 0..2 {
                    for wx in 0..2 {
                        let (y, x) = (2 * oy + wy, 2 * ox + wx);
                        let v = plane[y * w + x];
                        if v > best {
                            best = v;
                            best_idx = (y * w + x) as u32;
                        }
                    }
                }
                pooled.set(ci, oy, ox, best);
                indices[(ci * oh + oy) * ow + ox] = best_idx;
            }
        }
    }
    Ok((pooled, PoolIndices { channels: c, in_height: h, in_width: w, indices }))
}

/// Scatter pooled values back to their argmax positions, zero elsewhere:
/// the sparse upsampling the decoder convolutions learn to densify. The
/// backward pass of [`maxpool_with_indices`] is this same routing applied to
/// the upstream gradient.
pub fn unpool_with_indices(pooled: &Tensor, idx: &PoolIndices) -> Result<Tensor> {
    let (c, oh, ow) = pooled.shape();
    if c != idx.channels || oh != idx.out_height() || ow != idx.out_width() {
        return Err(Error::Shape(format!(
            "unpool: pooled ({c},{oh},{ow}) vs indices for ({},{},{})",
            idx.channels,
            idx.out_height(),
            idx.out_width()
        )));
    }
    let mut out = Tensor::zeros(c, idx.in_height, idx.in_width);
    let plane_len = idx.in_height * idx.in_width;
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let flat = idx.indices[(ci * oh + oy) * ow + ox] as usize;
                out.data_mut()[ci * plane_len + flat] = pooled.get(ci, oy, ox);
            }
        }
    }
    Ok(out)
}

/// Gradient of unpool w.r.t. its pooled input: gather at the indices.
pub fn unpool_backward(grad: &Tensor, idx: &PoolIndices) -> Result<Tensor> {
    let (c, h, w) = grad.shape();
    if c != idx.channels || h != idx.in_height || w != idx.in_width {
        return Err(Error::Shape(format!(
            "unpool backward: grad ({c},{h},{w}) vs indices for ({},{},{})",
            idx.channels, idx.in_height, idx.in_width
        )));
    }
    let (oh, ow) = (idx.out_height(), idx.out_width());
    let mut out = Tensor::zeros(c, oh, ow);
    let plane_len = h * w;
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let flat = idx.indices[(ci * oh + oy) * ow + ox] as usize;
                out.set(ci, oy, ox, grad.data()[ci * plane_len + flat]);
            }
        }
    }
    Ok(out)
}
