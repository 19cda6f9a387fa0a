//! The compact encoder-decoder classifier.
//!
//! Two encoder stages (3x3 conv + ReLU + 2x2 max pool with stored indices)
//! mirrored by two decoder stages (index unpool + 3x3 conv + ReLU), then a
//! 1x1 conv to per-pixel class logits. The decoder places features exactly
//! where the encoder found its maxima, so output pixels line up with input
//! pixels without learned upsampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ClassLabel, LabelMap};
use crate::error::{Error, Result};
use crate::mininet::layers::{
    maxpool_with_indices, relu, relu_backward, unpool_backward, unpool_with_indices, Conv2d,
    ConvGrads, PoolIndices,
};
use crate::mininet::tensor::Tensor;

pub const DEFAULT_STAGE1_FILTERS: usize = 16;
pub const DEFAULT_STAGE2_FILTERS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct MiniNet {
    pub(crate) enc1: Conv2d,
    pub(crate) enc2: Conv2d,
    pub(crate) dec2: Conv2d,
    pub(crate) dec1: Conv2d,
    pub(crate) head: Conv2d,
}

/// Everything the backward pass needs from a forward run.
pub(crate) struct ForwardTrace {
    pub z1: Tensor,
    pub p1: Tensor,
    pub idx1: PoolIndices,
    pub z2: Tensor,
    pub idx2: PoolIndices,
    pub u2: Tensor,
    pub z3: Tensor,
    pub u1: Tensor,
    pub z4: Tensor,
    pub a4: Tensor,
    pub logits: Tensor,
}

/// Gradients for every layer, ordered like [`MiniNet::layers`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub per_layer: Vec<ConvGrads>,
}

impl MiniNet {
    pub fn new(
        in_channels: usize,
        stage1_filters: usize,
        stage2_filters: usize,
        num_classes: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MiniNet {
            enc1: Conv2d::new(in_channels, stage1_filters, 3, &mut rng),
            enc2: Conv2d::new(stage1_filters, stage2_filters, 3, &mut rng),
            dec2: Conv2d::new(stage2_filters, stage1_filters, 3, &mut rng),
            dec1: Conv2d::new(stage1_filters, stage1_filters, 3, &mut rng),
            head: Conv2d::new(stage1_filters, num_classes, 1, &mut rng),
        }
    }

    /// Production shape: 16 and 32 filters, six classes.
    pub fn with_default_width(in_channels: usize, seed: u64) -> Self {
        Self::new(in_channels, DEFAULT_STAGE1_FILTERS, DEFAULT_STAGE2_FILTERS, 6, seed)
    }

    pub fn in_channels(&self) -> usize {
        self.enc1.in_c
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_c
    }

    pub(crate) fn layers(&self) -> [&Conv2d; 5] {
        [&self.enc1, &self.enc2, &self.dec2, &self.dec1, &self.head]
    }

    pub(crate) fn layers_mut(&mut self) -> [&mut Conv2d; 5] {
        [&mut self.enc1, &mut self.enc2, &mut self.dec2, &mut self.dec1, &mut self.head]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Flat parameter access in a fixed order (layer by layer, weights then
    /// bias); the finite-difference harness perturbs parameters through this.
    pub fn get_param(&self, mut i: usize) -> f64 {
        for layer in self.layers() {
            if i < layer.weights.len() {
                return layer.weights[i];
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                return layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut i: usize, v: f64) {
        for layer in self.layers_mut() {
            if i < layer.weights.len() {
                layer.weights[i] = v;
                return;
            }
            i -= layer.weights.len();
            if i < layer.bias.len() {
                layer.bias[i] = v;
                return;
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.shape();
        if c != self.in_channels() {
            return Err(Error::Shape(format!(
                "network built for {} channels, input has {c}",
                self.in_channels()
            )));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Shape(format!(
                "two pooling stages need dims divisible by 4, got {h}x{w}"
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_trace(&self, x: &Tensor) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let z1 = self.enc1.forward(x)?;
        let a1 = relu(&z1);
        let (p1, idx1) = maxpool_with_indices(&a1)?;
        let z2 = self.enc2.forward(&p1)?;
        let a2 = relu(&z2);
        let (p2, idx2) = maxpool_with_indices(&a2)?;

        let u2 = unpool_with_indices(&p2, &idx2)?;
        let z3 = self.dec2.forward(&u2)?;
        let a3 = relu(&z3);
        let u1 = unpool_with_indices(&a3, &idx1)?;
        let z4 = self.dec1.forward(&u1)?;
        let a4 = relu(&z4);
        let logits = self.head.forward(&a4)?;
        Ok(ForwardTrace { z1, p1, idx1, z2, idx2, u2, z3, u1, z4, a4, logits })
    }

    /// Per-pixel class logits with the input's spatial dimensions.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(x)?.logits)
    }

    pub(crate) fn backward(
        &self,
        x: &Tensor,
        trace: &ForwardTrace,
        dlogits: &Tensor,
    ) -> Result<Gradients> {
        let (d_a4, g_head) = self.head.backward(&trace.a4, dlogits)?;
        let d_z4 = relu_backward(&trace.z4, &d_a4);
        let (d_u1, g_dec1) = self.dec1.backward(&trace.u1, &d_z4)?;
        let d_a3 = unpool_backward(&d_u1, &trace.idx1)?;
        let d_z3 = relu_backward(&trace.z3, &d_a3);
        let (d_u2, g_dec2) = self.dec2.backward(&trace.u2, &d_z3)?;
        let d_p2 = unpool_backward(&d_u2, &trace.idx2)?;
        // Max pool routes gradient to the argmax cell: exactly the unpool
        // scatter applied to the upstream gradient.
        let d_a2 = unpool_with_indices(&d_p2, &trace.idx2)?;
        let d_z2 = relu_backward(&trace.z2, &d_a2);
        let (d_p1, g_enc2) = self.enc2.backward(&trace.p1, &d_z2)?;
        let d_a1 = unpool_with_indices(&d_p1, &trace.idx1)?;
        let d_z1 = relu_backward(&trace.z1, &d_a1);
        let (_, g_enc1) = self.enc1.backward(x, &d_z1)?;
        Ok(Gradients { per_layer: vec![g_enc1, g_enc2, g_dec2, g_dec1, g_head] })
    }

    /// Per-pixel argmax over class logits; ties go to the lowest class id.
    pub fn predict_labels(&self, x: &Tensor) -> Result<LabelMap> {
        let logits = self.forward(x)?;
        let (classes, h, w) = logits.shape();
        let mut map = LabelMap::filled(w as u32, h as u32, ClassLabel::Ignore);
        for y in 0..h {
            for xx in 0..w {
                let mut best_c = 0usize;
                let mut best = logits.get(0, y, xx);
                for c in 1..classes {
                    let v = logits.get(c, y, xx);
                    if v > best {
                        best = v;
                        best_c = c;
                    }
                }
                let label = ClassLabel::from_class_index(best_c).ok_or_else(|| {
                    Error::Shape(format!("class index {best_c} outside label vocabulary"))
                })?;
                map.set(xx as u32, y as u32, label);
            }
        }
        Ok(map)
    }

    /// Smallest margin that keeps the network piecewise-linear around this
    /// input: the minimum |pre-activation| across ReLUs and the minimum gap
    /// between a pooling winner and its runner-up. Finite-difference checks
    /// are only trustworthy when the perturbation cannot cross one of these
    /// boundaries.
    pub fn activation_margin(&self, x: &Tensor) -> Result<f64> {
        let trace = self.forward_trace(x)?;
        let mut margin = f64::INFINITY;
        for z in [&trace.z1, &trace.z2, &trace.z3, &trace.z4] {
            for &v in z.data() {
                margin = margin.min(v.abs());
            }
        }
        for (pre, idx) in
            [(relu(&trace.z1), &trace.idx1), (relu(&trace.z2), &trace.idx2)]
        {
            let (c, h, w) = pre.shape();
            for ci in 0..c {
                let plane = pre.plane(ci);
                for oy in 0..h / 2 {
                    for ox in 0..w / 2 {
                        let winner =
                            idx.indices[(ci * (h / 2) + oy) * (w / 2) + ox] as usize;
                        let best = plane[winner];
                        if best == 0.0 {
                            // All-rectified window: ties at zero are benign,
                            // the cells stay zero under small perturbations.
                            continue;
                        }
                        for wy in 0..2 {
                            for wx in 0..2 {
                                let flat = (2 * oy + wy) * w + 2 * ox + wx;
                                if flat != winner {
                                    margin = margin.min(best - plane[flat]);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(margin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_logits() {
        let mut net = MiniNet::new(3, 4, 5, 6, 1);
        for i in 0..net.param_count() {
            net.set_param(i, 0.0);
        }
        let x = Tensor::zeros(3, 8, 8);
        let logits = net.forward(&x).unwrap();
        assert_eq!(logits.shape(), (6, 8, 8));
        assert!(logits.data().iter().all(|&v| v == 0.0));
        // Uniform logits mean softmax 1/6 per class; argmax tie rule gives
        // the lowest class everywhere.
        let labels = net.predict_labels(&x).unwrap();
        assert!(labels.labels().iter().all(|&l| l == ClassLabel::Sky));
    }

    #[test]
    fn forward_preserves_spatial_dims() {
        for (h, w) in [(8, 8), (16, 12), (4, 24)] {
            let net = MiniNet::new(4, 3, 4, 6, 2);
            let x = Tensor::zeros(4, h, w);
            let logits = net.forward(&x).unwrap();
            assert_eq!(logits.shape(), (6, h, w));
        }
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let net = MiniNet::new(3, 4, 4, 6, 3);
        assert!(net.forward(&Tensor::zeros(4, 8, 8)).is_err());
        assert!(net.forward(&Tensor::zeros(3, 6, 8)).is_err());
    }

    #[test]
    fn param_roundtrip_covers_all_layers() {
        let mut net = MiniNet::new(2, 3, 4, 6, 7);
        let n = net.param_count();
        let snapshot: Vec<f64> = (0..n).map(|i| net.get_param(i)).collect();
        for i in 0..n {
            net.set_param(i, i as f64);
        }
        for i in 0..n {
            assert_eq!(net.get_param(i), i as f64);
        }
        for (i, v) in snapshot.iter().enumerate() {
            net.set_param(i, *v);
        }
        assert_eq!(net, MiniNet::new(2, 3, 4, 6, 7));
    }

    #[test]
    fn prediction_matches_bruteforce_argmax() {
        use rand::Rng;
        let net = MiniNet::new(3, 4, 4, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_vec(
            3,
            8,
            8,
            (0..3 * 64).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let logits = net.forward(&x).unwrap();
        let labels = net.predict_labels(&x).unwrap();
        for y in 0..8u32 {
            for xx in 0..8u32 {
                let mut best = (0usize, f64::NEG_INFINITY);
                for c in 0..6 {
                    let v = logits.get(c, y as usize, xx as usize);
                    if v > best.1 {
                        best = (c, v);
                    }
                }
                assert_eq!(labels.get(xx, y).class_index(), Some(best.0));
            }
        }
    }

    /// Receptive-field confinement: perturbing one input pixel may only move
    /// logits within the radius implied by the architecture. The bound is
    /// computed here with the standard (kernel, stride) recurrence, then
    /// verified by probing.
    #[test]
    fn perturbation_stays_inside_receptive_field() {
        // (kernel, stride) per stage, decoder counted like its mirror.
        let stages: [(usize, f64); 9] = [
            (3, 1.0),
            (2, 2.0), // pool
            (3, 1.0),
            (2, 2.0), // pool
            (2, 0.5), // unpool
            (3, 1.0),
            (2, 0.5), // unpool
            (3, 1.0),
            (1, 1.0), // head
        ];
        let mut rf = 1.0f64;
        let mut jump = 1.0f64;
        for (k, s) in stages {
            rf += (k as f64 - 1.0) * jump;
            jump *= s;
        }
        let radius = (rf / 2.0).ceil() as i64;

        let net = MiniNet::new(3, 4, 5, 6, 11);
        let mut x = Tensor::zeros(3, 16, 16);
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for v in x.data_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let base = net.forward(&x).unwrap();
        let (py, px) = (8usize, 8usize);
        let i = x.idx(1, py, px);
        x.data_mut()[i] += 0.25;
        let bumped = net.forward(&x).unwrap();
        for y in 0..16i64 {
            for xx in 0..16i64 {
                let inside =
                    (y - py as i64).abs() <= radius && (xx - px as i64).abs() <= radius;
                if inside {
                    continue;
                }
                for c in 0..6 {
                    let a = base.get(c, y as usize, xx as usize);
                    let b = bumped.get(c, y as usize, xx as usize);
                    assert_eq!(a, b, "leak at ({xx},{y}) c={c}, radius {radius}");
                }
            }
        }
    }
}
