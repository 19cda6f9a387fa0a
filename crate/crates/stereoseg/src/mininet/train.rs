//! Per-pixel cross-entropy training with momentum SGD.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabelMap;
use crate::encodings::MultiChannelImage;
use crate::error::{Error, Result};
use crate::mininet::net::{Gradients, MiniNet};
use crate::mininet::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, momentum: 0.9, iterations: 1000, seed: 0 }
    }
}

impl TrainConfig {
    /// Strict configuration-file validation; the trainer itself also accepts
    /// a zero learning rate (the null update is a useful invariant check).
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.validate_loose()
    }

    fn validate_loose(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Mean softmax cross-entropy over non-ignored pixels, plus the gradient at
/// the logits. Errors when no pixel is labelled.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &LabelMap) -> Result<(f64, Tensor)> {
    let (classes, h, w) = logits.shape();
    if labels.width() as usize != w || labels.height() as usize != h {
        return Err(Error::dims(
            (w as u32, h as u32),
            (labels.width(), labels.height()),
            "logits vs labels",
        ));
    }
    let mut grad = Tensor::zeros(classes, h, w);
    let mut loss = 0.0f64;
    let mut scored = 0usize;
    let mut probs = vec![0.0f64; classes];
    for y in 0..h {
        for x in 0..w {
            let Some(target) = labels.get(x as u32, y as u32).class_index() else {
                continue;
            };
            if target >= classes {
                return Err(Error::Config(format!(
                    "label class {target} outside {classes}-way head"
                )));
            }
            let mut m = f64::NEG_INFINITY;
            for c in 0..classes {
                m = m.max(logits.get(c, y, x));
            }
            let mut denom = 0.0;
            for (c, p) in probs.iter_mut().enumerate() {
                *p = (logits.get(c, y, x) - m).exp();
                denom += *p;
            }
            loss += denom.ln() - (logits.get(target, y, x) - m);
            for c in 0..classes {
                grad.set(c, y, x, probs[c] / denom);
            }
            let g = grad.get(target, y, x);
            grad.set(target, y, x, g - 1.0);
            scored += 1;
        }
    }
    if scored == 0 {
        return Err(Error::Config("no labelled pixels in sample".into()));
    }
    let scale = 1.0 / scored as f64;
    for g in grad.data_mut() {
        *g *= scale;
    }
    Ok((loss * scale, grad))
}

/// Loss of one sample under the current parameters.
pub fn sample_loss(net: &MiniNet, x: &Tensor, labels: &LabelMap) -> Result<f64> {
    let logits = net.forward(x)?;
    Ok(softmax_cross_entropy(&logits, labels)?.0)
}

/// Loss and parameter gradients of one sample.
pub fn loss_and_gradients(
    net: &MiniNet,
    x: &Tensor,
    labels: &LabelMap,
) -> Result<(f64, Gradients)> {
    let trace = net.forward_trace(x)?;
    let (loss, dlogits) = softmax_cross_entropy(&trace.logits, labels)?;
    let grads = net.backward(x, &trace, &dlogits)?;
    Ok((loss, grads))
}

struct Velocity {
    per_layer: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Velocity {
    fn zeros_like(net: &MiniNet) -> Self {
        Self {
            per_layer: net
                .layers()
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }
}

/// Train on (image, labels) pairs with batch size one.
///
/// Each iteration takes the next sample of a per-epoch seeded shuffle,
/// computes the gradient, and applies the momentum update
/// `v <- momentum * v - lr * grad; w <- w + v`. Returns the trained network
/// and the per-iteration loss curve; everything is deterministic in
/// (initial net, data order, config).
pub fn train(
    mut net: MiniNet,
    data: &[(MultiChannelImage, LabelMap)],
    cfg: &TrainConfig,
) -> Result<(MiniNet, Vec<f64>)> {
    cfg.validate_loose()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (img, labels) in data {
        if img.channel_count() != net.in_channels() {
            return Err(Error::Config(format!(
                "network expects {} channels, sample has {} ({})",
                net.in_channels(),
                img.channel_count(),
                img.variant().label()
            )));
        }
        if img.width() != labels.width() || img.height() != labels.height() {
            return Err(Error::dims(
                (img.width(), img.height()),
                (labels.width(), labels.height()),
                "image vs labels",
            ));
        }
    }
    let tensors: Vec<Tensor> = data.iter().map(|(img, _)| Tensor::from_multichannel(img)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = Velocity::zeros_like(&net);
    let mut curve = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let slot = iter % data.len();
        if slot == 0 {
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
        }
        let sample = order[slot];
        let (loss, grads) =
            loss_and_gradients(&net, &tensors[sample], &data[sample].1)?;
        curve.push(loss);

        for ((layer, vel), grad) in net
            .layers_mut()
            .into_iter()
            .zip(velocity.per_layer.iter_mut())
            .zip(grads.per_layer.iter())
        {
            for i in 0..layer.weights.len() {
                vel.0[i] = cfg.momentum * vel.0[i] - cfg.learning_rate * grad.dw[i];
                layer.weights[i] += vel.0[i];
            }
            for i in 0..layer.bias.len() {
                vel.1[i] = cfg.momentum * vel.1[i] - cfg.learning_rate * grad.db[i];
                layer.bias[i] += vel.1[i];
            }
        }
    }
    Ok((net, curve))
}

/// Loss curve as `iteration,loss` CSV.
pub fn write_loss_csv(curve: &[f64], path: &Path) -> Result<()> {
    let mut text = String::from("iteration,loss\n");
    for (i, l) in curve.iter().enumerate() {
        text.push_str(&format!("{i},{l:.12}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassLabel;
    use crate::encodings::{pack, Channel8, EncodingVariant};

    fn uniform_channel(w: u32, h: u32, value: u8) -> Channel8 {
        Channel8::from_values(w, h, vec![value; (w * h) as usize]).unwrap()
    }

    fn noisy_channel(w: u32, h: u32, seed: u64) -> Channel8 {
        let mut state = seed | 1;
        let vals = (0..(w * h) as usize)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                (state >> 33) as u8
            })
            .collect();
        Channel8::from_values(w, h, vals).unwrap()
    }

    /// Two 8x8 samples whose label is decided by the red channel.
    fn tiny_dataset() -> Vec<(MultiChannelImage, LabelMap)> {
        let mut out = Vec::new();
        for (value, label) in [(30u8, ClassLabel::Dirt), (220u8, ClassLabel::Grass)] {
            let rgb = [
                uniform_channel(8, 8, value),
                noisy_channel(8, 8, value as u64 + 7),
                uniform_channel(8, 8, 128),
            ];
            let img = pack(&rgb, EncodingVariant::rgb(), None, None, None, None).unwrap();
            out.push((img, LabelMap::filled(8, 8, label)));
        }
        out
    }

    #[test]
    fn loss_of_uniform_logits_is_log_classes() {
        let logits = Tensor::zeros(6, 4, 4);
        let labels = LabelMap::filled(4, 4, ClassLabel::Tree);
        let (loss, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        assert!((loss - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ignored_pixels_do_not_contribute() {
        let mut logits = Tensor::zeros(6, 2, 2);
        logits.set(2, 0, 0, 5.0); // would change the loss if scored
        let mut labels = LabelMap::filled(2, 2, ClassLabel::Bush);
        labels.set(0, 0, ClassLabel::Ignore);
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        for c in 0..6 {
            assert_eq!(grad.get(c, 0, 0), 0.0);
        }
        let all_ignored = LabelMap::filled(2, 2, ClassLabel::Ignore);
        assert!(softmax_cross_entropy(&logits, &all_ignored).is_err());
    }

    #[test]
    fn null_update_leaves_weights_unchanged() {
        let data = tiny_dataset();
        let net = MiniNet::new(3, 4, 5, 6, 42);
        let cfg =
            TrainConfig { learning_rate: 0.0, momentum: 0.0, iterations: 17, seed: 1 };
        let (trained, curve) = train(net.clone(), &data, &cfg).unwrap();
        assert_eq!(trained, net);
        assert_eq!(curve.len(), 17);
    }

    #[test]
    fn smoke_training_reduces_loss() {
        let data = tiny_dataset();
        let net = MiniNet::new(3, 4, 5, 6, 7);
        let cfg = TrainConfig { iterations: 200, seed: 3, ..Default::default() };
        let (_, curve) = train(net, &data, &cfg).unwrap();
        let head: f64 = curve[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = curve[curve.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "loss did not decrease: {head} -> {tail}");
        assert!(curve.last().unwrap() < curve.first().unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset();
        let cfg = TrainConfig { iterations: 50, seed: 11, ..Default::default() };
        let (net_a, curve_a) = train(MiniNet::new(3, 4, 5, 6, 2), &data, &cfg).unwrap();
        let (net_b, curve_b) = train(MiniNet::new(3, 4, 5, 6, 2), &data, &cfg).unwrap();
        assert_eq!(net_a, net_b);
        assert_eq!(curve_a, curve_b);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let data = tiny_dataset();
        let net = MiniNet::new(4, 4, 5, 6, 2);
        let cfg = TrainConfig::default();
        assert!(matches!(train(net, &data, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn empty_dataset_rejected() {
        let net = MiniNet::new(3, 4, 5, 6, 2);
        assert!(matches!(
            train(net, &[], &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    /// Deterministic (net, input, labels) instance on which the network is
    /// locally smooth: no pre-activation or pooling margin within reach of
    /// the finite-difference step, so central differences measure the true
    /// derivative instead of a kink crossing.
    fn smooth_instance(
        in_channels: usize,
        base_seed: u64,
    ) -> (MiniNet, Tensor, LabelMap) {
        use rand::Rng;
        for attempt in 0..256u64 {
            let seed = base_seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9));
            let net = MiniNet::new(in_channels, 3, 4, 6, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let x = Tensor::from_vec(
                in_channels,
                8,
                8,
                (0..in_channels * 64).map(|_| rng.random_range(0.05..1.0)).collect(),
            )
            .unwrap();
            let mut labels = LabelMap::filled(8, 8, ClassLabel::Sky);
            for v in 0..8u32 {
                for u in 0..8u32 {
                    let c = rng.random_range(0..6usize);
                    labels.set(u, v, ClassLabel::from_class_index(c).unwrap());
                }
            }
            // 10x the largest activation shift a 1e-4 parameter step can
            // cause anywhere in this architecture.
            if net.activation_margin(&x).unwrap() > 1e-3 {
                return (net, x, labels);
            }
        }
        panic!("no smooth instance found near seed {base_seed}");
    }

    /// Max relative disagreement between analytic gradients and central
    /// finite differences with step 1e-4, over every parameter.
    fn gradient_check(net: &MiniNet, x: &Tensor, labels: &LabelMap) -> f64 {
        let (_, grads) = loss_and_gradients(net, x, labels).unwrap();
        let flat: Vec<f64> = grads
            .per_layer
            .iter()
            .flat_map(|g| g.dw.iter().chain(g.db.iter()).copied())
            .collect();
        let h = 1e-4;
        let mut probe = net.clone();
        let mut max_rel = 0.0f64;
        for (i, &analytic) in flat.iter().enumerate() {
            let orig = probe.get_param(i);
            probe.set_param(i, orig + h);
            let up = sample_loss(&probe, x, labels).unwrap();
            probe.set_param(i, orig - h);
            let down = sample_loss(&probe, x, labels).unwrap();
            probe.set_param(i, orig);
            let fd = (up - down) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs());
            if denom > 1e-8 {
                max_rel = max_rel.max((analytic - fd).abs() / denom);
            }
        }
        max_rel
    }

    /// Whole-network gradient check on a small instance; the exhaustive
    /// multi-seed, multi-channel sweep lives in the acceptance suite.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (net, x, labels) = smooth_instance(2, 31);
        let max_rel = gradient_check(&net, &x, &labels);
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }
}
