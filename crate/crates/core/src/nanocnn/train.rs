//! Mini-batch SGD with L2 weight decay and dropout, plus inference helpers.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::softmax;
use super::network::{DropoutMode, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imaging::{convert, resize, ColorSpace, Image};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            l2: 1e-6,
            learning_rate: 1e-6,
            epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        for (name, v) in [("l2", self.l2), ("learning rate", self.learning_rate)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One preprocessed crop.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Tensor<f32>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch, with dropout active.
    pub loss: f64,
    /// Accuracy on the training set with dropout disabled.
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

/// Returned by the per-epoch callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Trains `net` in place and returns one history row per epoch run.
///
/// Each step applies `w ← w·(1 − 2·lr·l2) − lr·ḡ` to weight tensors, where
/// `ḡ` is the batch-mean loss gradient; biases get no decay. Sample order
/// is reshuffled every epoch from `cfg.seed`, and gradients are summed in
/// batch order, so a run is reproducible bit for bit.
pub fn train(
    net: &mut Network<f32>,
    train_set: &[Sample],
    test_set: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Network<f32>) -> Control,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let classes = net.num_outputs();
    if let Some(s) = train_set.iter().chain(test_set).find(|s| s.label >= classes) {
        return Err(Error::Config(format!(
            "label {} out of range for a {classes}-way network",
            s.label
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let decay = (1.0 - 2.0 * cfg.learning_rate * cfg.l2) as f32;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = net.zero_grads();
            for &i in batch {
                let s = &train_set[i];
                let (loss, _) = net.loss_and_grad(&s.input, s.label, DropoutMode::Sample(&mut rng), &mut grads);
                loss_sum += loss as f64;
            }
            let step = (cfg.learning_rate / batch.len() as f64) as f32;
            for (p, g) in net.params_mut().iter_mut().zip(&grads) {
                let d = if p.shape().len() > 1 { decay } else { 1.0 };
                for (w, &gv) in p.data_mut().iter_mut().zip(g) {
                    *w = *w * d - step * gv;
                }
            }
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            train_acc: accuracy(net, train_set),
            test_acc: (!test_set.is_empty()).then(|| accuracy(net, test_set)),
        };
        history.push(stats);
        if on_epoch(&stats, net) == Control::Stop {
            break;
        }
    }
    Ok(history)
}

/// Fraction of samples whose arg-max prediction equals the label.
pub fn accuracy(net: &Network<f32>, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let correct = samples
        .iter()
        .filter(|s| argmax(&net.logits(&s.input)).0 == s.label)
        .count();
    correct as f64 / samples.len() as f64
}

/// Index and value of the first maximum.
fn argmax(v: &[f32]) -> (usize, f32) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

/// Squashes a crop to `size × size` RGB (bilinear) and scales to `[0, 1]`.
pub fn image_to_input(img: &Image, size: usize) -> Tensor<f32> {
    let rgb = if img.color_space() == ColorSpace::Rgb8 {
        resize(img, size, size)
    } else {
        resize(&convert(img, ColorSpace::Rgb8), size, size)
    };
    let data = rgb
        .as_rgb8()
        .expect("converted to RGB")
        .iter()
        .map(|&v| v as f32 / 255.0)
        .collect();
    Tensor::from_vec(&[size, size, 3], data)
}

/// Class index and its softmax probability, dropout disabled.
pub fn predict_tensor(net: &Network<f32>, input: &Tensor<f32>) -> (usize, f32) {
    argmax(&softmax(&net.logits(input)))
}

pub fn predict(net: &Network<f32>, crop: &Image) -> (usize, f32) {
    let size = net.input_shape()[0];
    predict_tensor(net, &image_to_input(crop, size))
}

/// Writes `epoch,loss,train_acc,test_acc`; a missing test accuracy is left empty.
pub fn write_history_csv(history: &[EpochStats], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,loss,train_acc,test_acc")?;
    for h in history {
        let test = h.test_acc.map(|a| format!("{a:.6}")).unwrap_or_default();
        writeln!(out, "{},{:.6},{:.6},{}", h.epoch, h.loss, h.train_acc, test)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nanocnn::network::LayerSpec;

    fn tiny_net(seed: u64) -> Network<f32> {
        let layers = vec![
            LayerSpec::Conv { filters: 4 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Dropout,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8, bias: true },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 3, bias: true },
        ];
        Network::new([8, 8, 3], layers, 0.25, seed).unwrap()
    }

    fn color_samples() -> Vec<Sample> {
        let colors = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        (0..12)
            .map(|i| {
                let c: [f32; 3] = colors[i % 3];
                let shade = 0.6 + 0.1 * (i / 3) as f32;
                let data = (0..64).flat_map(|_| c.map(|v| v * shade)).collect();
                Sample {
                    input: Tensor::from_vec(&[8, 8, 3], data),
                    label: i % 3,
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut net = tiny_net(3);
        let before = net.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 5,
            ..Default::default()
        };
        train(&mut net, &color_samples(), &[], &cfg, |_, _| Control::Continue).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn l2_only_step_shrinks_weights() {
        let mut net = tiny_net(4);
        let before = net.clone();
        let samples = vec![Sample {
            input: Tensor::zeros(&[8, 8, 3]),
            label: 0,
        }];
        let cfg = TrainConfig {
            learning_rate: 0.1,
            l2: 0.25,
            epochs: 1,
            ..Default::default()
        };
        train(&mut net, &samples, &[], &cfg, |_, _| Control::Continue).unwrap();
        // Zero input gives a zero data gradient for the first conv weights.
        let decay = (1.0 - 2.0 * 0.1 * 0.25) as f32;
        for (a, b) in net.params()[0].data().iter().zip(before.params()[0].data()) {
            assert_eq!(*a, b * decay);
        }
    }

    #[test]
    fn learns_toy_colors_deterministically() {
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 4,
            epochs: 200,
            seed: 11,
            ..Default::default()
        };
        let run = || {
            let mut net = tiny_net(5);
            let hist = train(&mut net, &color_samples(), &[], &cfg, |s, _| {
                if s.train_acc == 1.0 { Control::Stop } else { Control::Continue }
            })
            .unwrap();
            (net, hist)
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.last().unwrap().train_acc, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut net = tiny_net(0);
        let cfg = TrainConfig::default();
        assert!(train(&mut net, &[], &[], &cfg, |_, _| Control::Continue).is_err());
        let bad = vec![Sample {
            input: Tensor::zeros(&[8, 8, 3]),
            label: 7,
        }];
        assert!(train(&mut net, &bad, &[], &cfg, |_, _| Control::Continue).is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn uniform_net_has_flat_confidence() {
        let mut net = tiny_net(1);
        net.params_mut().iter_mut().for_each(|p| p.fill(0.0));
        let img = Image::filled_rgb(20, 10, [10, 200, 30]);
        let (label, conf) = predict(&net, &img);
        assert_eq!(label, 0);
        assert!((conf - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn input_is_scaled_and_squashed() {
        let img = Image::filled_rgb(30, 10, [255, 0, 51]);
        let t = image_to_input(&img, 8);
        assert_eq!(t.shape(), &[8, 8, 3]);
        assert_eq!(&t.data()[..3], &[1.0, 0.0, 0.2]);
    }

    #[test]
    fn history_csv() {
        let h = [EpochStats {
            epoch: 1,
            loss: 0.5,
            train_acc: 1.0,
            test_acc: None,
        }];
        let mut buf = Vec::new();
        write_history_csv(&h, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,loss,train_acc,test_acc\n1,0.500000,1.000000,\n"
        );
    }
}
