//! Central finite-difference verification of the analytic gradients on a
//! small double-precision network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layers::softmax_cross_entropy;
use super::network::{DropoutMode, LayerSpec, Network};
use super::tensor::Tensor;
use crate::error::Result;

/// Side of the square input of the reduced network.
pub const INPUT_SIZE: usize = 12;
pub const CLASSES: usize = 3;

/// Relative errors are taken against `max(|analytic|, |numeric|, floor)`
/// so that near-zero gradients are judged on absolute error instead.
pub const DENOM_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub eps: f64,
    /// Drop ReLU and pooling, leaving convolutions and dense layers only.
    /// The loss then becomes `½‖z − onehot‖²`, which is exactly quadratic
    /// in any single parameter, so central differences carry no
    /// truncation error.
    pub linear: bool,
    /// Insert a dropout layer whose mask is frozen for every evaluation.
    pub dropout: bool,
    pub samples: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seed: 0,
            eps: 1e-5,
            linear: false,
            dropout: false,
            samples: 4,
        }
    }
}

impl GradCheckConfig {
    /// Linear-only preset. The loss is exactly quadratic per parameter, so
    /// a wide step only shrinks cancellation error.
    pub fn linear() -> Self {
        GradCheckConfig {
            linear: true,
            eps: 1e-2,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, element index)` of the worst parameter.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Two conv layers, two dense layers, 3-way output.
pub fn reduced_layers(linear: bool, dropout: bool) -> Vec<LayerSpec> {
    use LayerSpec::*;
    let mut layers = vec![Conv { filters: 4 }];
    if !linear {
        layers.extend([Relu, MaxPool { window: 2, stride: 2 }]);
    }
    if dropout {
        layers.push(Dropout);
    }
    layers.push(Conv { filters: 6 });
    if !linear {
        layers.extend([Relu, MaxPool { window: 2, stride: 2 }]);
    }
    layers.extend([Flatten, Dense { units: 5, bias: true }]);
    if !linear {
        layers.push(Relu);
    }
    layers.push(Dense { units: CLASSES, bias: true });
    layers
}

pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut net = Network::<f64>::new(
        [INPUT_SIZE, INPUT_SIZE, 2],
        reduced_layers(cfg.linear, cfg.dropout),
        0.5,
        cfg.seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6772_6164);
    // Small random biases so no unit starts exactly at a ReLU kink.
    for p in net.params_mut() {
        if p.shape().len() == 1 {
            p.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let samples: Vec<(Tensor<f64>, usize, Vec<Vec<bool>>)> = (0..cfg.samples.max(1))
        .map(|i| {
            let n = INPUT_SIZE * INPUT_SIZE * 2;
            let x = Tensor::from_vec(&[INPUT_SIZE, INPUT_SIZE, 2], (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let masks = net.forward(&x, DropoutMode::Sample(&mut rng)).masks;
            (x, i % CLASSES, masks)
        })
        .collect();

    let loss_of = |logits: &[f64], label: usize| -> (f64, Vec<f64>) {
        if cfg.linear {
            let diff: Vec<f64> = logits
                .iter()
                .enumerate()
                .map(|(k, &z)| z - if k == label { 1.0 } else { 0.0 })
                .collect();
            (0.5 * diff.iter().map(|d| d * d).sum::<f64>(), diff)
        } else {
            let (loss, mut g) = softmax_cross_entropy(logits, label);
            g[label] -= 1.0;
            (loss, g)
        }
    };
    let total_loss = |net: &Network<f64>| -> f64 {
        samples
            .iter()
            .map(|(x, label, masks)| {
                let trace = net.forward(x, DropoutMode::Fixed(masks));
                loss_of(trace.logits(), *label).0
            })
            .sum()
    };

    let mut grads = net.zero_grads();
    for (x, label, masks) in &samples {
        let trace = net.forward(x, DropoutMode::Fixed(masks));
        let (_, g) = loss_of(trace.logits(), *label);
        net.backward(&trace, &g, &mut grads);
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for t in 0..grads.len() {
        for i in 0..grads[t].len() {
            let orig = net.params()[t].data()[i];
            net.params_mut()[t].data_mut()[i] = orig + cfg.eps;
            let plus = total_loss(&net);
            net.params_mut()[t].data_mut()[i] = orig - cfg.eps;
            let minus = total_loss(&net);
            net.params_mut()[t].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let analytic = grads[t][i];
            let denom = analytic.abs().max(numeric.abs()).max(DENOM_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            if rel > report.max_rel_error || report.checked == 0 {
                report.max_rel_error = rel;
                report.worst = (t, i);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_net_gradients_match() {
        let r = gradient_check(&GradCheckConfig::default()).unwrap();
        assert_eq!(r.checked, 76 + 222 + 35 + 18);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn linear_net_is_near_exact() {
        for seed in 0..3 {
            let r = gradient_check(&GradCheckConfig { seed, ..GradCheckConfig::linear() }).unwrap();
            assert!(r.max_rel_error < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn frozen_dropout_masks() {
        let cfg = GradCheckConfig {
            dropout: true,
            ..Default::default()
        };
        let r = gradient_check(&cfg).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
