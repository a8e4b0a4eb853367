//! Linear one-vs-rest SVM on standardized features.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::features::FeatureMode;

pub const MAGIC: &[u8; 8] = b"CRSVMWT\0";
pub const VERSION: u32 = 1;

/// Dimensions whose training spread is below this are dropped.
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty `λ/2 ‖w‖²` per class head.
    pub reg: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            epochs: 500,
            learning_rate: 1.0,
            reg: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub mode: FeatureMode,
    pub class_names: Vec<String>,
    /// Input dimensions kept after standardization.
    pub retained: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// One row of `retained.len()` weights per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        self.retained
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&d, (m, s))| (x[d] - m) / s)
            .collect()
    }

    /// One-vs-rest decision values.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(
            x.len(),
            self.mode.len(),
            "feature vector of length {} given to a {} model",
            x.len(),
            self.mode
        );
        let z = self.standardize(x);
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, &z) + b)
            .collect()
    }

    /// Arg-max class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_first(&self.scores(x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

/// Trains one binary hinge-loss classifier per class.
///
/// Each head minimizes `λ/2 ‖w‖² + mean_i max(0, 1 − y_i (w·z_i + b))` by
/// full-batch subgradient descent with step `lr / √t`. Every step depends
/// only on sample means, so duplicating the training set leaves the model
/// unchanged and no shuffling seed is needed.
pub fn svm_train(
    features: &[Vec<f64>],
    labels: &[usize],
    class_names: Vec<String>,
    mode: FeatureMode,
    cfg: &SvmConfig,
) -> Result<SvmModel> {
    if features.len() != labels.len() {
        return Err(Error::Config("feature and label counts differ".into()));
    }
    if class_names.len() < 2 {
        return Err(Error::Config("an SVM needs at least 2 classes".into()));
    }
    if features.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    if let Some(v) = features.iter().find(|v| v.len() != mode.len()) {
        return Err(Error::Config(format!(
            "feature vector of length {} in {mode} mode (expected {})",
            v.len(),
            mode.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
        return Err(Error::Config(format!("label {l} out of range")));
    }
    if !(cfg.learning_rate > 0.0) || !(cfg.reg >= 0.0) {
        return Err(Error::Config("SVM learning rate must be > 0 and reg >= 0".into()));
    }

    let n = features.len() as f64;
    let dims = mode.len();
    let mut mean = vec![0.0; dims];
    for v in features {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dims];
    for v in features {
        for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let retained: Vec<usize> = (0..dims).filter(|&d| (var[d] / n).sqrt() > MIN_STD).collect();
    let mean: Vec<f64> = retained.iter().map(|&d| mean[d]).collect();
    let std: Vec<f64> = retained.iter().map(|&d| (var[d] / n).sqrt()).collect();
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|v| {
            retained
                .iter()
                .zip(mean.iter().zip(&std))
                .map(|(&d, (m, s))| (v[d] - m) / s)
                .collect()
        })
        .collect();

    let k = retained.len();
    let mut weights = Vec::with_capacity(class_names.len());
    let mut bias = Vec::with_capacity(class_names.len());
    for class in 0..class_names.len() {
        let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; k];
        let mut b = 0.0;
        let mut gw = vec![0.0; k];
        for t in 1..=cfg.epochs {
            gw.iter_mut().zip(&w).for_each(|(g, wv)| *g = cfg.reg * wv);
            let mut gb = 0.0;
            for (zi, &yi) in z.iter().zip(&y) {
                if yi * (dot(&w, zi) + b) < 1.0 {
                    for (g, x) in gw.iter_mut().zip(zi) {
                        *g -= yi * x / n;
                    }
                    gb -= yi / n;
                }
            }
            let eta = cfg.learning_rate / (t as f64).sqrt();
            w.iter_mut().zip(&gw).for_each(|(wv, g)| *wv -= eta * g);
            b -= eta * gb;
        }
        weights.push(w);
        bias.push(b);
    }
    Ok(SvmModel {
        mode,
        class_names,
        retained,
        mean,
        std,
        weights,
        bias,
    })
}

pub fn svm_predict(model: &SvmModel, x: &[f64]) -> usize {
    model.predict(x)
}

#[derive(Serialize, Deserialize)]
struct Header {
    mode: FeatureMode,
    class_names: Vec<String>,
    retained: Vec<usize>,
}

/// Payload: mean, std, the weight rows, then the biases, as little-endian f64.
pub fn encode_svm(model: &SvmModel) -> Vec<u8> {
    let header = Header {
        mode: model.mode,
        class_names: model.class_names.clone(),
        retained: model.retained.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut payload = Vec::new();
    let values = model
        .mean
        .iter()
        .chain(&model.std)
        .chain(model.weights.iter().flatten())
        .chain(&model.bias);
    for v in values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    container::encode(MAGIC, VERSION, &header, &payload)
}

pub fn decode_svm(bytes: &[u8]) -> Result<SvmModel> {
    let (header, payload) = container::decode(bytes, MAGIC, VERSION)?;
    let h: Header = serde_json::from_slice(header).map_err(|e| Error::Format(format!("bad SVM header: {e}")))?;
    let (k, c) = (h.retained.len(), h.class_names.len());
    if h.retained.iter().any(|&d| d >= h.mode.len()) {
        return Err(Error::Format("retained dimension out of range".into()));
    }
    let expected = (2 * k + c * k + c) * 8;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "SVM payload holds {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let (mean, rest) = vals.split_at(k);
    let (std, rest) = rest.split_at(k);
    let (w, bias) = rest.split_at(c * k);
    Ok(SvmModel {
        mode: h.mode,
        class_names: h.class_names,
        retained: h.retained,
        mean: mean.to_vec(),
        std: std.to_vec(),
        weights: if k == 0 { vec![Vec::new(); c] } else { w.chunks(k).map(<[f64]>::to_vec).collect() },
        bias: bias.to_vec(),
    })
}

pub fn save_svm(model: &SvmModel, path: impl AsRef<Path>) -> Result<()> {
    container::write_file(path.as_ref(), &encode_svm(model))
}

pub fn load_svm(path: impl AsRef<Path>) -> Result<SvmModel> {
    decode_svm(&container::read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn separates_one_hot_classes() {
        let x: Vec<Vec<f64>> = (0..9)
            .map(|i| (0..3).map(|d| if d == i % 3 { 1.0 + 0.1 * (i / 3) as f64 } else { 0.0 }).collect())
            .collect();
        let y: Vec<usize> = (0..9).map(|i| i % 3).collect();
        let m = svm_train(&x, &y, names(3), FeatureMode::AspectHue, &SvmConfig::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(svm_predict(&m, xi), yi);
        }
    }

    #[test]
    fn constant_dimensions_are_dropped() {
        let x = vec![vec![1.0, 5.0, 0.0], vec![2.0, 5.0, 1.0]];
        let m = svm_train(&x, &[0, 1], names(2), FeatureMode::AspectHue, &SvmConfig::default()).unwrap();
        assert_eq!(m.retained, vec![0, 2]);
        assert!(m.std.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let m = SvmModel {
            mode: FeatureMode::AspectHue,
            class_names: names(3),
            retained: vec![0],
            mean: vec![0.0],
            std: vec![1.0],
            weights: vec![vec![1.0], vec![-1.0], vec![0.0]],
            bias: vec![0.0; 3],
        };
        assert_eq!(m.predict(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(m.predict(&[-2.0, 0.0, 0.0]), 1);
    }

    #[test]
    fn rejects_bad_training_sets() {
        let x = vec![vec![0.0; 3]];
        let cfg = SvmConfig::default();
        assert!(svm_train(&x, &[0], names(1), FeatureMode::AspectHue, &cfg).is_err());
        assert!(svm_train(&x, &[0], names(2), FeatureMode::Color, &cfg).is_err());
        assert!(svm_train(&x, &[5], names(2), FeatureMode::AspectHue, &cfg).is_err());
        assert!(svm_train(&[], &[], names(2), FeatureMode::AspectHue, &cfg).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let x = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 2.0], vec![3.0, 0.0, 2.0]];
        let m = svm_train(&x, &[0, 1, 2], names(3), FeatureMode::AspectHue, &SvmConfig::default()).unwrap();
        let bytes = encode_svm(&m);
        assert_eq!(decode_svm(&bytes).unwrap(), m);
        assert!(crate::nanocnn::io::decode_weights(&bytes).is_err());
        assert!(decode_svm(&bytes[..bytes.len() - 3]).is_err());
    }
}
