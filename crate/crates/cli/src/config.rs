//! Layered configuration: built-in defaults, then a TOML file, then flags.

use std::path::Path;

use anyhow::Result;
use circuitrec::features::FeatureMode;
use circuitrec::nanocnn::{NetworkSpec, TrainConfig};
use circuitrec::proposal::SimilarityConfig;
use circuitrec::segmentation::SegmentationParams;
use circuitrec::svm::SvmConfig;
use serde::{Deserialize, Serialize};

use crate::args::{CnnArgs, ProposalArgs, SvmArgs};
use crate::BadInput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSection {
    pub input_size: usize,
    pub fc1_bias: bool,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
}

impl Default for CnnSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let n = NetworkSpec::new(150, 2);
        CnnSection {
            input_size: n.input_size,
            fc1_bias: n.fc1_bias,
            dropout_rate: n.dropout_rate,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            l2: t.l2,
            epochs: t.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub features: FeatureMode,
    pub epochs: usize,
    pub learning_rate: f64,
    pub reg: f64,
}

impl Default for SvmSection {
    fn default() -> Self {
        let c = SvmConfig::default();
        SvmSection {
            features: FeatureMode::Color,
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            reg: c.reg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iou_threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { iou_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub similarity: SimilarityConfig,
    pub segmentation: SegmentationParams,
    pub cnn: CnnSection,
    pub svm: SvmSection,
    pub eval: EvalSection,
}

impl Config {
    /// Defaults, overlaid by `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| BadInput(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| BadInput(format!("bad config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply_proposal(&mut self, a: &ProposalArgs) -> Result<()> {
        let s = &mut self.similarity;
        if let Some(cs) = &a.color_space {
            s.color_space = cs.parse().map_err(|e| BadInput(format!("{e}")))?;
        }
        if let Some(list) = &a.sim {
            s.set_similarities(list).map_err(|e| BadInput(format!("{e}")))?;
        }
        set(&mut s.thumbnail_long_side, a.thumb_long);
        set(&mut s.merge_threshold, a.merge_threshold);
        set(&mut s.min_box_frac, a.min_box_frac);
        set(&mut s.max_box_frac, a.max_box_frac);
        let g = &mut self.segmentation;
        set(&mut g.sigma, a.sigma);
        set(&mut g.k, a.k);
        set(&mut g.min_size, a.min_size);
        self.similarity.validate().map_err(|e| BadInput(e.to_string()))?;
        self.segmentation.validate().map_err(|e| BadInput(e.to_string()))?;
        Ok(())
    }

    pub fn apply_cnn(&mut self, a: &CnnArgs) -> Result<()> {
        let c = &mut self.cnn;
        set(&mut c.input_size, a.input_size);
        set(&mut c.fc1_bias, a.fc1_bias);
        set(&mut c.dropout_rate, a.dropout);
        set(&mut c.batch_size, a.batch);
        set(&mut c.learning_rate, a.lr);
        set(&mut c.l2, a.l2);
        set(&mut c.epochs, a.epochs);
        self.train_config().validate().map_err(|e| BadInput(e.to_string()))?;
        Ok(())
    }

    pub fn apply_svm(&mut self, a: &SvmArgs) -> Result<()> {
        let s = &mut self.svm;
        if let Some(f) = &a.features {
            s.features = f.parse().map_err(|e| BadInput(format!("{e}")))?;
        }
        set(&mut s.epochs, a.svm_epochs);
        set(&mut s.learning_rate, a.svm_lr);
        set(&mut s.reg, a.svm_reg);
        Ok(())
    }

    pub fn network_spec(&self, num_classes: usize) -> NetworkSpec {
        NetworkSpec {
            input_size: self.cnn.input_size,
            num_classes,
            fc1_bias: self.cnn.fc1_bias,
            dropout_rate: self.cnn.dropout_rate,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.cnn.batch_size,
            l2: self.cnn.l2,
            learning_rate: self.cnn.learning_rate,
            epochs: self.cnn.epochs,
            seed: self.seed,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            epochs: self.svm.epochs,
            learning_rate: self.svm.learning_rate,
            reg: self.svm.reg,
        }
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Prints the resolved configuration to stderr as loadable TOML.
pub fn echo(cfg: &Config) {
    eprintln!("# effective config\n{}", cfg.to_toml().trim_end());
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| BadInput(format!("cannot read {}: {e}", path.display())).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echoed_toml_round_trips() {
        let mut cfg = Config::default();
        cfg.seed = 7;
        cfg.similarity.use_fill = false;
        cfg.svm.features = FeatureMode::RawPixels;
        let back: Config = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg: Config = toml::from_str("seed = 3\n[segmentation]\nk = 500.0\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.segmentation.k, 500.0);
        assert_eq!(cfg.segmentation.min_size, 50);
        assert_eq!(cfg.similarity, SimilarityConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("[similarity]\nthumb = 3\n").is_err());
        assert!(toml::from_str::<Config>("colour = true\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let mut cfg: Config = toml::from_str("[similarity]\nthumbnail_long_side = 800\nmerge_threshold = 0.3\n").unwrap();
        let args = ProposalArgs {
            thumb_long: Some(200),
            sim: Some("color".into()),
            ..ProposalArgs::default()
        };
        cfg.apply_proposal(&args).unwrap();
        assert_eq!(cfg.similarity.thumbnail_long_side, 200);
        assert_eq!(cfg.similarity.merge_threshold, 0.3);
        assert!(cfg.similarity.use_colour && !cfg.similarity.use_size && !cfg.similarity.use_fill);
    }
}
