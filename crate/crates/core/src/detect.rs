//! End-to-end detection: proposals, crops, CNN labels.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledBox;
use crate::error::Result;
use crate::imaging::Image;
use crate::nanocnn::{predict, ModelWeights};
use crate::proposal::{propose_detailed, BBox, ProposalRun, SimilarityConfig};
use crate::segmentation::SegmentationParams;

/// Class name that absorbs false-positive proposals.
pub const BLANK: &str = "blank";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub label: usize,
    pub class_name: String,
    pub confidence: f32,
}

impl Detection {
    pub fn to_labeled(&self) -> LabeledBox {
        LabeledBox {
            confidence: Some(self.confidence as f64),
            ..LabeledBox::new(self.bbox, &self.class_name)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub similarity: SimilarityConfig,
    pub segmentation: SegmentationParams,
    /// Report proposals classified as [`BLANK`] instead of dropping them.
    pub keep_blank: bool,
}

#[derive(Debug, Clone)]
pub struct DetectionRun {
    pub detections: Vec<Detection>,
    pub proposals: ProposalRun,
    /// Time spent cropping and classifying.
    pub classify: Duration,
}

/// Proposes boxes on `img`, classifies every crop and keeps the non-blank ones.
pub fn detect(img: &Image, model: &ModelWeights, cfg: &DetectConfig) -> Result<DetectionRun> {
    let proposals = propose_detailed(img, &cfg.similarity, &cfg.segmentation)?;
    let t = Instant::now();
    let mut detections = Vec::new();
    for &b in &proposals.boxes {
        let crop = img.crop(b.x as usize, b.y as usize, b.w as usize, b.h as usize);
        let (label, confidence) = predict(&model.network, &crop);
        let class_name = model.class_name(label).to_string();
        if class_name == BLANK && !cfg.keep_blank {
            continue;
        }
        detections.push(Detection {
            bbox: b,
            label,
            class_name,
            confidence,
        });
    }
    Ok(DetectionRun {
        detections,
        proposals,
        classify: t.elapsed(),
    })
}
