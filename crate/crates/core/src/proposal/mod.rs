//! Selective-search region proposals.
//!
//! The photo is shrunk to a thumbnail, converted to the configured color
//! space and over-segmented. Neighbouring regions are merged greedily by a
//! sum of colour, size and fill similarities; every region box seen along
//! the way is a candidate. Candidates overlapping by more than
//! `merge_threshold` are then fused into their union, and the survivors are
//! scaled back to the original photo.

mod bbox;
mod grouping;
mod region;
mod similarity;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use bbox::{merge_overlapping, overlap_rate, rescale_boxes, BBox};
pub use grouping::{filter_candidates, group, hierarchical_group, Hierarchy};
pub use region::{build_regions, Region, BINS_PER_CHANNEL};
pub use similarity::{combined_similarity, sim_colour, sim_fill, sim_size};

use crate::error::{Error, Result};
use crate::imaging::{convert, resize_long_side, ColorSpace, Image};
use crate::segmentation::{segment, SegmentationParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub use_colour: bool,
    pub use_size: bool,
    pub use_fill: bool,
    pub color_space: ColorSpace,
    /// Overlap rate above which two candidates are fused.
    pub merge_threshold: f64,
    pub thumbnail_long_side: usize,
    pub min_box_frac: f64,
    pub max_box_frac: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            use_colour: true,
            use_size: true,
            use_fill: true,
            color_space: ColorSpace::Rgb8,
            merge_threshold: 0.2,
            thumbnail_long_side: 400,
            min_box_frac: 0.001,
            max_box_frac: 0.9,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.use_colour || self.use_size || self.use_fill) {
            return Err(Error::Config("at least one similarity must be enabled".into()));
        }
        if !(0.0..=1.0).contains(&self.merge_threshold) {
            return Err(Error::Config(format!(
                "merge_threshold must be in [0, 1], got {}",
                self.merge_threshold
            )));
        }
        if !(self.min_box_frac > 0.0
            && self.min_box_frac < self.max_box_frac
            && self.max_box_frac <= 1.0)
        {
            return Err(Error::Config(format!(
                "need 0 < min_box_frac < max_box_frac <= 1, got {} and {}",
                self.min_box_frac, self.max_box_frac
            )));
        }
        if self.thumbnail_long_side < 1 {
            return Err(Error::Config("thumbnail_long_side must be >= 1".into()));
        }
        if self.color_space == ColorSpace::Gray {
            return Err(Error::Config("proposals need a 3-channel color space".into()));
        }
        Ok(())
    }

    /// Parses a comma-separated list such as `color,size,fill`.
    pub fn set_similarities(&mut self, list: &str) -> Result<()> {
        let (mut c, mut s, mut f) = (false, false, false);
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.to_ascii_lowercase().as_str() {
                "color" | "colour" => c = true,
                "size" => s = true,
                "fill" => f = true,
                other => return Err(Error::Config(format!("unknown similarity `{other}`"))),
            }
        }
        self.use_colour = c;
        self.use_size = s;
        self.use_fill = f;
        self.validate()
    }

    pub fn similarities_label(&self) -> String {
        let mut parts = Vec::new();
        if self.use_colour {
            parts.push("color");
        }
        if self.use_size {
            parts.push("size");
        }
        if self.use_fill {
            parts.push("fill");
        }
        parts.join(",")
    }
}

/// Everything produced by one [`propose`] run.
#[derive(Debug, Clone)]
pub struct ProposalRun {
    pub thumbnail_width: usize,
    pub thumbnail_height: usize,
    /// Original long side over thumbnail long side.
    pub scale: f64,
    pub num_regions: usize,
    /// Filtered, deduplicated grouping candidates (thumbnail coordinates),
    /// before overlap merging.
    pub candidates: Vec<BBox>,
    /// Candidates after overlap merging (thumbnail coordinates).
    pub merged: Vec<BBox>,
    /// Final boxes in original-image coordinates.
    pub boxes: Vec<BBox>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub resize: Duration,
    pub segment: Duration,
    pub group: Duration,
    pub merge: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.resize + self.segment + self.group + self.merge
    }
}

/// Runs the full proposal pipeline on an RGB8 photo.
pub fn propose_detailed(
    img: &Image,
    cfg: &SimilarityConfig,
    seg: &SegmentationParams,
) -> Result<ProposalRun> {
    cfg.validate()?;
    seg.validate()?;
    if img.color_space() != ColorSpace::Rgb8 {
        return Err(Error::Validation("propose expects an RGB8 image".into()));
    }
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let (thumb, scale) = resize_long_side(img, cfg.thumbnail_long_side);
    let thumb = convert(&thumb, cfg.color_space);
    timings.resize = t.elapsed();

    let t = Instant::now();
    let labels = segment(&thumb, seg);
    timings.segment = t.elapsed();

    let t = Instant::now();
    let regions = build_regions(&labels, &thumb);
    let im_area = thumb.area();
    let candidates = hierarchical_group(&regions, cfg, im_area);
    timings.group = t.elapsed();

    let t = Instant::now();
    let merged = merge_overlapping(&candidates, cfg.merge_threshold);
    let boxes = rescale_boxes(&merged, scale, img.width(), img.height());
    timings.merge = t.elapsed();

    Ok(ProposalRun {
        thumbnail_width: thumb.width(),
        thumbnail_height: thumb.height(),
        scale,
        num_regions: labels.num_regions(),
        candidates,
        merged,
        boxes,
        timings,
    })
}

/// Candidate boxes for `img`, in its own pixel coordinates.
pub fn propose(img: &Image, cfg: &SimilarityConfig, seg: &SegmentationParams) -> Result<Vec<BBox>> {
    propose_detailed(img, cfg, seg).map(|run| run.boxes)
}
