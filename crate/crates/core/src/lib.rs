//! Two-stage circuit component recognition.
//!
//! A photo is shrunk to a thumbnail, over-segmented with a graph-based
//! segmenter, and hierarchically grouped into candidate boxes (selective
//! search). Overlapping candidates are fused, boxes are mapped back to the
//! full-resolution photo, and each crop is classified by a small CNN trained
//! from scratch. A linear SVM over hand-crafted features serves as the
//! baseline, and [`evaluation`] scores proposals (ABO/MABO) and end-to-end
//! accuracy.
//!
//! Pipeline stages:
//!
//! 1. [`imaging`] – rasters, color spaces, resizing, integral images.
//! 2. [`segmentation`] – initial over-segmentation.
//! 3. [`proposal`] – similarity-driven grouping and overlap merging.
//! 4. [`nanocnn`] – tensors, layers, training, persistence.
//! 5. [`features`] and [`svm`] – hand-crafted features and the SVM baseline.
//! 6. [`evaluation`] – ABO/MABO, final accuracy, timing.
//! 7. [`dataset`] – crop folders, JSON-lines annotations, crop export.

pub mod container;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod imaging;
pub mod nanocnn;
pub mod proposal;
pub mod render;
pub mod segmentation;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use imaging::{ColorSpace, Image, IntegralImage};
pub use proposal::BBox;
