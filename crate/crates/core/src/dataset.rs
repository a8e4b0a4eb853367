//! Crop folders, JSON-lines box annotations, and crop export.
//!
//! A cropped dataset lives under `root/train/<class>/*` and
//! `root/test/<class>/*`. Annotations are one JSON object per line:
//!
//! ```text
//! {"image":"photos/a.jpg","boxes":[{"x":1,"y":2,"w":30,"h":40,"label":"led"}]}
//! ```
//!
//! Detections use the same schema with an extra `confidence` per box, and
//! raw proposals use the label `"?"`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{image_dimensions, load_image, save_png, Image};
use crate::proposal::BBox;

/// Label written for boxes that have not been classified.
pub const UNLABELED: &str = "?";

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "ppm", "pnm", "pgm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl LabeledBox {
    pub fn new(bbox: BBox, label: impl Into<String>) -> Self {
        LabeledBox {
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            label: label.into(),
            confidence: None,
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationEntry {
    pub image: String,
    pub boxes: Vec<LabeledBox>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub entries: Vec<AnnotationEntry>,
}

impl AnnotationSet {
    /// Sorted distinct labels, excluding [`UNLABELED`].
    pub fn vocabulary(&self) -> Vec<String> {
        self.entries
            .iter()
            .flat_map(|e| e.boxes.iter().map(|b| b.label.clone()))
            .filter(|l| l != UNLABELED)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn find(&self, image: &str) -> Option<&AnnotationEntry> {
        self.entries.iter().find(|e| e.image == image)
    }

    /// Canonical JSON-lines text.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entries serialize") + "\n")
            .collect()
    }
}

/// Parses JSON-lines text; blank lines are skipped.
pub fn parse_annotations(text: &str) -> Result<AnnotationSet> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: AnnotationEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        for b in &entry.boxes {
            if b.w == 0 || b.h == 0 {
                return Err(Error::Validation(format!(
                    "line {}: empty box in {}",
                    i + 1,
                    entry.image
                )));
            }
            if let Some(c) = b.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::Validation(format!("line {}: confidence {c} outside [0, 1]", i + 1)));
                }
            }
        }
        entries.push(entry);
    }
    Ok(AnnotationSet { entries })
}

/// Checks every box of `entry` against the image size.
pub fn validate_entry(entry: &AnnotationEntry, width: usize, height: usize) -> Result<()> {
    for b in &entry.boxes {
        if !b.bbox().fits_within(width, height) {
            return Err(Error::Validation(format!(
                "box ({}, {}, {}, {}) in {} exceeds the {width}×{height} image",
                b.x, b.y, b.w, b.h, entry.image
            )));
        }
    }
    Ok(())
}

/// Loads annotations. Image paths are relative to the file's directory;
/// boxes are checked against every image that exists there.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let set = parse_annotations(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for entry in &set.entries {
        let img_path = base.join(&entry.image);
        if img_path.is_file() {
            let (w, h) = image_dimensions(&img_path)?;
            validate_entry(entry, w, h)?;
        }
    }
    Ok(set)
}

pub fn save_annotations(set: &AnnotationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_jsonl()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct CropSample {
    pub path: PathBuf,
    pub image: Image,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct CroppedDataset {
    /// Class folder names, sorted.
    pub vocabulary: Vec<String>,
    pub train: Vec<CropSample>,
    pub test: Vec<CropSample>,
    /// Non-fatal problems such as empty class folders.
    pub warnings: Vec<String>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Loads `root/train` and `root/test`. The vocabulary is the sorted union
/// of class folder names across both splits.
pub fn load_cropped_dataset(root: impl AsRef<Path>) -> Result<CroppedDataset> {
    let root = root.as_ref();
    let splits = ["train", "test"].map(|s| root.join(s));
    for s in &splits {
        if !s.is_dir() {
            return Err(Error::Config(format!("missing split directory {}", s.display())));
        }
    }
    let mut classes = BTreeSet::new();
    for s in &splits {
        for p in sorted_entries(s)? {
            if p.is_dir() {
                classes.insert(p.file_name().expect("named dir").to_string_lossy().into_owned());
            }
        }
    }
    let vocabulary: Vec<String> = classes.into_iter().collect();
    let mut warnings = Vec::new();
    let mut load_split = |dir: &Path| -> Result<Vec<CropSample>> {
        let mut samples = Vec::new();
        for (label, class) in vocabulary.iter().enumerate() {
            let class_dir = dir.join(class);
            if !class_dir.is_dir() {
                warnings.push(format!("{} has no folder for class {class}", dir.display()));
                continue;
            }
            let files: Vec<PathBuf> = sorted_entries(&class_dir)?.into_iter().filter(|p| is_image(p)).collect();
            if files.is_empty() {
                warnings.push(format!("class folder {} is empty", class_dir.display()));
            }
            for path in files {
                let image = load_image(&path)?;
                samples.push(CropSample { path, image, label });
            }
        }
        Ok(samples)
    };
    let train = load_split(&splits[0])?;
    let test = load_split(&splits[1])?;
    Ok(CroppedDataset {
        vocabulary,
        train,
        test,
        warnings,
    })
}

pub fn crop_file_name(stem: &str, index: usize, b: &BBox) -> String {
    format!("{stem}_{index}_{}_{}_{}_{}.png", b.x, b.y, b.w, b.h)
}

/// Inverse of [`crop_file_name`]: `(stem, index, box)`.
pub fn parse_crop_name(name: &str) -> Option<(String, usize, BBox)> {
    let base = name.strip_suffix(".png")?;
    let mut parts = base.rsplitn(6, '_');
    let h = parts.next()?.parse().ok()?;
    let w = parts.next()?.parse().ok()?;
    let y = parts.next()?.parse().ok()?;
    let x = parts.next()?.parse().ok()?;
    let index = parts.next()?.parse().ok()?;
    let stem = parts.next()?.to_string();
    (w > 0 && h > 0).then_some((stem, index, BBox { x, y, w, h }))
}

/// Writes one PNG per box into `out_dir`, named
/// `<stem>_<index>_<x>_<y>_<w>_<h>.png`.
pub fn crop_and_export(img: &Image, boxes: &[BBox], stem: &str, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    for b in boxes {
        if !b.fits_within(img.width(), img.height()) {
            return Err(Error::Validation(format!(
                "box {b:?} exceeds the {}×{} image",
                img.width(),
                img.height()
            )));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let path = out_dir.join(crop_file_name(stem, i, b));
            let crop = img.crop(b.x as usize, b.y as usize, b.w as usize, b.h as usize);
            save_png(&crop, &path)?;
            Ok(path)
        })
        .collect()
}
