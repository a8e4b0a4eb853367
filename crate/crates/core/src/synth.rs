//! Deterministic synthetic scenes and crops for tests, demos and the
//! fixture dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AnnotationEntry, LabeledBox};
use crate::imaging::{hsv_to_rgb, Image};
use crate::proposal::BBox;

/// Texture classes used as ground-truth labels.
pub const TEXTURES: [&str; 3] = ["checker", "noise", "stripes"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_side: u32,
    pub max_side: u32,
    /// Free space kept between objects and around the border.
    pub margin: u32,
    /// Amplitude of uniform per-pixel background noise.
    pub noise: i32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 400,
            height: 300,
            min_objects: 3,
            max_objects: 6,
            min_side: 30,
            max_side: 90,
            margin: 8,
            noise: 0,
        }
    }
}

fn clamp_u8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

fn saturated_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    hsv_to_rgb([rng.gen_range(0.0..360.0), rng.gen_range(0.6..1.0), rng.gen_range(0.45..0.85)])
}

/// Near-white background (plain unless `noise > 0`) with 3–6 non-overlapping textured
/// rectangles. Returns the image and one labelled box per rectangle.
pub fn scene(cfg: &SceneConfig, seed: u64) -> (Image, Vec<LabeledBox>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    let mut boxes: Vec<BBox> = Vec::new();
    let mut tries = 0;
    while boxes.len() < count && tries < 10_000 {
        tries += 1;
        let w = rng.gen_range(cfg.min_side..=cfg.max_side);
        let h = rng.gen_range(cfg.min_side..=cfg.max_side);
        let m = cfg.margin;
        if w + 2 * m >= cfg.width as u32 || h + 2 * m >= cfg.height as u32 {
            continue;
        }
        let x = rng.gen_range(m..cfg.width as u32 - w - m);
        let y = rng.gen_range(m..cfg.height as u32 - h - m);
        let b = BBox::new(x, y, w, h);
        let grown = BBox::new(x - m, y - m, w + 2 * m, h + 2 * m);
        if boxes.iter().all(|o| grown.intersection_area(o) == 0) {
            boxes.push(b);
        }
    }
    let objects: Vec<(BBox, usize, [u8; 3], [u8; 3], u32)> = boxes
        .iter()
        .map(|&b| {
            let texture = rng.gen_range(0..TEXTURES.len());
            let a = saturated_color(&mut rng);
            let shade = rng.gen_range(25..60);
            let b2 = a.map(|v| clamp_u8(v as i32 - shade));
            (b, texture, a, b2, rng.gen_range(3..7))
        })
        .collect();
    let bg = rng.gen_range(238..250);
    let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let img = Image::from_fn_rgb(cfg.width, cfg.height, |x, y| {
        let grain: i32 = noise.gen_range(-6..=6);
        let n: i32 = noise.gen_range(-cfg.noise..=cfg.noise);
        for &(b, texture, c1, c2, period) in &objects {
            let (xu, yu) = (x as u32, y as u32);
            if xu >= b.x && xu < b.right() && yu >= b.y && yu < b.bottom() {
                let (lx, ly) = (xu - b.x, yu - b.y);
                let base = match texture {
                    0 => if (lx / period + ly / period) % 2 == 0 { c1 } else { c2 },
                    1 => c1,
                    _ => if (lx / period) % 2 == 0 { c1 } else { c2 },
                };
                let g = if texture == 1 { grain } else { 0 };
                return base.map(|v| clamp_u8(v as i32 + g));
            }
        }
        [clamp_u8(bg + n); 3]
    });
    let labels = objects
        .iter()
        .map(|&(b, t, ..)| LabeledBox::new(b, TEXTURES[t]))
        .collect();
    (img, labels)
}

/// Annotation entry for a generated scene.
pub fn scene_entry(image: &str, boxes: Vec<LabeledBox>) -> AnnotationEntry {
    AnnotationEntry {
        image: image.to_string(),
        boxes,
    }
}

/// Base colors of the solid-color crop classes.
pub const CROP_COLORS: [(&str, [u8; 3]); 4] = [
    ("blue", [40, 60, 210]),
    ("green", [40, 190, 60]),
    ("red", [210, 40, 40]),
    ("yellow", [225, 215, 40]),
];

/// `per_class` crops of every solid-color class with small shade jitter
/// and varied sizes. Returns `(crop, class index)` pairs.
pub fn color_crops(per_class: usize, seed: u64) -> Vec<(Image, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * CROP_COLORS.len());
    for _ in 0..per_class {
        for (label, (_, base)) in CROP_COLORS.iter().enumerate() {
            let jitter: i32 = rng.gen_range(-20..=20);
            let w = rng.gen_range(20..60);
            let h = rng.gen_range(20..60);
            let c = base.map(|v| clamp_u8(v as i32 + jitter));
            out.push((Image::filled_rgb(w, h, c), label));
        }
    }
    out
}

/// Near-white background patches for a "blank" class.
pub fn blank_crops(count: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let level: u8 = rng.gen_range(232..=252);
            let w = rng.gen_range(20..60);
            let h = rng.gen_range(20..60);
            Image::filled_rgb(w, h, [level; 3])
        })
        .collect()
}
