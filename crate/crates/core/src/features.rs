//! Hand-crafted crop features for the SVM baseline.
//!
//! * mean hue and saturation,
//! * an 18-bin hue histogram,
//! * top-n responses of a square center-surround (CenSurE-style) filter,
//! * raw grayscale pixels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::imaging::{resize, rgb_to_hsv, ColorSpace, Image, IntegralImage};

/// Side length crops are resized to for raw-pixel and CenSurE features.
pub const CROP_SIZE: usize = 150;
pub const HUE_BINS: usize = 18;
pub const CENSURE_TOP_N: usize = 10;
pub const CENSURE_SCALES: std::ops::RangeInclusive<usize> = 1..=6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    #[serde(rename = "raw")]
    RawPixels,
    AspectHue,
    Color,
    Censure,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [
        FeatureMode::RawPixels,
        FeatureMode::AspectHue,
        FeatureMode::Color,
        FeatureMode::Censure,
    ];

    pub fn len(self) -> usize {
        match self {
            FeatureMode::RawPixels => CROP_SIZE * CROP_SIZE,
            FeatureMode::AspectHue => 3,
            FeatureMode::Color => 2 + HUE_BINS,
            FeatureMode::Censure => CENSURE_TOP_N,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::RawPixels => "raw",
            FeatureMode::AspectHue => "aspect-hue",
            FeatureMode::Color => "color",
            FeatureMode::Censure => "censure",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown feature mode {s:?} (raw, aspect-hue, color, censure)")))
    }
}

fn hsv_pixels(img: &Image) -> impl Iterator<Item = [f32; 3]> + '_ {
    (0..img.area()).map(move |i| match img.color_space() {
        ColorSpace::Hsv => [img.sample(i, 0), img.sample(i, 1), img.sample(i, 2)],
        _ => rgb_to_hsv(img.rgb_at(i % img.width(), i / img.width())),
    })
}

/// Mean hue in degrees. With `circular`, hues are averaged as unit vectors
/// and the angle of the mean is returned (0 when the mean vector vanishes).
pub fn mean_hue(img: &Image, circular: bool) -> f64 {
    let n = img.area().max(1) as f64;
    if circular {
        let (s, c) = hsv_pixels(img).fold((0.0, 0.0), |(s, c), [h, ..]| {
            let r = (h as f64).to_radians();
            (s + r.sin(), c + r.cos())
        });
        if s.hypot(c) < 1e-12 * n {
            0.0
        } else {
            s.atan2(c).to_degrees().rem_euclid(360.0)
        }
    } else {
        hsv_pixels(img).map(|[h, ..]| h as f64).sum::<f64>() / n
    }
}

/// Arithmetic mean hue, degrees.
pub fn f_hue(img: &Image) -> f64 {
    mean_hue(img, false)
}

/// Mean saturation in `[0, 1]`.
pub fn f_sat(img: &Image) -> f64 {
    hsv_pixels(img).map(|[_, s, _]| s as f64).sum::<f64>() / img.area().max(1) as f64
}

/// Fraction of pixels per hue bin over `[0, 360)`. Achromatic pixels have
/// hue 0 and land in the first bin.
pub fn hue_distribution(img: &Image, bins: usize) -> Vec<f64> {
    assert!(bins >= 1, "need at least one hue bin");
    let mut hist = vec![0.0; bins];
    let width = 360.0 / bins as f64;
    for [h, ..] in hsv_pixels(img) {
        let b = ((h as f64 / width) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let n = img.area().max(1) as f64;
    hist.iter_mut().for_each(|v| *v /= n);
    hist
}

/// Integer gray levels `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn gray_levels(img: &Image) -> Vec<f64> {
    match img.color_space() {
        ColorSpace::Gray => (0..img.area()).map(|i| (img.sample(i, 0) as f64 * 255.0).round()).collect(),
        _ => (0..img.area())
            .map(|i| {
                let [r, g, b] = img.rgb_at(i % img.width(), i / img.width()).map(|v| v as f64);
                (0.299 * r + 0.587 * g + 0.114 * b).round()
            })
            .collect(),
    }
}

/// One surviving filter extremum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub scale: usize,
    pub response: f64,
}

/// Center-surround response at `(x, y)` and scale `s`: the inner box mean
/// minus the ring mean, on gray levels scaled to `[0, 1]`. `None` when the
/// outer box does not fit.
pub fn censure_response(ii: &IntegralImage, x: usize, y: usize, s: usize) -> Option<f64> {
    let r_out = 2 * s;
    if x < r_out || y < r_out || x + r_out >= ii.width() || y + r_out >= ii.height() {
        return None;
    }
    let inner = ii.rect_sum(x - s, y - s, x + s + 1, y + s + 1);
    let outer = ii.rect_sum(x - r_out, y - r_out, x + r_out + 1, y + r_out + 1);
    let a_in = ((2 * s + 1) * (2 * s + 1)) as f64;
    let a_ring = ((4 * s + 1) * (4 * s + 1)) as f64 - a_in;
    // Cross-multiplied so integer inputs cancel exactly on flat patches.
    Some((a_ring * inner - a_in * (outer - inner)) / (a_in * a_ring * 255.0))
}

/// Dense responses for all scales, as `[scale][y][x]` maps with `None`
/// where the filter does not fit.
fn response_maps(ii: &IntegralImage) -> Vec<Vec<Option<f64>>> {
    let (w, h) = (ii.width(), ii.height());
    CENSURE_SCALES
        .map(|s| {
            (0..w * h)
                .map(|i| censure_response(ii, i % w, i / w, s))
                .collect()
        })
        .collect()
}

/// Filter extrema after non-maximum suppression over the 3×3×3
/// (x, y, scale) neighbourhood. A positive response survives when no
/// neighbour is larger, a negative one when no neighbour is smaller; zero
/// responses never survive. Box filters produce flat plateaus, so among
/// equal neighbours only the first in (scale, y, x) order is kept.
pub fn censure_keypoints(img: &Image) -> Vec<Keypoint> {
    let ii = IntegralImage::from_values(img.width(), img.height(), &gray_levels(img));
    let maps = response_maps(&ii);
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    for (si, map) in maps.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let Some(r) = map[y * w + x] else { continue };
                if r == 0.0 {
                    continue;
                }
                let here = (si, y, x);
                let beaten = (si.saturating_sub(1)..(si + 2).min(maps.len())).any(|sj| {
                    (y.saturating_sub(1)..(y + 2).min(h)).any(|yy| {
                        (x.saturating_sub(1)..(x + 2).min(w)).any(|xx| match maps[sj][yy * w + xx] {
                            Some(o) => {
                                let stronger = if r > 0.0 { o > r } else { o < r };
                                stronger || (o == r && (sj, yy, xx) < here)
                            }
                            None => false,
                        })
                    })
                });
                if !beaten {
                    out.push(Keypoint {
                        x,
                        y,
                        scale: si + CENSURE_SCALES.start(),
                        response: r,
                    });
                }
            }
        }
    }
    out
}

/// The `n` largest absolute extremum responses, descending, zero-padded.
pub fn censure_features(img: &Image, n: usize) -> Vec<f64> {
    let mut mags: Vec<f64> = censure_keypoints(img).iter().map(|k| k.response.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.resize(n, 0.0);
    mags
}

/// Feature vector of a crop; its length is always `mode.len()`.
pub fn feature_vector(crop: &Image, mode: FeatureMode) -> Vec<f64> {
    let v = match mode {
        FeatureMode::RawPixels => {
            let small = resize(crop, CROP_SIZE, CROP_SIZE);
            gray_levels(&small).into_iter().map(|g| g / 255.0).collect()
        }
        FeatureMode::AspectHue => vec![
            crop.width() as f64 / crop.height() as f64,
            f_hue(crop),
            f_sat(crop),
        ],
        FeatureMode::Color => {
            let mut v = vec![f_hue(crop), f_sat(crop)];
            v.extend(hue_distribution(crop, HUE_BINS));
            v
        }
        FeatureMode::Censure => censure_features(&resize(crop, CROP_SIZE, CROP_SIZE), CENSURE_TOP_N),
    };
    debug_assert_eq!(v.len(), mode.len());
    v
}
