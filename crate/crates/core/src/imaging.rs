//! Raster images, color-space conversion, resampling and integral images.
//!
//! Every other stage consumes [`Image`]. RGB8 images keep their 8-bit
//! samples; the derived spaces (HSV, LAB, GRAY) are stored as `f32`.
//! Hue is kept in degrees `[0, 360)`, saturation and value in `[0, 1]`,
//! gray in `[0, 1]`, LAB in its usual `L ∈ [0, 100]` units.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    #[serde(rename = "rgb", alias = "rgb8")]
    Rgb8,
    Hsv,
    Lab,
    Gray,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            _ => 3,
        }
    }

    /// Nominal `(low, high)` range of each channel.
    ///
    /// Histogram binning and segmentation edge weights are expressed
    /// relative to these ranges so every space is handled uniformly.
    pub fn channel_ranges(self) -> &'static [(f32, f32)] {
        match self {
            ColorSpace::Rgb8 => &[(0.0, 255.0), (0.0, 255.0), (0.0, 255.0)],
            ColorSpace::Hsv => &[(0.0, 360.0), (0.0, 1.0), (0.0, 1.0)],
            ColorSpace::Lab => &[(0.0, 100.0), (-128.0, 128.0), (-128.0, 128.0)],
            ColorSpace::Gray => &[(0.0, 1.0)],
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColorSpace::Rgb8 => "rgb",
            ColorSpace::Hsv => "hsv",
            ColorSpace::Lab => "lab",
            ColorSpace::Gray => "gray",
        })
    }
}

impl FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" | "rgb8" => Ok(ColorSpace::Rgb8),
            "hsv" => Ok(ColorSpace::Hsv),
            "lab" => Ok(ColorSpace::Lab),
            "gray" | "grey" => Ok(ColorSpace::Gray),
            other => Err(Error::Config(format!("unknown color space `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Pixels {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// Row-major, top-left origin, interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    color_space: ColorSpace,
    pixels: Pixels,
}

impl Image {
    pub fn from_rgb8(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, 3, data.len())?;
        Ok(Image {
            width,
            height,
            color_space: ColorSpace::Rgb8,
            pixels: Pixels::U8(data),
        })
    }

    /// Builds a floating-point image in `color_space` (which must not be RGB8).
    pub fn from_f32(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        data: Vec<f32>,
    ) -> Result<Self> {
        if color_space == ColorSpace::Rgb8 {
            return Err(Error::Validation(
                "RGB8 images must be built from 8-bit samples".into(),
            ));
        }
        check_dims(width, height, color_space.channels(), data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite pixel value".into()));
        }
        Ok(Image {
            width,
            height,
            color_space,
            pixels: Pixels::F32(data),
        })
    }

    pub fn filled_rgb(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image must have at least one pixel");
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Image {
            width,
            height,
            color_space: ColorSpace::Rgb8,
            pixels: Pixels::U8(data),
        }
    }

    /// Builds an RGB8 image from a per-pixel closure `f(x, y)`.
    pub fn from_fn_rgb(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image must have at least one pixel");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image {
            width,
            height,
            color_space: ColorSpace::Rgb8,
            pixels: Pixels::U8(data),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn channels(&self) -> usize {
        self.color_space.channels()
    }

    /// 8-bit samples, present only for RGB8 images.
    pub fn as_rgb8(&self) -> Option<&[u8]> {
        match &self.pixels {
            Pixels::U8(d) => Some(d),
            Pixels::F32(_) => None,
        }
    }

    /// Float samples, present for every space except RGB8.
    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.pixels {
            Pixels::F32(d) => Some(d),
            Pixels::U8(_) => None,
        }
    }

    /// Channel `c` of the pixel at flat index `idx`, as `f32` in the
    /// space's native units.
    #[inline]
    pub fn sample(&self, idx: usize, c: usize) -> f32 {
        let i = idx * self.channels() + c;
        match &self.pixels {
            Pixels::U8(d) => d[i] as f32,
            Pixels::F32(d) => d[i],
        }
    }

    pub fn rgb_at(&self, x: usize, y: usize) -> [u8; 3] {
        let d = self.as_rgb8().expect("rgb_at requires an RGB8 image");
        let i = (y * self.width + x) * 3;
        [d[i], d[i + 1], d[i + 2]]
    }

    /// Overwrites one pixel of an RGB8 image.
    pub fn put_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        match &mut self.pixels {
            Pixels::U8(d) => d[i..i + 3].copy_from_slice(&rgb),
            Pixels::F32(_) => panic!("put_rgb requires an RGB8 image"),
        }
    }

    /// All samples widened to `f32`, interleaved.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        match &self.pixels {
            Pixels::U8(d) => d.iter().map(|&v| v as f32).collect(),
            Pixels::F32(d) => d.clone(),
        }
    }

    /// Copies the sub-rectangle `[x, x+w) × [y, y+h)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Self {
        assert!(w >= 1 && h >= 1, "crop must be non-empty");
        assert!(
            x + w <= self.width && y + h <= self.height,
            "crop ({x},{y},{w},{h}) exceeds {}x{}",
            self.width,
            self.height
        );
        let ch = self.channels();
        let pixels = match &self.pixels {
            Pixels::U8(d) => Pixels::U8(copy_rect(d, self.width, ch, x, y, w, h)),
            Pixels::F32(d) => Pixels::F32(copy_rect(d, self.width, ch, x, y, w, h)),
        };
        Image {
            width: w,
            height: h,
            color_space: self.color_space,
            pixels,
        }
    }
}

fn copy_rect<T: Copy>(
    src: &[T],
    stride: usize,
    ch: usize,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(w * h * ch);
    for yy in y..y + h {
        let start = (yy * stride + x) * ch;
        out.extend_from_slice(&src[start..start + w * ch]);
    }
    out
}

fn check_dims(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Validation(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if width * height * channels != len {
        return Err(Error::Validation(format!(
            "pixel buffer has {len} samples, expected {width}x{height}x{channels}"
        )));
    }
    Ok(())
}

/// Decodes PNG, JPEG or PNM (PPM/PGM) bytes into RGB8.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.is_empty() {
        return Err(Error::Format("empty image data".into()));
    }
    let format = image::guess_format(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::Format(e.to_string()))?
        .into_rgb8();
    let (w, h) = decoded.dimensions();
    Image::from_rgb8(w as usize, h as usize, decoded.into_raw())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads only the header to get `(width, height)`.
pub fn image_dimensions(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let (w, h) = image::image_dimensions(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    Ok((w as usize, h as usize))
}

fn to_rgb_buffer(img: &Image) -> image::RgbImage {
    let data = img
        .as_rgb8()
        .expect("only RGB8 images can be written")
        .to_vec();
    image::RgbImage::from_raw(img.width as u32, img.height as u32, data)
        .expect("buffer length checked at construction")
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    to_rgb_buffer(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(other.to_string()),
        })
}

/// Binary PPM (P6) encoding.
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let data = img.as_rgb8().expect("only RGB8 images can be written");
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(data);
    out
}

pub fn save_ppm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

/// Bilinear resample to exactly `new_w × new_h` (pixel-center aligned).
pub fn resize(img: &Image, new_w: usize, new_h: usize) -> Image {
    assert!(new_w >= 1 && new_h >= 1, "resize target must be non-empty");
    if new_w == img.width && new_h == img.height {
        return img.clone();
    }
    let ch = img.channels();
    let xs = axis_taps(img.width, new_w);
    let ys = axis_taps(img.height, new_h);
    let mut out = vec![0f32; new_w * new_h * ch];
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let i00 = y0 * img.width + x0;
            let i01 = y0 * img.width + x1;
            let i10 = y1 * img.width + x0;
            let i11 = y1 * img.width + x1;
            for c in 0..ch {
                let top = img.sample(i00, c) * (1.0 - fx) + img.sample(i01, c) * fx;
                let bottom = img.sample(i10, c) * (1.0 - fx) + img.sample(i11, c) * fx;
                out[(oy * new_w + ox) * ch + c] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    let pixels = match img.pixels {
        Pixels::U8(_) => Pixels::U8(
            out.iter()
                .map(|v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        ),
        Pixels::F32(_) => Pixels::F32(out),
    };
    Image {
        width: new_w,
        height: new_h,
        color_space: img.color_space,
        pixels,
    }
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let s0 = s.floor() as usize;
            let s1 = (s0 + 1).min(src - 1);
            (s0, s1, (s - s0 as f64) as f32)
        })
        .collect()
}

/// Shrinks (or enlarges) so the longer side equals `target_long`, keeping
/// the aspect ratio. Returns the image and `original_long / target_long`.
pub fn resize_long_side(img: &Image, target_long: usize) -> (Image, f64) {
    assert!(target_long >= 1, "target_long must be at least 1");
    let long = img.width.max(img.height);
    let short_target = |short: usize| {
        ((short as f64 * target_long as f64 / long as f64).round() as usize).max(1)
    };
    let (w, h) = if img.width >= img.height {
        (target_long, short_target(img.height))
    } else {
        (short_target(img.width), target_long)
    };
    (resize(img, w, h), long as f64 / target_long as f64)
}

/// Converts an RGB8 image to `target`. Converting to RGB8 is a copy.
pub fn convert(img: &Image, target: ColorSpace) -> Image {
    let rgb = img.as_rgb8().expect("convert expects an RGB8 source image");
    if target == ColorSpace::Rgb8 {
        return img.clone();
    }
    let mut out = Vec::with_capacity(img.area() * target.channels());
    for px in rgb.chunks_exact(3) {
        let p = [px[0], px[1], px[2]];
        match target {
            ColorSpace::Hsv => out.extend_from_slice(&rgb_to_hsv(p)),
            ColorSpace::Lab => out.extend_from_slice(&rgb_to_lab(p)),
            ColorSpace::Gray => out.push(luma(p)),
            ColorSpace::Rgb8 => unreachable!(),
        }
    }
    Image {
        width: img.width,
        height: img.height,
        color_space: target,
        pixels: Pixels::F32(out),
    }
}

/// Hexcone HSV: hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
/// Achromatic pixels get hue 0.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> [f32; 3] {
    let [r, g, b] = rgb.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let mut h = h as f32;
    if h >= 360.0 {
        h = 0.0;
    }
    [h, s as f32, max as f32]
}

pub fn hsv_to_rgb(hsv: [f32; 3]) -> [u8; 3] {
    let [h, s, v] = hsv.map(|x| x as f64);
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|ch| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

// D65 reference white.
const WHITE_X: f64 = 0.95047;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.08883;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB → linear RGB → XYZ (D65) → CIELAB.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f32; 3] {
    let [r, g, b] = rgb.map(|v| srgb_to_linear(v as f64 / 255.0));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let f = |t: f64| {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / WHITE_X), f(y / WHITE_Y), f(z / WHITE_Z));
    [
        (116.0 * fy - 16.0) as f32,
        (500.0 * (fx - fy)) as f32,
        (200.0 * (fy - fz)) as f32,
    ]
}

/// Rec. 601 luma normalized to `[0, 1]`.
pub fn luma(rgb: [u8; 3]) -> f32 {
    let [r, g, b] = rgb.map(|v| v as f64);
    ((0.299 * r + 0.587 * g + 0.114 * b) / 255.0) as f32
}

/// Summed-area table with a zero first row and column.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn from_gray(img: &Image) -> Self {
        assert_eq!(img.color_space(), ColorSpace::Gray, "integral requires GRAY");
        let data = img.as_f32().expect("GRAY images are float");
        Self::from_fn(img.width, img.height, |i| data[i] as f64)
    }

    /// Builds the table from `width × height` row-major values.
    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), width * height);
        Self::from_fn(width, height, |i| values[i])
    }

    fn from_fn(width: usize, height: usize, value: impl Fn(usize) -> f64) -> Self {
        let stride = width + 1;
        let mut table = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row_sum = 0.0;
            for x in 0..width {
                row_sum += value(y * width + x);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
            }
        }
        IntegralImage {
            width,
            height,
            table,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum over the half-open rectangle `[x0, x1) × [y0, y1)`.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x0 <= x1 && x1 <= self.width && y0 <= y1 && y1 <= self.height);
        let s = self.width + 1;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0]
            + self.table[y0 * s + x0]
    }
}

/// Integral image of a GRAY image.
pub fn integral(img: &Image) -> IntegralImage {
    IntegralImage::from_gray(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_preserves_pixel_order() {
        let px = [255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255];
        let img = Image::from_rgb8(2, 2, px.to_vec()).unwrap();
        let decoded = decode_image(&encode_ppm(&img)).unwrap();
        assert_eq!(decoded, img);
        assert_eq!(decoded.rgb_at(1, 1), [255, 255, 255]);
    }

    #[test]
    fn empty_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ppm");
        std::fs::write(&path, b"").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format(_))));
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(Error::Io { .. })
        ));
        std::fs::write(&path, b"definitely not an image").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format(_))));
    }

    #[test]
    fn thumbnail_of_phone_photo() {
        let img = Image::filled_rgb(3024, 4032, [10, 20, 30]);
        let (small, scale) = resize_long_side(&img, 400);
        assert_eq!((small.width(), small.height()), (300, 400));
        assert!((scale - 10.08).abs() < 1e-12);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = Image::from_fn_rgb(100, 100, |x, y| [x as u8, y as u8, (x ^ y) as u8]);
        let (same, scale) = resize_long_side(&img, 100);
        assert_eq!(same, img);
        assert_eq!(scale, 1.0);

        let flat = Image::filled_rgb(10, 20, [7, 200, 33]);
        let (small, scale) = resize_long_side(&flat, 5);
        assert_eq!((small.width(), small.height()), (3, 5));
        assert_eq!(scale, 4.0);
        assert!(small.as_rgb8().unwrap().chunks(3).all(|p| p == [7, 200, 33]));
    }

    #[test]
    fn color_conversions() {
        assert_eq!(rgb_to_hsv([255, 0, 0]), [0.0, 1.0, 1.0]);
        let gray = rgb_to_hsv([128, 128, 128]);
        assert_eq!(gray[0], 0.0);
        assert_eq!(gray[1], 0.0);
        assert!((gray[2] - 0.502).abs() < 1e-3);
        let lab = rgb_to_lab([128, 128, 128]);
        assert!(lab[1].abs() < 1e-3 && lab[2].abs() < 1e-3);
        assert!((luma([0, 0, 255]) - 0.114).abs() < 1e-6);
        let white = rgb_to_lab([255, 255, 255]);
        assert!((white[0] - 100.0).abs() < 1e-3);
    }

    #[test]
    fn conversions_stay_in_range_on_lattice() {
        for r in (0..=255).step_by(17) {
            for g in (0..=255).step_by(17) {
                for b in (0..=255).step_by(17) {
                    let p = [r as u8, g as u8, b as u8];
                    let [h, s, v] = rgb_to_hsv(p);
                    assert!((0.0..360.0).contains(&h), "{p:?} hue {h}");
                    assert!((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&v));
                    let lab = rgb_to_lab(p);
                    assert!(lab.iter().all(|c| c.is_finite()));
                    assert!((0.0..=100.0 + 1e-3).contains(&lab[0]));
                    assert!(lab[1].abs() <= 128.0 && lab[2].abs() <= 128.0);
                    let y = luma(p);
                    assert!((0.0..=1.0).contains(&y));
                }
            }
        }
    }

    #[test]
    fn integral_small_cases() {
        let ones = Image::from_f32(2, 2, ColorSpace::Gray, vec![1.0; 4]).unwrap();
        assert_eq!(integral(&ones).rect_sum(0, 0, 2, 2), 4.0);
        let vals: Vec<f32> = (1..=9).map(|v| v as f32).collect();
        let img = Image::from_f32(3, 3, ColorSpace::Gray, vals).unwrap();
        let ii = integral(&img);
        assert_eq!(ii.rect_sum(1, 1, 2, 2), 5.0);
        assert_eq!(ii.rect_sum(0, 0, 3, 3), 45.0);
    }

    #[test]
    fn crop_copies_subrect() {
        let img = Image::from_fn_rgb(5, 4, |x, y| [x as u8, y as u8, 0]);
        let c = img.crop(1, 2, 3, 2);
        assert_eq!((c.width(), c.height()), (3, 2));
        assert_eq!(c.rgb_at(0, 0), [1, 2, 0]);
        assert_eq!(c.rgb_at(2, 1), [3, 3, 0]);
    }
}
