//! Draws detections onto a photo: box outlines plus a caption strip.

use crate::detect::Detection;
use crate::imaging::{hsv_to_rgb, Image};
use crate::proposal::BBox;

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
const OUTLINE: usize = 2;

/// 5×7 glyph rows, most significant of the low five bits leftmost.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '%' => [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        ' ' => [0; 7],
        _ => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04],
    }
}

/// Deterministic per-label color (FNV-1a hash mapped to a hue).
pub fn label_color(label: &str) -> [u8; 3] {
    let mut h: u32 = 0x811c_9dc5;
    for b in label.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    hsv_to_rgb([(h % 360) as f32, 0.85, 0.9])
}

fn fill_rect(img: &mut Image, x0: usize, y0: usize, x1: usize, y1: usize, c: [u8; 3]) {
    let (x1, y1) = (x1.min(img.width()), y1.min(img.height()));
    for y in y0..y1 {
        for x in x0..x1 {
            img.put_rgb(x, y, c);
        }
    }
}

/// Outlines `b` with a band of `thickness` pixels drawn inside the box.
pub fn draw_box(img: &mut Image, b: &BBox, color: [u8; 3], thickness: usize) {
    let (x0, y0) = (b.x as usize, b.y as usize);
    let (x1, y1) = (b.right() as usize, b.bottom() as usize);
    let t = thickness.min(b.w as usize).min(b.h as usize);
    fill_rect(img, x0, y0, x1, y0 + t, color);
    fill_rect(img, x0, y1.saturating_sub(t), x1, y1, color);
    fill_rect(img, x0, y0, x0 + t, y1, color);
    fill_rect(img, x1.saturating_sub(t), y0, x1, y1, color);
}

/// Pixel width of `text` at integer magnification `scale`.
pub fn text_width(text: &str, scale: usize) -> usize {
    let n = text.chars().count();
    if n == 0 {
        0
    } else {
        (n * (GLYPH_W + 1) - 1) * scale
    }
}

/// Draws `text` with its top-left corner at `(x, y)`, clipped to the image.
pub fn draw_text(img: &mut Image, x: usize, y: usize, text: &str, color: [u8; 3], scale: usize) {
    for (i, ch) in text.chars().enumerate() {
        let gx = x + i * (GLYPH_W + 1) * scale;
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits >> (GLYPH_W - 1 - col) & 1 == 1 {
                    let px = gx + col * scale;
                    let py = y + row * scale;
                    fill_rect(img, px, py, px + scale, py + scale, color);
                }
            }
        }
    }
}

/// Caption text for a detection, e.g. `resistor 0.97`.
pub fn caption(d: &Detection) -> String {
    format!("{} {:.2}", d.class_name, d.confidence)
}

/// Copy of `img` with every detection drawn: outline in the label color and
/// a filled caption strip above the box (inside it when there is no room).
pub fn render(img: &Image, detections: &[Detection]) -> Image {
    let mut out = img.clone();
    let scale = (img.width().max(img.height()) / 400).max(1);
    let pad = scale;
    let strip_h = GLYPH_H * scale + 2 * pad;
    for d in detections {
        let color = label_color(&d.class_name);
        draw_box(&mut out, &d.bbox, color, OUTLINE * scale);
        let text = caption(d);
        let x = d.bbox.x as usize;
        let y = if d.bbox.y as usize >= strip_h {
            d.bbox.y as usize - strip_h
        } else {
            d.bbox.y as usize
        };
        fill_rect(&mut out, x, y, x + text_width(&text, scale) + 2 * pad, y + strip_h, color);
        let ink = if crate::imaging::luma(color) > 140.0 { [0, 0, 0] } else { [255, 255, 255] };
        draw_text(&mut out, x + pad, y + pad, &text, ink, scale);
    }
    out
}
