use serde::{Deserialize, Serialize};

/// Axis-aligned pixel box; `(x, y)` is the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        assert!(w >= 1 && h >= 1, "box must be non-empty, got {w}x{h}");
        BBox { x, y, w, h }
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn union(&self, other: &BBox) -> BBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let w = self.right().min(other.right()).saturating_sub(self.x.max(other.x));
        let h = self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y));
        w as u64 * h as u64
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x <= other.x
            && self.y <= other.y
            && self.right() >= other.right()
            && self.bottom() >= other.bottom()
    }

    /// Whether the box lies inside a `width × height` image.
    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.right() as usize <= width && self.bottom() as usize <= height
    }
}

/// Intersection over union of two boxes.
pub fn overlap_rate(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Repeatedly fuses any pair whose overlap exceeds `threshold` into its
/// union box until no such pair remains.
///
/// Pairs are scanned in index order; after each fusion the union takes the
/// lower index, the higher one is removed, and the scan restarts.
pub fn merge_overlapping(boxes: &[BBox], threshold: f64) -> Vec<BBox> {
    assert!((0.0..=1.0).contains(&threshold), "threshold must be in [0, 1]");
    let mut out = boxes.to_vec();
    'scan: loop {
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                if overlap_rate(&out[i], &out[j]) > threshold {
                    out[i] = out[i].union(&out[j]);
                    out.remove(j);
                    continue 'scan;
                }
            }
        }
        return out;
    }
}

/// Maps thumbnail boxes back to an `orig_w × orig_h` image.
pub fn rescale_boxes(boxes: &[BBox], scale: f64, orig_w: usize, orig_h: usize) -> Vec<BBox> {
    assert!(scale > 0.0, "scale must be positive");
    let (ow, oh) = (orig_w as i64, orig_h as i64);
    boxes
        .iter()
        .map(|b| {
            let r = |v: u32| (v as f64 * scale).round() as i64;
            let x = r(b.x).clamp(0, ow - 1);
            let y = r(b.y).clamp(0, oh - 1);
            let w = r(b.w).clamp(1, ow - x);
            let h = r(b.h).clamp(1, oh - y);
            BBox::new(x as u32, y as u32, w as u32, h as u32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_examples() {
        let a = BBox::new(0, 0, 10, 10);
        assert_eq!(overlap_rate(&a, &a), 1.0);
        assert_eq!(overlap_rate(&a, &BBox::new(20, 20, 3, 3)), 0.0);
        let b = BBox::new(5, 0, 10, 10);
        assert!((overlap_rate(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        // Touching edges share no area.
        assert_eq!(overlap_rate(&a, &BBox::new(10, 0, 5, 5)), 0.0);
    }

    #[test]
    fn merge_examples() {
        let a = BBox::new(0, 0, 10, 10);
        let b = BBox::new(2, 2, 10, 10);
        let c = BBox::new(30, 30, 5, 5);
        assert!((overlap_rate(&a, &b) - 64.0 / 136.0).abs() < 1e-12);
        assert_eq!(merge_overlapping(&[a, b, c], 0.2), vec![a.union(&b), c]);
        assert_eq!(merge_overlapping(&[a, a], 0.5), vec![a]);
        let disjoint = [a, c, BBox::new(50, 0, 4, 4)];
        assert_eq!(merge_overlapping(&disjoint, 0.2), disjoint.to_vec());
        assert!(merge_overlapping(&[], 0.2).is_empty());
    }

    #[test]
    fn merge_cascades_through_unions() {
        // a and c only overlap enough once a has absorbed b.
        let a = BBox::new(0, 0, 10, 10);
        let b = BBox::new(0, 8, 10, 10);
        let c = BBox::new(0, 14, 10, 6);
        let out = merge_overlapping(&[a, c, b], 0.1);
        assert_eq!(out, vec![BBox::new(0, 0, 10, 20)]);
    }

    #[test]
    fn rescale_examples() {
        let b = BBox::new(10, 20, 30, 40);
        assert_eq!(rescale_boxes(&[b], 1.0, 100, 100), vec![b]);
        assert_eq!(
            rescale_boxes(&[b], 10.08, 3024, 4032),
            vec![BBox::new(101, 202, 302, 403)]
        );
        let edge = BBox::new(290, 390, 10, 10);
        let out = rescale_boxes(&[edge], 10.08, 3024, 4032)[0];
        assert!(out.fits_within(3024, 4032));
        assert_eq!(out.right(), 3024);
        assert_eq!(out.bottom(), 4032);
    }
}
