use std::collections::BTreeSet;

use super::bbox::BBox;
use crate::imaging::Image;
use crate::segmentation::LabelMap;

/// Histogram bins per channel.
pub const BINS_PER_CHANNEL: usize = 25;

/// A connected segment with the features the grouping stage needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    /// Pixel count.
    pub size: usize,
    pub bbox: BBox,
    /// Per-channel histograms concatenated and jointly L1-normalized.
    pub hist: Vec<f64>,
    pub neighbors: BTreeSet<usize>,
}

impl Region {
    /// Region covering both inputs. The histogram is the size-weighted
    /// average, which equals the histogram of the union pixel set.
    pub fn merged(a: &Region, b: &Region, id: usize) -> Region {
        let size = a.size + b.size;
        let (wa, wb) = (a.size as f64, b.size as f64);
        let mut hist: Vec<f64> = a
            .hist
            .iter()
            .zip(&b.hist)
            .map(|(x, y)| (x * wa + y * wb) / size as f64)
            .collect();
        let total: f64 = hist.iter().sum();
        if total > 0.0 {
            hist.iter_mut().for_each(|v| *v /= total);
        }
        let neighbors = a
            .neighbors
            .union(&b.neighbors)
            .copied()
            .filter(|&n| n != a.id && n != b.id)
            .collect();
        Region {
            id,
            size,
            bbox: a.bbox.union(&b.bbox),
            hist,
            neighbors,
        }
    }
}

#[inline]
pub(crate) fn bin_of(value: f32, (lo, hi): (f32, f32)) -> usize {
    let t = (value - lo) / (hi - lo) * BINS_PER_CHANNEL as f32;
    (t.max(0.0) as usize).min(BINS_PER_CHANNEL - 1)
}

/// One [`Region`] per label with histogram, tight box and 4-connected
/// neighbour set.
pub fn build_regions(labels: &LabelMap, img: &Image) -> Vec<Region> {
    assert_eq!(
        (labels.width(), labels.height()),
        (img.width(), img.height()),
        "label map and image dimensions differ"
    );
    let n = labels.num_regions();
    let ch = img.channels();
    let ranges = img.color_space().channel_ranges();
    let hist_len = ch * BINS_PER_CHANNEL;

    let mut counts = vec![0u64; n * hist_len];
    let mut sizes = vec![0usize; n];
    let mut bounds = vec![(u32::MAX, u32::MAX, 0u32, 0u32); n];
    let mut neighbors = vec![BTreeSet::new(); n];
    let w = labels.width();

    for (idx, &l) in labels.labels().iter().enumerate() {
        let l = l as usize;
        let (x, y) = ((idx % w) as u32, (idx / w) as u32);
        sizes[l] += 1;
        let b = &mut bounds[l];
        b.0 = b.0.min(x);
        b.1 = b.1.min(y);
        b.2 = b.2.max(x + 1);
        b.3 = b.3.max(y + 1);
        for c in 0..ch {
            counts[l * hist_len + c * BINS_PER_CHANNEL + bin_of(img.sample(idx, c), ranges[c])] += 1;
        }
        let mut link = |other: u32| {
            let o = other as usize;
            if o != l {
                neighbors[l].insert(o);
                neighbors[o].insert(l);
            }
        };
        if (x as usize) + 1 < w {
            link(labels.labels()[idx + 1]);
        }
        if (y as usize) + 1 < labels.height() {
            link(labels.labels()[idx + w]);
        }
    }

    (0..n)
        .zip(neighbors)
        .map(|(id, neighbors)| {
            let total = (sizes[id] * ch) as f64;
            let (x0, y0, x1, y1) = bounds[id];
            Region {
                id,
                size: sizes[id],
                bbox: BBox::new(x0, y0, x1 - x0, y1 - y0),
                hist: counts[id * hist_len..(id + 1) * hist_len]
                    .iter()
                    .map(|&c| c as f64 / total)
                    .collect(),
                neighbors,
            }
        })
        .collect()
}
