//! Graph-based over-segmentation (Felzenszwalb–Huttenlocher).
//!
//! Pixels are nodes of an 8-connected grid graph; the edge weight is the
//! Euclidean distance between smoothed pixel colors. Edges are visited in
//! non-decreasing weight order and two components are joined when the edge
//! is no heavier than `min(Int(C) + k/|C|)` over both sides.
//!
//! Because diagonal edges can join pixels that only touch at a corner, the
//! result is split into 4-connected pieces afterwards, and every piece
//! smaller than `min_size` is absorbed through its lightest 4-connected
//! boundary edge. Labels are renumbered densely in row-major order of first
//! appearance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    /// Gaussian pre-smoothing standard deviation in pixels; 0 disables it.
    pub sigma: f64,
    /// Scale constant; larger values favour larger components.
    pub k: f64,
    /// Minimum component area in pixels.
    pub min_size: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            sigma: 0.8,
            k: 200.0,
            min_size: 50,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::Config(format!("k must be > 0, got {}", self.k)));
        }
        if self.min_size < 1 {
            return Err(Error::Config("min_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One region id per pixel, dense in `[0, num_regions)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    num_regions: usize,
}

impl LabelMap {
    /// Wraps raw labels, renumbering them densely in order of first
    /// appearance. Connectivity is not checked.
    pub fn from_labels(width: usize, height: usize, raw: &[u32]) -> Self {
        assert_eq!(raw.len(), width * height, "label buffer size mismatch");
        let mut remap = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&l| {
                let next = remap.len() as u32;
                *remap.entry(l).or_insert(next)
            })
            .collect();
        LabelMap {
            width,
            height,
            labels,
            num_regions: remap.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_regions];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// False-color rendering for debugging; colors are a fixed hash of the id.
    pub fn to_color_image(&self) -> Image {
        Image::from_fn_rgb(self.width, self.height, |x, y| {
            let h = (self.label(x, y) as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            [(h >> 16) as u8, (h >> 32) as u8, (h >> 48) as u8]
        })
    }
}

#[derive(Clone, Copy)]
struct Edge {
    a: u32,
    b: u32,
    w: f32,
    /// Horizontal or vertical neighbour.
    axial: bool,
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
    size: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: vec![1; n],
        }
    }

    fn with_sizes(sizes: Vec<u32>) -> Self {
        let n = sizes.len();
        DisjointSet {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            size: sizes,
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Joins two roots and returns the surviving root.
    fn join(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (a as usize, b as usize);
        let (root, child) = if self.rank[ra] >= self.rank[rb] { (a, b) } else { (b, a) };
        if self.rank[ra] == self.rank[rb] {
            self.rank[root as usize] += 1;
        }
        self.parent[child as usize] = root;
        self.size[root as usize] += self.size[child as usize];
        root
    }

    fn size(&self, root: u32) -> u32 {
        self.size[root as usize]
    }
}

/// Channels rescaled to a common 0–255 span, optionally Gaussian-smoothed.
fn feature_planes(img: &Image, sigma: f64) -> Vec<Vec<f32>> {
    let ranges = img.color_space().channel_ranges();
    let n = img.area();
    (0..img.channels())
        .map(|c| {
            let (lo, hi) = ranges[c];
            let scale = 255.0 / (hi - lo);
            let plane: Vec<f32> = (0..n).map(|i| (img.sample(i, c) - lo) * scale).collect();
            if sigma > 0.0 {
                // Quantized back to 8-bit levels so faint blur halos
                // (< half a level) do not form their own components.
                let mut blurred = gaussian_blur(&plane, img.width(), img.height(), sigma);
                blurred.iter_mut().for_each(|v| *v = v.round());
                blurred
            } else {
                plane
            }
        })
        .collect()
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let len = (sigma * 4.0).ceil() as usize + 1;
    let raw: Vec<f64> = (0..len)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = 2.0 * raw.iter().sum::<f64>() - raw[0];
    raw.iter().map(|v| (v / sum) as f32).collect()
}

/// Separable Gaussian blur with edge clamping.
fn gaussian_blur(plane: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let r = kernel.len() as isize - 1;
    let mut tmp = vec![0f32; plane.len()];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for dx in -r..=r {
                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                acc += kernel[dx.unsigned_abs()] * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0f32; plane.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                acc += kernel[dy.unsigned_abs()] * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Edges in construction order: row-major pixels, each emitting E, SE, S, SW.
fn build_edges(planes: &[Vec<f32>], w: usize, h: usize) -> Vec<Edge> {
    let dist = |a: usize, b: usize| -> f32 {
        planes
            .iter()
            .map(|p| {
                let d = p[a] - p[b];
                d * d
            })
            .sum::<f32>()
            .sqrt()
    };
    let mut edges = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let a = y * w + x;
            let mut push = |b: usize, axial: bool| {
                edges.push(Edge {
                    a: a as u32,
                    b: b as u32,
                    w: dist(a, b),
                    axial,
                })
            };
            if x + 1 < w {
                push(a + 1, true);
            }
            if y + 1 < h {
                if x + 1 < w {
                    push(a + w + 1, false);
                }
                push(a + w, true);
                if x > 0 {
                    push(a + w - 1, false);
                }
            }
        }
    }
    edges
}

pub fn segment(img: &Image, params: &SegmentationParams) -> LabelMap {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let planes = feature_planes(img, params.sigma);
    let mut edges = build_edges(&planes, w, h);
    // Stable sort: equal weights keep construction order.
    edges.sort_by(|a, b| a.w.total_cmp(&b.w));

    let k = params.k as f32;
    let mut set = DisjointSet::new(n);
    let mut threshold = vec![k; n];
    for e in &edges {
        let ra = set.find(e.a);
        let rb = set.find(e.b);
        if ra == rb {
            continue;
        }
        if e.w <= threshold[ra as usize] && e.w <= threshold[rb as usize] {
            let root = set.join(ra, rb);
            threshold[root as usize] = e.w + k / set.size(root) as f32;
        }
    }
    let coarse: Vec<u32> = (0..n as u32).map(|p| set.find(p)).collect();

    let pieces = split_4_connected(&coarse, w, h);
    let mut sizes = vec![0u32; pieces.count];
    for &p in &pieces.labels {
        sizes[p as usize] += 1;
    }
    let mut set = DisjointSet::with_sizes(sizes);
    let min_size = params.min_size as u32;
    for e in edges.iter().filter(|e| e.axial) {
        let ra = set.find(pieces.labels[e.a as usize]);
        let rb = set.find(pieces.labels[e.b as usize]);
        if ra != rb && (set.size(ra) < min_size || set.size(rb) < min_size) {
            set.join(ra, rb);
        }
    }
    let merged: Vec<u32> = pieces.labels.iter().map(|&p| set.find(p)).collect();
    LabelMap::from_labels(w, h, &merged)
}

struct Pieces {
    labels: Vec<u32>,
    count: usize,
}

/// Splits every label class into its 4-connected components.
fn split_4_connected(labels: &[u32], w: usize, h: usize) -> Pieces {
    const UNSET: u32 = u32::MAX;
    let mut out = vec![UNSET; labels.len()];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if out[start] != UNSET {
            continue;
        }
        let class = labels[start];
        out[start] = count;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if out[q] == UNSET && labels[q] == class {
                    out[q] = count;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        count += 1;
    }
    Pieces {
        labels: out,
        count: count as usize,
    }
}
