use super::region::Region;
use super::SimilarityConfig;

/// Histogram intersection.
pub fn sim_colour(a: &Region, b: &Region) -> f64 {
    debug_assert_eq!(a.hist.len(), b.hist.len());
    a.hist.iter().zip(&b.hist).map(|(x, y)| x.min(*y)).sum()
}

/// Favours merging small regions first.
pub fn sim_size(a: &Region, b: &Region, im_area: usize) -> f64 {
    1.0 - (a.size + b.size) as f64 / im_area as f64
}

/// How well the two regions fill their joint bounding box.
pub fn sim_fill(a: &Region, b: &Region, im_area: usize) -> f64 {
    let joint = a.bbox.union(&b.bbox).area() as f64;
    1.0 - (joint - a.size as f64 - b.size as f64) / im_area as f64
}

/// Sum of the enabled measures (each weight is 0 or 1).
pub fn combined_similarity(a: &Region, b: &Region, cfg: &SimilarityConfig, im_area: usize) -> f64 {
    let mut s = 0.0;
    if cfg.use_colour {
        s += sim_colour(a, b);
    }
    if cfg.use_size {
        s += sim_size(a, b, im_area);
    }
    if cfg.use_fill {
        s += sim_fill(a, b, im_area);
    }
    s
}
