use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::bbox::BBox;
use super::region::Region;
use super::similarity::combined_similarity;
use super::SimilarityConfig;

/// Queue key: highest similarity first, then the smallest `(lo, hi)` id pair.
#[derive(Debug, Clone, Copy)]
struct PairKey {
    sim: f64,
    lo: usize,
    hi: usize,
}

impl PartialEq for PairKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PairKey {}

impl PartialOrd for PairKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PairKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

/// Full record of one greedy grouping run.
#[derive(Debug, Clone, Default)]
pub struct Hierarchy {
    /// Every region box in creation order: the initial regions, then one box
    /// per merge. Not deduplicated or filtered.
    pub boxes: Vec<BBox>,
    /// `(first, second, merged)` ids for each merge, in order.
    pub merges: Vec<(usize, usize, usize)>,
}

/// Greedily merges the most similar neighbouring pair until no neighbouring
/// pairs remain. Merged regions take fresh ids counting up from one past the
/// largest input id.
pub fn group(regions: &[Region], cfg: &SimilarityConfig, im_area: usize) -> Hierarchy {
    let mut live: BTreeMap<usize, Region> = regions.iter().map(|r| (r.id, r.clone())).collect();
    let mut next_id = regions.iter().map(|r| r.id + 1).max().unwrap_or(0);
    let mut queue = BTreeSet::new();
    let mut sims: HashMap<(usize, usize), f64> = HashMap::new();

    let push = |queue: &mut BTreeSet<PairKey>, sims: &mut HashMap<_, _>, a: &Region, b: &Region| {
        let (lo, hi) = (a.id.min(b.id), a.id.max(b.id));
        let sim = combined_similarity(a, b, cfg, im_area);
        sims.insert((lo, hi), sim);
        queue.insert(PairKey { sim, lo, hi });
    };

    for r in live.values() {
        for &n in r.neighbors.range(r.id + 1..) {
            if let Some(other) = live.get(&n) {
                push(&mut queue, &mut sims, r, other);
            }
        }
    }

    let mut out = Hierarchy {
        boxes: regions.iter().map(|r| r.bbox).collect(),
        merges: Vec::new(),
    };

    while let Some(top) = queue.pop_first() {
        sims.remove(&(top.lo, top.hi));
        let a = live.remove(&top.lo).expect("queued pair refers to live regions");
        let b = live.remove(&top.hi).expect("queued pair refers to live regions");

        for (id, dead) in [(a.id, &a), (b.id, &b)] {
            for &n in &dead.neighbors {
                let key = (id.min(n), id.max(n));
                if let Some(sim) = sims.remove(&key) {
                    queue.remove(&PairKey { sim, lo: key.0, hi: key.1 });
                }
            }
        }

        let merged = Region::merged(&a, &b, next_id);
        next_id += 1;
        for &n in &merged.neighbors {
            let nb = live.get_mut(&n).expect("neighbour of a live region is live");
            nb.neighbors.remove(&a.id);
            nb.neighbors.remove(&b.id);
            nb.neighbors.insert(merged.id);
        }
        for &n in &merged.neighbors {
            push(&mut queue, &mut sims, &live[&n], &merged);
        }
        out.boxes.push(merged.bbox);
        out.merges.push((a.id, b.id, merged.id));
        live.insert(merged.id, merged);
    }
    out
}

/// Drops duplicates (keeping first occurrences) and boxes whose area is
/// outside `[min_box_frac, max_box_frac] · im_area`.
pub fn filter_candidates(boxes: &[BBox], cfg: &SimilarityConfig, im_area: usize) -> Vec<BBox> {
    let lo = cfg.min_box_frac * im_area as f64;
    let hi = cfg.max_box_frac * im_area as f64;
    let mut seen = HashSet::new();
    boxes
        .iter()
        .filter(|b| seen.insert(**b))
        .filter(|b| {
            let a = b.area() as f64;
            a >= lo && a <= hi
        })
        .copied()
        .collect()
}

/// Candidate boxes from greedy hierarchical grouping, deduplicated and
/// filtered by area.
pub fn hierarchical_group(regions: &[Region], cfg: &SimilarityConfig, im_area: usize) -> Vec<BBox> {
    filter_candidates(&group(regions, cfg, im_area).boxes, cfg, im_area)
}
