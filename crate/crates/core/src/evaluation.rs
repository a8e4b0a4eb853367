//! Proposal quality (ABO/MABO), end-to-end accuracy, and timing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::dataset::{AnnotationSet, LabeledBox};
use crate::proposal::{overlap_rate, BBox};

/// Mean over ground-truth boxes of the best overlap with any proposal.
/// `None` for an empty ground truth; 0 when there are no proposals.
pub fn abo(gt: &[BBox], proposals: &[BBox]) -> Option<f64> {
    if gt.is_empty() {
        return None;
    }
    let total: f64 = gt
        .iter()
        .map(|g| proposals.iter().map(|p| overlap_rate(g, p)).fold(0.0, f64::max))
        .sum();
    Some(total / gt.len() as f64)
}

/// Per-class ABO with each class pooled across images. Proposals are
/// matched only against ground truth of the same image; their labels are
/// ignored.
pub fn per_class_abo(gt: &AnnotationSet, proposals: &AnnotationSet) -> BTreeMap<String, f64> {
    let mut best: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for entry in &gt.entries {
        let props: Vec<BBox> = proposals
            .find(&entry.image)
            .map(|p| p.boxes.iter().map(LabeledBox::bbox).collect())
            .unwrap_or_default();
        for b in &entry.boxes {
            let g = b.bbox();
            let o = props.iter().map(|p| overlap_rate(&g, p)).fold(0.0, f64::max);
            best.entry(b.label.clone()).or_default().push(o);
        }
    }
    best.into_iter()
        .map(|(label, v)| (label, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

/// Unweighted mean of per-class ABO; `None` without ground truth.
pub fn mabo(gt: &AnnotationSet, proposals: &AnnotationSet) -> Option<f64> {
    mean_of(per_class_abo(gt, proposals).values().copied())
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Greedy one-to-one matching of `dets` to `gt` by descending IoU,
/// considering only pairs with IoU ≥ `threshold`. Returns, per gt box, the
/// matched detection index.
pub fn greedy_match(gt: &[LabeledBox], dets: &[LabeledBox], threshold: f64) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (di, d) in dets.iter().enumerate() {
            let iou = overlap_rate(&g.bbox(), &d.bbox());
            if iou >= threshold && iou > 0.0 {
                pairs.push((iou, gi, di));
            }
        }
    }
    // Among equal IoU a label-agreeing detection goes first; remaining ties
    // are broken by box content rather than list position, so the result
    // does not depend on detection order.
    let agrees = |&(_, gi, di): &(f64, usize, usize)| gt[gi].label == dets[di].label;
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then_with(|| agrees(b).cmp(&agrees(a)))
            .then_with(|| det_key(&dets[a.2]).cmp(&det_key(&dets[b.2])))
    });
    let mut gt_match = vec![None; gt.len()];
    let mut det_used = vec![false; dets.len()];
    for (_, gi, di) in pairs {
        if gt_match[gi].is_none() && !det_used[di] {
            gt_match[gi] = Some(di);
            det_used[di] = true;
        }
    }
    gt_match
}

fn det_key(d: &LabeledBox) -> (BBox, &str, u64) {
    (d.bbox(), d.label.as_str(), d.confidence.unwrap_or(0.0).to_bits())
}

/// Correct ground-truth boxes over all ground-truth boxes. A box is correct
/// when greedily matched with IoU ≥ `threshold` to a detection of the same
/// label. `None` without ground truth.
pub fn final_accuracy(detections: &AnnotationSet, gt: &AnnotationSet, threshold: f64) -> Option<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for entry in &gt.entries {
        let dets: &[LabeledBox] = detections.find(&entry.image).map_or(&[], |d| &d.boxes);
        let matches = greedy_match(&entry.boxes, dets, threshold);
        total += entry.boxes.len();
        correct += entry
            .boxes
            .iter()
            .zip(matches)
            .filter(|(g, m)| m.is_some_and(|di| dets[di].label == g.label))
            .count();
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchStats {
    /// Timed runs, excluding the warm-up.
    pub runs: Vec<Duration>,
    pub mean: Duration,
    pub min: Duration,
}

/// One untimed warm-up call, then `repetitions` timed calls.
pub fn bench<T>(repetitions: usize, mut f: impl FnMut() -> T) -> BenchStats {
    assert!(repetitions >= 1, "need at least one repetition");
    std::hint::black_box(f());
    let runs: Vec<Duration> = (0..repetitions)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed()
        })
        .collect();
    BenchStats::from_runs(runs)
}

impl BenchStats {
    /// Summarizes already-timed runs; panics on an empty list.
    pub fn from_runs(runs: Vec<Duration>) -> Self {
        assert!(!runs.is_empty(), "need at least one run");
        BenchStats {
            mean: runs.iter().sum::<Duration>() / runs.len() as u32,
            min: *runs.iter().min().expect("non-empty"),
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageCounts {
    pub image: String,
    pub pre_merge: Option<usize>,
    pub post_merge: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct EvalReport {
    pub per_class_abo: BTreeMap<String, f64>,
    pub mabo: Option<f64>,
    pub counts: Vec<ImageCounts>,
    pub final_accuracy: Option<f64>,
    pub timings: Vec<(String, BenchStats)>,
}

impl EvalReport {
    /// Scores proposals against ground truth; `detections`, when given,
    /// also yields final accuracy.
    pub fn build(
        gt: &AnnotationSet,
        proposals: &AnnotationSet,
        detections: Option<&AnnotationSet>,
        iou_threshold: f64,
    ) -> Self {
        let per_class_abo = per_class_abo(gt, proposals);
        EvalReport {
            mabo: mean_of(per_class_abo.values().copied()),
            per_class_abo,
            counts: proposals
                .entries
                .iter()
                .map(|e| ImageCounts {
                    image: e.image.clone(),
                    pre_merge: None,
                    post_merge: e.boxes.len(),
                })
                .collect(),
            final_accuracy: detections.and_then(|d| final_accuracy(d, gt, iou_threshold)),
            timings: Vec::new(),
        }
    }

    pub fn mean_boxes(&self) -> Option<f64> {
        mean_of(self.counts.iter().map(|c| c.post_merge as f64))
    }

    /// Plain-text table: one row per class, then MABO, box count and
    /// accuracy rows.
    pub fn to_table(&self) -> String {
        let width = self
            .per_class_abo
            .keys()
            .map(String::len)
            .chain([12])
            .max()
            .unwrap_or(12);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>8}", "class", "ABO (%)");
        let _ = writeln!(s, "{}", "-".repeat(width + 10));
        for (label, v) in &self.per_class_abo {
            let _ = writeln!(s, "{label:<width$}  {:>8.2}", v * 100.0);
        }
        let _ = writeln!(s, "{}", "-".repeat(width + 10));
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}", v * 100.0));
        let _ = writeln!(s, "{:<width$}  {:>8}", "MABO (%)", pct(self.mabo));
        let boxes = self.mean_boxes().map_or("n/a".to_string(), |v| format!("{v:.1}"));
        let _ = writeln!(s, "{:<width$}  {:>8}", "boxes/image", boxes);
        if self.final_accuracy.is_some() {
            let _ = writeln!(s, "{:<width$}  {:>8}", "final acc (%)", pct(self.final_accuracy));
        }
        for (stage, t) in &self.timings {
            let _ = writeln!(s, "{:<width$}  {:>7.3}s", format!("time {stage}"), t.mean.as_secs_f64());
        }
        s
    }

    /// `metric,key,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,key,value\n");
        for (label, v) in &self.per_class_abo {
            let _ = writeln!(s, "abo,{},{v:.6}", csv_field(label));
        }
        if let Some(m) = self.mabo {
            let _ = writeln!(s, "mabo,,{m:.6}");
        }
        for c in &self.counts {
            if let Some(p) = c.pre_merge {
                let _ = writeln!(s, "boxes_pre_merge,{},{p}", csv_field(&c.image));
            }
            let _ = writeln!(s, "boxes,{},{}", csv_field(&c.image), c.post_merge);
        }
        if let Some(a) = self.final_accuracy {
            let _ = writeln!(s, "final_accuracy,,{a:.6}");
        }
        for (stage, t) in &self.timings {
            let _ = writeln!(s, "time_mean_s,{},{:.6}", csv_field(stage), t.mean.as_secs_f64());
            let _ = writeln!(s, "time_min_s,{},{:.6}", csv_field(stage), t.min.as_secs_f64());
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
