//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always reach
//! the terminal: `cargo test -p circuitrec-core --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use circuitrec::dataset::{load_annotations, load_cropped_dataset, AnnotationSet, LabeledBox};
use circuitrec::detect::{detect, DetectConfig};
use circuitrec::evaluation::{bench, final_accuracy, mabo};
use circuitrec::features::{feature_vector, FeatureMode};
use circuitrec::imaging::{load_image, Image};
use circuitrec::nanocnn::gradcheck::{gradient_check, GradCheckConfig};
use circuitrec::nanocnn::layers::{conv2d, dense, maxpool2d};
use circuitrec::nanocnn::train::accuracy;
use circuitrec::nanocnn::{
    build_network, image_to_input, load_weights, predict, shape_chain, train, Control, ModelWeights, Network,
    NetworkSpec, Sample, Tensor, TrainConfig,
};
use circuitrec::proposal::{
    build_regions, overlap_rate, propose_detailed, sim_colour, sim_size, BBox, Region, SimilarityConfig,
};
use circuitrec::segmentation::{LabelMap, SegmentationParams};
use circuitrec::svm::{svm_train, SvmConfig};
use circuitrec::synth::{color_crops, scene, scene_entry, SceneConfig, CROP_COLORS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn judge(ok: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn architecture() -> Outcome {
    let spec = NetworkSpec::new(300, 14);
    let chain = shape_chain([300, 300, 3], &spec.layers()).expect("valid stack");
    let pooled: Vec<Vec<usize>> = spec
        .layers()
        .iter()
        .zip(&chain)
        .filter(|(l, _)| matches!(l, circuitrec::nanocnn::LayerSpec::MaxPool { .. }))
        .map(|(_, s)| s.clone())
        .collect();
    let convs: Vec<usize> = spec
        .layers()
        .iter()
        .zip(&chain)
        .filter(|(l, _)| matches!(l, circuitrec::nanocnn::LayerSpec::Conv { .. }))
        .map(|(_, s)| s[0])
        .collect();
    let chain_ok = convs == [298, 72, 34, 15]
        && pooled == [vec![74, 74, 32], vec![36, 36, 64], vec![17, 17, 128], vec![7, 7, 256]];
    let full: Network<f32> = build_network(&spec, 0).expect("builds");
    let no_fc1 = NetworkSpec { fc1_bias: false, ..spec };
    let count = full.param_count();
    let count_no_fc1 = build_network::<f32>(&no_fc1, 0).expect("builds").param_count();
    judge(
        chain_ok && count == 3_617_294,
        format!(
            "conv sides {convs:?}, pooled {pooled:?}; params {count} (expected 3,617,294), \
             {count_no_fc1} without fc1 bias"
        ),
    )
}

fn gradients() -> Outcome {
    let full = gradient_check(&GradCheckConfig::default()).expect("runs");
    let dropout = gradient_check(&GradCheckConfig {
        dropout: true,
        ..GradCheckConfig::default()
    })
    .expect("runs");
    let linear = gradient_check(&GradCheckConfig::linear()).expect("runs");
    judge(
        full.max_rel_error < 1e-4 && dropout.max_rel_error < 1e-4 && linear.max_rel_error < 1e-8,
        format!(
            "max rel error {:.2e} (dropout {:.2e}) < 1e-4, linear-only {:.2e} < 1e-8",
            full.max_rel_error, dropout.max_rel_error, linear.max_rel_error
        ),
    )
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn layer_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (h, w, c, k) = (rng.gen_range(3..12), rng.gen_range(3..12), rng.gen_range(1..5), rng.gen_range(1..7));
        let x = random_tensor(&mut rng, &[h, w, c]);
        let f = random_tensor(&mut rng, &[k, 3, 3, c]);
        let b = random_tensor(&mut rng, &[k]);
        let y = conv2d(&x, &f, &b);
        let at = |t: &Tensor<f64>, i: &[usize], s: &[usize]| {
            let mut flat = 0;
            for (v, d) in i.iter().zip(s) {
                flat = flat * d + v;
            }
            t.data()[flat]
        };
        for oy in 0..h - 2 {
            for ox in 0..w - 2 {
                for fi in 0..k {
                    let mut acc = b.data()[fi];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            for ch in 0..c {
                                acc += at(&x, &[oy + ky, ox + kx, ch], &[h, w, c])
                                    * at(&f, &[fi, ky, kx, ch], &[k, 3, 3, c]);
                            }
                        }
                    }
                    worst = worst.max((acc - at(&y, &[oy, ox, fi], &[h - 2, w - 2, k])).abs());
                }
            }
        }

        let win = rng.gen_range(1..=3.min(h).min(w));
        let stride = rng.gen_range(1..=win);
        let (p, _) = maxpool2d(&x, win, stride);
        let (ph, pw) = ((h - win) / stride + 1, (w - win) / stride + 1);
        for py in 0..ph {
            for px in 0..pw {
                for ch in 0..c {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..win {
                        for dx in 0..win {
                            m = m.max(at(&x, &[py * stride + dy, px * stride + dx, ch], &[h, w, c]));
                        }
                    }
                    worst = worst.max((m - at(&p, &[py, px, ch], &[ph, pw, c])).abs());
                }
            }
        }

        let (n_in, n_out) = (rng.gen_range(1..40), rng.gen_range(1..20));
        let v = random_tensor(&mut rng, &[n_in]);
        let wm = random_tensor(&mut rng, &[n_out, n_in]);
        let bias = random_tensor(&mut rng, &[n_out]);
        let d = dense(v.data(), &wm, Some(&bias));
        for o in 0..n_out {
            let mut acc = bias.data()[o];
            for i in 0..n_in {
                acc += wm.data()[o * n_in + i] * v.data()[i];
            }
            worst = worst.max((acc - d[o]).abs());
        }
    }
    judge(worst <= 1e-6, format!("200 random tensors, max |Δ| = {worst:.2e} (≤ 1e-6)"))
}

fn crop_samples(seed: u64) -> Vec<Sample> {
    color_crops(16, seed)
        .into_iter()
        .map(|(img, label)| Sample {
            input: image_to_input(&img, 150),
            label,
        })
        .collect()
}

fn training_sanity() -> Outcome {
    let samples = crop_samples(7);
    let spec = NetworkSpec::new(150, CROP_COLORS.len());
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 300,
        seed: 11,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net: Network<f32> = build_network(&spec, 5).expect("builds");
        let history = train(&mut net, &samples, &[], &cfg, |s, _| {
            if s.train_acc == 1.0 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .expect("trains");
        (net, history)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    let last = ha.last().expect("one epoch");
    let identical = a.params() == b.params() && ha == hb;
    judge(
        last.train_acc == 1.0 && identical && accuracy(&a, &samples) == 1.0,
        format!(
            "64 crops, 4 classes: train accuracy {:.1}% after {} epochs (≤ 300); repeat bit-identical: {identical}",
            last.train_acc * 100.0,
            last.epoch
        ),
    )
}

fn proposal_quality() -> Outcome {
    let cfg = SimilarityConfig::default();
    let seg = SegmentationParams::default();
    let mut gt = AnnotationSet::default();
    let mut props = AnnotationSet::default();
    let mut worst_overlap: f64 = 0.0;
    let mut boxes = 0;
    for seed in 0..50 {
        let (img, truth) = scene(&SceneConfig::default(), seed);
        let run = propose_detailed(&img, &cfg, &seg).expect("proposes");
        for (i, a) in run.merged.iter().enumerate() {
            for b in &run.merged[i + 1..] {
                worst_overlap = worst_overlap.max(overlap_rate(a, b));
            }
        }
        boxes += run.boxes.len();
        let name = format!("scene_{seed}");
        gt.entries.push(scene_entry(&name, truth));
        props
            .entries
            .push(scene_entry(&name, run.boxes.iter().map(|&b| LabeledBox::new(b, "?")).collect()));
    }
    let m = mabo(&gt, &props).expect("classes present");
    judge(
        m >= 0.85 && worst_overlap <= cfg.merge_threshold,
        format!(
            "50 scenes: MABO {m:.4} (≥ 0.85), {:.1} boxes/scene, max post-merge overlap {worst_overlap:.4} (≤ {})",
            boxes as f64 / 50.0,
            cfg.merge_threshold
        ),
    )
}

fn region(size: usize, bbox: BBox) -> Region {
    Region {
        id: 0,
        size,
        bbox,
        hist: Vec::new(),
        neighbors: Default::default(),
    }
}

fn similarity_values() -> Outcome {
    let im_area = 400;
    let s = sim_size(&region(100, BBox::new(0, 0, 10, 10)), &region(100, BBox::new(10, 0, 10, 10)), im_area);
    let iou = overlap_rate(&BBox::new(0, 0, 10, 10), &BBox::new(5, 0, 10, 10));

    // Colour similarity on regions from random label maps, against
    // histograms recounted directly from pixel values.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut pairs, mut worst_dev, mut in_bounds) = (0, 0.0f64, true);
    while pairs < 1000 {
        let (w, h) = (rng.gen_range(4..16), rng.gen_range(4..16));
        let img = Image::from_fn_rgb(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let n_labels = rng.gen_range(2..6u32);
        let raw: Vec<u32> = (0..w * h).map(|_| rng.gen_range(0..n_labels)).collect();
        let labels = LabelMap::from_labels(w, h, &raw);
        let regions = build_regions(&labels, &img);
        let oracle: Vec<Vec<f64>> = (0..regions.len())
            .map(|r| {
                let mut hist = vec![0.0; 75];
                let mut n = 0.0;
                for (i, &l) in labels.labels().iter().enumerate() {
                    if l as usize == r {
                        let px = img.rgb_at(i % w, i / w);
                        for (ch, &v) in px.iter().enumerate() {
                            hist[ch * 25 + (v as usize * 25 / 255).min(24)] += 1.0;
                        }
                        n += 3.0;
                    }
                }
                hist.iter().map(|c| c / n).collect()
            })
            .collect();
        for i in 0..regions.len() {
            for j in i + 1..regions.len() {
                let got = sim_colour(&regions[i], &regions[j]);
                let want: f64 = oracle[i].iter().zip(&oracle[j]).map(|(a, b)| a.min(*b)).sum();
                worst_dev = worst_dev.max((got - want).abs());
                in_bounds &= (-1e-9..=1.0 + 1e-9).contains(&got);
                pairs += 1;
            }
        }
    }
    let ok = (s - 0.5).abs() <= 1e-9 && (iou - 1.0 / 3.0).abs() <= 1e-9 && in_bounds && worst_dev <= 1e-9;
    judge(
        ok,
        format!(
            "sim_size {s} (0.5), overlap {iou:.12} (1/3), {pairs} sim_colour pairs in [0,1]: {in_bounds}, \
             max deviation from recount {worst_dev:.1e}"
        ),
    )
}

fn svm_criterion() -> Outcome {
    let crop = Image::from_fn_rgb(37, 23, |x, y| [(x * 7) as u8, (y * 11) as u8, 90]);
    let dims: Vec<usize> = FeatureMode::ALL.iter().map(|&m| feature_vector(&crop, m).len()).collect();
    let dims_ok = dims == [22_500, 3, 20, 10];

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let centers = [[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 3.0]];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..40 {
        for (label, c) in centers.iter().enumerate() {
            x.push(c.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect::<Vec<f64>>());
            y.push(label);
        }
    }
    let names = vec!["a".to_string(), "b".into(), "c".into()];
    let model = svm_train(&x, &y, names, FeatureMode::AspectHue, &SvmConfig::default()).expect("trains");
    let correct = x.iter().zip(&y).filter(|(v, &l)| model.predict(v) == l).count();
    judge(
        dims_ok && correct == x.len(),
        format!(
            "feature lengths raw/aspect-hue/color/censure = {dims:?}; separable training accuracy {correct}/{}",
            x.len()
        ),
    )
}

fn timing() -> Outcome {
    let big = SceneConfig {
        width: 800,
        height: 600,
        min_side: 60,
        max_side: 180,
        margin: 16,
        ..SceneConfig::default()
    };
    let (img, truth) = scene(&big, 1);
    let seg = SegmentationParams::default();
    let at = |long| SimilarityConfig {
        thumbnail_long_side: long,
        ..SimilarityConfig::default()
    };
    let small_cfg = at(400);
    let large_cfg = at(800);
    let small = bench(3, || propose_detailed(&img, &small_cfg, &seg).expect("proposes"));
    let large = bench(3, || propose_detailed(&img, &large_cfg, &seg).expect("proposes"));
    // Minimum over runs: the least scheduler-disturbed measurement.
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    let ratio = large.min.as_secs_f64() / small.min.as_secs_f64();

    let net: Network<f32> = build_network(&NetworkSpec::new(150, 14), 0).expect("builds");
    let b = truth[0].bbox();
    let crop = img.crop(b.x as usize, b.y as usize, b.w as usize, b.h as usize);
    let cnn = bench(10, || predict(&net, &crop));
    let share = cnn.min.as_secs_f64() / small.min.as_secs_f64();
    judge(
        ratio >= 1.5 && share < 0.1,
        format!(
            "min (mean) ms: proposal 300×400 {:.1} ({:.1}), 600×800 {:.1} ({:.1}), ratio {ratio:.2} ≥ 1.5; \
             CNN per crop {:.2} ({:.2}) = {:.1}% of proposal (< 10%)",
            ms(small.min),
            ms(small.mean),
            ms(large.min),
            ms(large.mean),
            ms(cnn.min),
            ms(cnn.mean),
            share * 100.0
        ),
    )
}

/// `CIRCUITREC_DATASET` names a directory with `crops/{train,test}/<class>/`
/// and optionally `annotations.jsonl` next to the photos it lists.
/// `CIRCUITREC_MODEL` supplies trained 150-input weights; otherwise a model
/// is trained with the default hyper-parameters (`CIRCUITREC_EPOCHS`
/// overrides the epoch count).
fn dataset_conditional() -> Outcome {
    let Some(root) = std::env::var_os("CIRCUITREC_DATASET").map(PathBuf::from) else {
        return Outcome {
            verdict: Verdict::Skip,
            detail: "CIRCUITREC_DATASET not set; released dataset absent".into(),
        };
    };
    match dataset_run(&root) {
        Ok(o) => o,
        Err(e) => judge(false, format!("dataset run failed: {e}")),
    }
}

fn dataset_run(root: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let crops_root = if root.join("crops").is_dir() { root.join("crops") } else { root.to_path_buf() };
    let ds = load_cropped_dataset(&crops_root)?;
    let model = match std::env::var_os("CIRCUITREC_MODEL") {
        Some(p) => load_weights(p)?,
        None => {
            let epochs = std::env::var("CIRCUITREC_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(1000);
            let spec = NetworkSpec::new(150, ds.vocabulary.len());
            let mut model = ModelWeights::new(spec, ds.vocabulary.clone(), 0)?;
            let samples: Vec<Sample> = ds
                .train
                .iter()
                .map(|s| Sample {
                    input: image_to_input(&s.image, 150),
                    label: s.label,
                })
                .collect();
            let cfg = TrainConfig {
                epochs,
                ..TrainConfig::default()
            };
            model.epochs_run = train(&mut model.network, &samples, &[], &cfg, |_, _| Control::Continue)?.len();
            model
        }
    };
    if model.class_names != ds.vocabulary {
        return Ok(judge(false, "model classes differ from the dataset's class folders".into()));
    }
    let test: Vec<Sample> = ds
        .test
        .iter()
        .map(|s| Sample {
            input: image_to_input(&s.image, model.spec.input_size),
            label: s.label,
        })
        .collect();
    let test_acc = accuracy(&model.network, &test);
    let mut detail = format!("crop test accuracy {:.2}% (≥ 95%)", test_acc * 100.0);
    let mut ok = test_acc >= 0.95;
    let ann = root.join("annotations.jsonl");
    if ann.is_file() {
        let gt = load_annotations(&ann)?;
        let mut dets = AnnotationSet::default();
        for e in &gt.entries {
            let img = load_image(root.join(&e.image))?;
            let run = detect(&img, &model, &DetectConfig::default())?;
            dets.entries
                .push(scene_entry(&e.image, run.detections.iter().map(|d| d.to_labeled()).collect()));
        }
        let fa = final_accuracy(&dets, &gt, 0.5).unwrap_or(0.0);
        detail += &format!(", end-to-end final accuracy {:.2}% (≥ 88%)", fa * 100.0);
        ok &= fa >= 0.88;
    } else {
        detail += ", no annotations.jsonl so final accuracy not measured";
    }
    Ok(judge(ok, detail))
}

fn main() {
    // Quietly succeed when the harness only asks for a test listing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("architecture fidelity", architecture),
        ("gradient correctness", gradients),
        ("layer oracles", layer_oracles),
        ("training sanity", training_sanity),
        ("proposal quality (synthetic)", proposal_quality),
        ("similarity and overlap values", similarity_values),
        ("svm dimensions and separability", svm_criterion),
        ("timing trend", timing),
        ("dataset-conditional accuracy", dataset_conditional),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let o = check();
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!("{tag} {name} [{:.1}s]: {}", t.elapsed().as_secs_f64(), o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
