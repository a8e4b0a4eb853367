use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use circuitrec::dataset::{
    crop_and_export, load_annotations, load_cropped_dataset, parse_annotations, AnnotationEntry, AnnotationSet,
    CropSample, LabeledBox, UNLABELED,
};
use circuitrec::detect::{detect, DetectConfig, Detection};
use circuitrec::evaluation::{bench, BenchStats, EvalReport};
use circuitrec::features::feature_vector;
use circuitrec::imaging::{convert, load_image, resize_long_side, save_png, Image};
use circuitrec::nanocnn::gradcheck::{gradient_check, GradCheckConfig};
use circuitrec::nanocnn::{
    image_to_input, load_weights, predict, save_weights, train, Control, ModelWeights, Sample,
};
use circuitrec::proposal::propose_detailed;
use circuitrec::render::render;
use circuitrec::segmentation::segment;
use circuitrec::svm::{save_svm, svm_train};
use circuitrec::synth::{blank_crops, color_crops, scene, scene_entry, SceneConfig, CROP_COLORS};
use serde::Serialize;

use crate::args::*;
use crate::config::{echo, read_text, Config};
use crate::{BadInput, Outcome};

fn load_photo(path: &Path) -> Result<Image> {
    load_image(path).map_err(|e| BadInput(format!("cannot load image {}: {e}", path.display())).into())
}

fn load_model(path: &Path) -> Result<ModelWeights> {
    load_weights(path).map_err(|e| BadInput(format!("cannot load model {}: {e}", path.display())).into())
}

fn load_set(path: &Path) -> Result<AnnotationSet> {
    parse_annotations(&read_text(path)?).map_err(|e| BadInput(format!("{}: {e}", path.display())).into())
}

fn sorted(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut v = paths.to_vec();
    v.sort();
    v
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn file_key(image: &str) -> String {
    Path::new(image)
        .file_name()
        .map_or_else(|| image.to_string(), |n| n.to_string_lossy().into_owned())
}

/// Rewrites every entry's image to its file name so sets produced from
/// different working directories line up.
fn by_file_name(mut set: AnnotationSet) -> AnnotationSet {
    for e in &mut set.entries {
        e.image = file_key(&e.image);
    }
    set
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

pub fn propose(cmd: &ProposeCmd, mut cfg: Config) -> Result<Outcome> {
    cfg.apply_proposal(&cmd.proposal)?;
    echo(&cfg);
    if let Some(dir) = &cmd.debug_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut set = AnnotationSet::default();
    for path in sorted(&cmd.images) {
        let img = load_photo(&path)?;
        let run = propose_detailed(&img, &cfg.similarity, &cfg.segmentation)?;
        eprintln!(
            "{}: {} regions, {} candidates, {} boxes",
            path.display(),
            run.num_regions,
            run.candidates.len(),
            run.boxes.len()
        );
        if let Some(dir) = &cmd.debug_dir {
            let (thumb, _) = resize_long_side(&img, cfg.similarity.thumbnail_long_side);
            let labels = segment(&convert(&thumb, cfg.similarity.color_space), &cfg.segmentation);
            save_png(&labels.to_color_image(), dir.join(format!("{}_segments.png", stem(&path))))?;
        }
        set.entries.push(AnnotationEntry {
            image: path.display().to_string(),
            boxes: run.boxes.iter().map(|&b| LabeledBox::new(b, UNLABELED)).collect(),
        });
    }
    emit(cmd.out.as_deref(), &set.to_jsonl())?;
    Ok(Outcome::Ok)
}

pub fn crop(cmd: &CropCmd, mut cfg: Config) -> Result<Outcome> {
    cfg.apply_proposal(&cmd.proposal)?;
    echo(&cfg);
    let jobs: Vec<(PathBuf, Vec<LabeledBox>)> = match &cmd.annotations {
        Some(file) => {
            let set = load_annotations(file).map_err(|e| BadInput(format!("{}: {e}", file.display())))?;
            let base = file.parent().unwrap_or(Path::new("."));
            set.entries.into_iter().map(|e| (base.join(&e.image), e.boxes)).collect()
        }
        None => {
            if cmd.images.is_empty() {
                return Err(BadInput("give images to propose on or --annotations".into()).into());
            }
            let mut jobs = Vec::new();
            for path in sorted(&cmd.images) {
                let boxes = propose_detailed(&load_photo(&path)?, &cfg.similarity, &cfg.segmentation)?.boxes;
                jobs.push((path, boxes.into_iter().map(|b| LabeledBox::new(b, UNLABELED)).collect()));
            }
            jobs
        }
    };
    let mut total = 0;
    for (path, boxes) in jobs {
        let img = load_photo(&path)?;
        let mut by_label: BTreeMap<String, Vec<_>> = BTreeMap::new();
        for b in boxes {
            let dir = if b.label == UNLABELED { "unsorted".to_string() } else { b.label.clone() };
            by_label.entry(dir).or_default().push(b.bbox());
        }
        for (label, boxes) in by_label {
            let dir = cmd.out.join(label);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            total += crop_and_export(&img, &boxes, &stem(&path), &dir)
                .map_err(|e| BadInput(format!("{}: {e}", path.display())))?
                .len();
        }
    }
    eprintln!("wrote {total} crops under {}", cmd.out.display());
    Ok(Outcome::Ok)
}

fn load_dataset(root: &Path) -> Result<circuitrec::dataset::CroppedDataset> {
    let ds = load_cropped_dataset(root).map_err(|e| BadInput(format!("{}: {e}", root.display())))?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    if ds.train.is_empty() {
        return Err(BadInput(format!("{} has no training crops", root.display())).into());
    }
    Ok(ds)
}

pub fn train_cnn(cmd: &TrainCnnCmd, mut cfg: Config, json: bool) -> Result<Outcome> {
    cfg.apply_cnn(&cmd.cnn)?;
    echo(&cfg);
    let ds = load_dataset(&cmd.data)?;
    let spec = cfg.network_spec(ds.vocabulary.len());
    spec.validate().map_err(|e| BadInput(e.to_string()))?;
    let size = spec.input_size;
    let to_samples = |v: &[CropSample]| -> Vec<Sample> {
        v.iter()
            .map(|s| Sample {
                input: image_to_input(&s.image, size),
                label: s.label,
            })
            .collect()
    };
    let (train_set, test_set) = (to_samples(&ds.train), to_samples(&ds.test));
    eprintln!(
        "{} classes, {} train / {} test crops",
        ds.vocabulary.len(),
        train_set.len(),
        test_set.len()
    );
    let mut model = ModelWeights::new(spec, ds.vocabulary.clone(), cfg.seed)?;
    let history = train(&mut model.network, &train_set, &test_set, &cfg.train_config(), |s, _| {
        let test = s.test_acc.map_or(String::new(), |a| format!(" test {a:.4}"));
        eprintln!("epoch {} loss {:.6} train {:.4}{test}", s.epoch, s.loss, s.train_acc);
        Control::Continue
    })?;
    model.epochs_run = history.len();
    save_weights(&model, &cmd.out)?;
    if let Some(p) = &cmd.history {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        circuitrec::nanocnn::train::write_history_csv(&history, std::io::BufWriter::new(f))?;
    }
    let last = history.last().expect("at least one epoch");
    if json {
        println!("{}", serde_json::to_string(last)?);
    } else {
        let test = last.test_acc.map_or("n/a".into(), |a| format!("{:.2}%", a * 100.0));
        println!(
            "trained {} epochs: train accuracy {:.2}%, test accuracy {test}; weights in {}",
            last.epoch,
            last.train_acc * 100.0,
            cmd.out.display()
        );
    }
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct SvmSummary {
    features: String,
    dims: usize,
    retained: usize,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
}

pub fn train_svm(cmd: &TrainSvmCmd, mut cfg: Config, json: bool) -> Result<Outcome> {
    cfg.apply_svm(&cmd.svm)?;
    echo(&cfg);
    let ds = load_dataset(&cmd.data)?;
    let mode = cfg.svm.features;
    let feats = |v: &[CropSample]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (v.iter().map(|s| feature_vector(&s.image, mode)).collect(), v.iter().map(|s| s.label).collect())
    };
    let (xtr, ytr) = feats(&ds.train);
    let (xte, yte) = feats(&ds.test);
    let model = svm_train(&xtr, &ytr, ds.vocabulary.clone(), mode, &cfg.svm_config())
        .map_err(|e| BadInput(e.to_string()))?;
    let acc = |x: &[Vec<f64>], y: &[usize]| {
        x.iter().zip(y).filter(|(v, &l)| model.predict(v) == l).count() as f64 / x.len() as f64
    };
    let summary = SvmSummary {
        features: mode.to_string(),
        dims: mode.len(),
        retained: model.retained.len(),
        train_accuracy: acc(&xtr, &ytr),
        test_accuracy: (!xte.is_empty()).then(|| acc(&xte, &yte)),
    };
    save_svm(&model, &cmd.out)?;
    if json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        let test = summary.test_accuracy.map_or("n/a".into(), |a| format!("{:.2}%", a * 100.0));
        println!(
            "{} features ({} dims, {} retained): train accuracy {:.2}%, test accuracy {test}; model in {}",
            summary.features,
            summary.dims,
            summary.retained,
            summary.train_accuracy * 100.0,
            cmd.out.display()
        );
    }
    Ok(Outcome::Ok)
}

pub fn detect_cmd(cmd: &DetectCmd, mut cfg: Config) -> Result<Outcome> {
    cfg.apply_proposal(&cmd.proposal)?;
    echo(&cfg);
    let model = load_model(&cmd.model)?;
    let dcfg = DetectConfig {
        similarity: cfg.similarity,
        segmentation: cfg.segmentation,
        keep_blank: cmd.keep_blank,
    };
    let mut set = AnnotationSet::default();
    for path in sorted(&cmd.images) {
        let run = detect(&load_photo(&path)?, &model, &dcfg)?;
        eprintln!(
            "{}: {} proposals, {} detections",
            path.display(),
            run.proposals.boxes.len(),
            run.detections.len()
        );
        set.entries.push(AnnotationEntry {
            image: path.display().to_string(),
            boxes: run.detections.iter().map(Detection::to_labeled).collect(),
        });
    }
    emit(cmd.out.as_deref(), &set.to_jsonl())?;
    Ok(Outcome::Ok)
}

pub fn eval(cmd: &EvalCmd, mut cfg: Config, json: bool) -> Result<Outcome> {
    if let Some(t) = cmd.iou {
        cfg.eval.iou_threshold = t;
    }
    echo(&cfg);
    if cmd.proposals.is_none() && cmd.detections.is_none() {
        return Err(BadInput("give --proposals and/or --detections".into()).into());
    }
    let gt = by_file_name(load_set(&cmd.annotations)?);
    let proposals = match &cmd.proposals {
        Some(p) => by_file_name(load_set(p)?),
        None => AnnotationSet::default(),
    };
    let detections = match &cmd.detections {
        Some(p) => Some(by_file_name(load_set(p)?)),
        None => None,
    };
    let mut report = EvalReport::build(&gt, &proposals, detections.as_ref(), cfg.eval.iou_threshold);
    if cmd.proposals.is_none() {
        report.per_class_abo.clear();
        report.mabo = None;
    }
    if json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        print!("{}", report.to_table());
    }
    if let Some(p) = &cmd.csv {
        fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut failed = false;
    if let Some(min) = cmd.min_mabo {
        if report.mabo.is_none_or(|m| m < min) {
            eprintln!("check failed: MABO {:?} below {min}", report.mabo);
            failed = true;
        }
    }
    if let Some(min) = cmd.min_accuracy {
        if report.final_accuracy.is_none_or(|a| a < min) {
            eprintln!("check failed: final accuracy {:?} below {min}", report.final_accuracy);
            failed = true;
        }
    }
    Ok(if failed { Outcome::CheckFailed } else { Outcome::Ok })
}

#[derive(Serialize)]
struct BenchRow {
    image: String,
    stage: &'static str,
    mean_s: f64,
    min_s: f64,
    runs: usize,
}

pub fn bench_cmd(cmd: &BenchCmd, mut cfg: Config, json: bool) -> Result<Outcome> {
    cfg.apply_proposal(&cmd.proposal)?;
    echo(&cfg);
    if cmd.reps == 0 {
        return Err(BadInput("--reps must be >= 1".into()).into());
    }
    let model = cmd.model.as_deref().map(load_model).transpose()?;
    let mut rows = Vec::new();
    for path in sorted(&cmd.images) {
        let img = load_photo(&path)?;
        propose_detailed(&img, &cfg.similarity, &cfg.segmentation)?;
        let mut stages: [(&str, Vec<Duration>); 5] =
            ["resize", "segment", "group", "merge", "total"].map(|s| (s, Vec::new()));
        let mut last = None;
        for _ in 0..cmd.reps {
            let run = propose_detailed(&img, &cfg.similarity, &cfg.segmentation)?;
            let t = run.timings;
            for (slot, d) in stages.iter_mut().zip([t.resize, t.segment, t.group, t.merge, t.total()]) {
                slot.1.push(d);
            }
            last = Some(run);
        }
        let mut stats: Vec<(&'static str, BenchStats)> =
            stages.into_iter().map(|(s, runs)| (s, BenchStats::from_runs(runs))).collect();
        if let (Some(model), Some(run)) = (&model, &last) {
            let crops: Vec<Image> = run
                .boxes
                .iter()
                .map(|b| img.crop(b.x as usize, b.y as usize, b.w as usize, b.h as usize))
                .collect();
            let s = bench(cmd.reps, || crops.iter().map(|c| predict(&model.network, c).0).sum::<usize>());
            stats.push(("cnn", s));
        }
        for (stage, s) in stats {
            rows.push(BenchRow {
                image: path.display().to_string(),
                stage,
                mean_s: s.mean.as_secs_f64(),
                min_s: s.min.as_secs_f64(),
                runs: s.runs.len(),
            });
        }
    }
    if json {
        for r in &rows {
            println!("{}", serde_json::to_string(r)?);
        }
    } else {
        println!("{:<32} {:<8} {:>10} {:>10}", "image", "stage", "mean (s)", "min (s)");
        for r in &rows {
            println!("{:<32} {:<8} {:>10.4} {:>10.4}", r.image, r.stage, r.mean_s, r.min_s);
        }
    }
    Ok(Outcome::Ok)
}

pub fn gradcheck(cmd: &GradcheckCmd, cfg: Config, json: bool) -> Result<Outcome> {
    echo(&cfg);
    let mut gc = if cmd.linear { GradCheckConfig::linear() } else { GradCheckConfig::default() };
    gc.seed = cfg.seed;
    gc.dropout = cmd.dropout;
    if let Some(e) = cmd.eps {
        gc.eps = e;
    }
    let report = gradient_check(&gc).map_err(|e| BadInput(e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        println!(
            "checked {} parameters: max relative error {:.3e} (threshold {:.0e})",
            report.checked, report.max_rel_error, cmd.threshold
        );
    }
    // NaN must fail too, hence the negated comparison.
    Ok(if !(report.max_rel_error < cmd.threshold) { Outcome::CheckFailed } else { Outcome::Ok })
}

pub fn render_cmd(cmd: &RenderCmd, mut cfg: Config) -> Result<Outcome> {
    cfg.apply_proposal(&cmd.proposal)?;
    echo(&cfg);
    let img = load_photo(&cmd.image)?;
    let detections: Vec<Detection> = match (&cmd.detections, &cmd.model) {
        (Some(file), _) => {
            let set = load_set(file)?;
            let key = file_key(&cmd.image.display().to_string());
            let entry = set
                .entries
                .iter()
                .find(|e| file_key(&e.image) == key)
                .ok_or_else(|| BadInput(format!("{} has no entry for {key}", file.display())))?;
            entry
                .boxes
                .iter()
                .map(|b| Detection {
                    bbox: b.bbox(),
                    label: 0,
                    class_name: b.label.clone(),
                    confidence: b.confidence.unwrap_or(1.0) as f32,
                })
                .collect()
        }
        (None, Some(model)) => {
            let model = load_model(model)?;
            let dcfg = DetectConfig {
                similarity: cfg.similarity,
                segmentation: cfg.segmentation,
                keep_blank: false,
            };
            detect(&img, &model, &dcfg)?.detections
        }
        (None, None) => bail!(BadInput("give --detections or --model".into())),
    };
    save_png(&render(&img, &detections), &cmd.out)?;
    eprintln!("drew {} detections into {}", detections.len(), cmd.out.display());
    Ok(Outcome::Ok)
}

pub fn synth(cmd: &SynthCmd, cfg: Config) -> Result<Outcome> {
    echo(&cfg);
    if cmd.noise < 0 {
        return Err(BadInput("--noise must be >= 0".into()).into());
    }
    let scenes_dir = cmd.out.join("scenes");
    fs::create_dir_all(&scenes_dir).with_context(|| format!("creating {}", scenes_dir.display()))?;
    let scfg = SceneConfig {
        noise: cmd.noise,
        ..SceneConfig::default()
    };
    let mut set = AnnotationSet::default();
    for i in 0..cmd.scenes {
        let (img, boxes) = scene(&scfg, cfg.seed.wrapping_add(i as u64));
        let name = format!("scene_{i:03}.png");
        save_png(&img, scenes_dir.join(&name))?;
        set.entries.push(scene_entry(&format!("scenes/{name}"), boxes));
    }
    fs::write(cmd.out.join("annotations.jsonl"), set.to_jsonl())?;
    if cmd.crops > 0 {
        for (split, offset) in [("train", 0u64), ("test", 1)] {
            let seed = cfg.seed.wrapping_mul(2).wrapping_add(offset);
            let root = cmd.out.join("crops").join(split);
            for (name, _) in CROP_COLORS {
                fs::create_dir_all(root.join(name))?;
            }
            for (i, (img, label)) in color_crops(cmd.crops, seed).into_iter().enumerate() {
                save_png(&img, root.join(CROP_COLORS[label].0).join(format!("{i:04}.png")))?;
            }
            let blank = root.join(circuitrec::detect::BLANK);
            fs::create_dir_all(&blank)?;
            for (i, img) in blank_crops(cmd.crops, seed).into_iter().enumerate() {
                save_png(&img, blank.join(format!("{i:04}.png")))?;
            }
        }
    }
    eprintln!("wrote {} scenes to {}", cmd.scenes, cmd.out.display());
    Ok(Outcome::Ok)
}
