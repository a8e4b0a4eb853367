use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circuitrec"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SCENES: [&str; 4] = [
    "scenes/scene_000.png",
    "scenes/scene_001.png",
    "scenes/scene_002.png",
    "scenes/scene_003.png",
];

#[test]
fn propose_matches_golden_output() {
    let mut args = vec!["propose"];
    args.extend(SCENES.iter().rev());
    let out = run_in(&fixture(), &args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let want = fs::read_to_string(fixture().join("expected_proposals.jsonl")).unwrap();
    assert_eq!(stdout(&out), want);
    assert!(stderr(&out).contains("# effective config"));
}

#[test]
fn eval_thresholds_set_the_exit_code() {
    let dir = fixture();
    let base = ["eval", "--annotations", "annotations.jsonl", "--proposals", "expected_proposals.jsonl"];
    let ok = run_in(&dir, &[&base[..], &["--min-mabo", "0.8"]].concat());
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(stdout(&ok).contains("MABO (%)"));

    let failed = run_in(&dir, &[&base[..], &["--min-mabo", "0.99"]].concat());
    assert_eq!(code(&failed), 3);
    assert!(stderr(&failed).contains("check failed"));

    let json = run_in(&dir, &[&["--json"], &base[..]].concat());
    let v: serde_json::Value = serde_json::from_str(stdout(&json).trim()).unwrap();
    let mabo = v["mabo"].as_f64().unwrap();
    assert!((0.8..=1.0).contains(&mabo), "{mabo}");
}

#[test]
fn bad_input_exits_with_two() {
    let dir = fixture();
    let missing = run_in(&dir, &["propose", "no_such_image.png"]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("no_such_image.png"));

    let usage = run_in(&dir, &["propose", "--thumb-long", "many", SCENES[0]]);
    assert_eq!(code(&usage), 2);

    let bad_value = run_in(&dir, &["propose", "--k", "-3", SCENES[0]]);
    assert_eq!(code(&bad_value), 2);

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[similarity]\nthumb = 3\n").unwrap();
    let unknown_key = run_in(&dir, &["--config", cfg.to_str().unwrap(), "propose", SCENES[0]]);
    assert_eq!(code(&unknown_key), 2);

    let no_inputs = run_in(&dir, &["eval", "--annotations", "annotations.jsonl"]);
    assert_eq!(code(&no_inputs), 2);
}

#[test]
fn config_file_and_flags_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "seed = 9\n[similarity]\nthumbnail_long_side = 200\nmerge_threshold = 0.3\n").unwrap();
    let out = run_in(
        &fixture(),
        &["--config", cfg.to_str().unwrap(), "propose", "--thumb-long", "150", SCENES[0]],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("seed = 9"));
    assert!(err.contains("thumbnail_long_side = 150"));
    assert!(err.contains("merge_threshold = 0.3"));

    // The echoed block loads back as a config file.
    let echoed: String = err
        .lines()
        .skip_while(|l| !l.starts_with("# effective config"))
        .skip(1)
        .take_while(|l| !l.starts_with("scenes/"))
        .collect::<Vec<_>>()
        .join("\n");
    let again = tmp.path().join("echoed.toml");
    fs::write(&again, echoed).unwrap();
    let rerun = run_in(&fixture(), &["--config", again.to_str().unwrap(), "propose", SCENES[0]]);
    assert_eq!(code(&rerun), 0, "{}", stderr(&rerun));
    assert_eq!(stdout(&rerun), stdout(&out));
}

#[test]
fn gradcheck_passes_and_fails_on_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = run_in(tmp.path(), &["--json", "gradcheck", "--linear"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let v: serde_json::Value = serde_json::from_str(stdout(&ok).trim()).unwrap();
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-4);

    let strict = run_in(tmp.path(), &["gradcheck", "--linear", "--threshold", "0"]);
    assert_eq!(code(&strict), 3);
}

#[test]
fn train_detect_render_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let crops = fixture().join("crops");
    let crops = crops.to_str().unwrap();
    let model = t.join("cnn.bin");
    let history = t.join("history.csv");
    let out = run_in(
        t,
        &[
            "--seed",
            "3",
            "--json",
            "train-cnn",
            "--data",
            crops,
            "--out",
            model.to_str().unwrap(),
            "--history",
            history.to_str().unwrap(),
            "--epochs",
            "2",
            "--lr",
            "0.01",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let last: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(last["epoch"], 2);
    assert_eq!(fs::read_to_string(&history).unwrap().lines().count(), 3);

    let scene = fixture().join(SCENES[1]);
    let dets = t.join("dets.jsonl");
    let out = run_in(
        t,
        &[
            "detect",
            scene.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--keep-blank",
            "--out",
            dets.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&dets).unwrap();
    let entry: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let boxes = entry["boxes"].as_array().unwrap();
    assert!(!boxes.is_empty());
    for b in boxes {
        let c = b["confidence"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&c));
    }

    let png = t.join("drawn.png");
    let out = run_in(
        t,
        &[
            "render",
            scene.to_str().unwrap(),
            "--detections",
            dets.to_str().unwrap(),
            "--out",
            png.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(fs::metadata(&png).unwrap().len() > 0);

    let ann = fixture().join("annotations.jsonl");
    let out = run_in(
        t,
        &[
            "--json",
            "eval",
            "--annotations",
            ann.to_str().unwrap(),
            "--detections",
            dets.to_str().unwrap(),
            "--min-accuracy",
            "1.01",
        ],
    );
    assert_eq!(code(&out), 3);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert!(v["final_accuracy"].as_f64().is_some());

    let broken = t.join("broken.bin");
    fs::write(&broken, b"not a model").unwrap();
    let out = run_in(t, &["detect", scene.to_str().unwrap(), "--model", broken.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_svm_on_color_features() {
    let tmp = tempfile::tempdir().unwrap();
    let crops = fixture().join("crops");
    let out = run_in(
        tmp.path(),
        &["--json", "train-svm", "--data", crops.to_str().unwrap(), "--features", "color"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["dims"], 20);
    assert_eq!(v["train_accuracy"], 1.0);
    assert!(tmp.path().join("svm.bin").is_file());

    let bad = run_in(tmp.path(), &["train-svm", "--data", crops.to_str().unwrap(), "--features", "sift"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn synth_and_crop_write_expected_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let out = run_in(t, &["--seed", "4", "synth", "--out", "set", "--scenes", "2", "--crops", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ann = fs::read_to_string(t.join("set/annotations.jsonl")).unwrap();
    assert_eq!(ann.lines().count(), 2);
    for class in ["blank", "blue", "green", "red", "yellow"] {
        assert_eq!(fs::read_dir(t.join("set/crops/test").join(class)).unwrap().count(), 1);
    }

    let out = run_in(
        &t.join("set"),
        &["crop", "--annotations", "annotations.jsonl", "--out", "gt_crops"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let boxes: usize = ann
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["boxes"].as_array().unwrap().len())
        .sum();
    let written: usize = fs::read_dir(t.join("set/gt_crops"))
        .unwrap()
        .map(|d| fs::read_dir(d.unwrap().path()).unwrap().count())
        .sum();
    assert_eq!(written, boxes);
}
