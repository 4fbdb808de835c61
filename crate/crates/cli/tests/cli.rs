use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use edgeattnet::data::{save_dataset, Sample};
use edgeattnet::io::{read_gray, write_gray_png, write_mask_png};
use edgeattnet::metrics::{EvalReport, InstanceMask};
use edgeattnet::model::{checkpoint, Model, ModelSpec, ParamReport, VariantKind};
use edgeattnet::preprocess::GrayImage;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeattnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn disk_image(cx: f64, cy: f64, r: f64) -> GrayImage {
    GrayImage::from_fn(128, 128, |x, y| {
        let d = (x as f64 - cx).hypot(y as f64 - cy) / r;
        if d <= 1.0 {
            0.9 - 0.4 * d * d
        } else {
            0.05
        }
    })
}

#[test]
fn params_all_reports_every_variant() {
    let out = cli(&["params", "--variant", "all", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let reports: Vec<ParamReport> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports.len(), 4);
    let total = |v: VariantKind| reports.iter().find(|r| r.variant == v).unwrap().total;
    assert_eq!(total(VariantKind::MhsaPe) - total(VariantKind::MhsaNope), 131_072);
    for r in &reports {
        assert_eq!(r.rows.iter().map(|row| row.count).sum::<u64>(), r.total);
    }
    let text = cli(&["params", "--variant", "edgeattnet"]);
    assert_eq!(text.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&text.stdout).contains("edgeattnet"));
    assert_eq!(cli(&["params", "--variant", "bogus"]).status.code(), Some(1));
}

#[test]
fn preprocess_tolerates_partial_failure_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("in"), dir.path().join("out"));
    fs::create_dir_all(&input).unwrap();
    write_gray_png(&input.join("a.png"), &disk_image(64.0, 64.0, 50.0)).unwrap();
    write_gray_png(&input.join("b.png"), &disk_image(60.0, 68.0, 48.0)).unwrap();
    write_gray_png(&input.join("c.png"), &GrayImage::filled(128, 128, 0.0)).unwrap();
    let run = || cli(&["preprocess", "--input", p(&input), "--output", p(&out)]);
    assert_eq!(run().status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["succeeded"], 2);
    assert_eq!(manifest["failed"], 1);
    assert!(out.join("a.png").is_file() && out.join("b.png").is_file() && !out.join("c.png").exists());
    assert!(out.join("run_config.json").is_file());
    let first = fs::read(out.join("a.png")).unwrap();
    let processed = read_gray(&out.join("a.png")).unwrap();
    assert_eq!(processed.get(0, 0), 0.0);
    assert_eq!(run().status.code(), Some(0));
    assert_eq!(fs::read(out.join("a.png")).unwrap(), first);

    let blank = dir.path().join("blank");
    fs::create_dir_all(&blank).unwrap();
    write_gray_png(&blank.join("z.png"), &GrayImage::filled(64, 64, 0.0)).unwrap();
    let failed = cli(&["preprocess", "--input", p(&blank), "--output", p(&dir.path().join("o2"))]);
    assert_eq!(failed.status.code(), Some(2));
}

fn synth(dir: &Path, count: &str) {
    let out = cli(&["synth", "--output", p(dir), "--count", count, "--input-size", "32", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

fn train_args<'a>(data: &'a str, out: &'a str, epochs: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--input", data, "--output", out, "--epochs", epochs, "--input-size", "32", "--base-width", "2",
        "--batch", "2", "--lr", "1e-3", "--seed", "5", "--split", "4,1,1",
    ]
}

#[test]
fn train_writes_log_checkpoint_and_split_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "6");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = cli(&train_args(p(&data), p(out), "2"));
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let log = fs::read_to_string(a.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "{log}");
    assert!(log.starts_with("epoch,train_loss"));
    assert_eq!(log, fs::read_to_string(b.join("train_log.csv")).unwrap());
    assert_eq!(fs::read(a.join("best.ckpt")).unwrap(), fs::read(b.join("best.ckpt")).unwrap());
    let split: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("split.json")).unwrap()).unwrap();
    assert_eq!(split["train"].as_array().unwrap().len(), 4);
    assert_eq!(split["test"].as_array().unwrap().len(), 1);
    assert!(a.join("run_config.json").is_file() && a.join("summary.json").is_file());

    let short = cli(&["train", "--input", p(&data), "--output", p(&dir.path().join("c")), "--split", "9,1,1"]);
    assert_eq!(short.status.code(), Some(1));
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "6");
    let out = dir.path().join("run");
    assert_eq!(cli(&train_args(p(&data), p(&out), "0")).status.code(), Some(0));
    let init = Model::new(ModelSpec::scaled(VariantKind::Edgeattnet, 2, 32), 5).unwrap();
    assert_eq!(fs::read(out.join("best.ckpt")).unwrap(), checkpoint::encode(&init).unwrap());
}

#[test]
fn train_ignores_test_images() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "6");
    // Corrupt every image; training must still succeed if it only opens the
    // train and validation files, so restore those after computing the split.
    let first = dir.path().join("probe");
    assert_eq!(cli(&train_args(p(&data), p(&first), "0")).status.code(), Some(0));
    let split: serde_json::Value = serde_json::from_str(&fs::read_to_string(first.join("split.json")).unwrap()).unwrap();
    let test_id = split["test"][0].as_str().unwrap().to_string();
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(data.join("index.json")).unwrap()).unwrap();
    let entry = index["samples"].as_array().unwrap().iter().find(|e| e["id"] == test_id.as_str()).unwrap();
    fs::write(data.join(entry["image"].as_str().unwrap()), b"not an image").unwrap();
    let res = cli(&train_args(p(&data), p(&dir.path().join("run")), "1"));
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn predict_writes_binary_masks_and_rejects_size_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "6");
    let run = dir.path().join("run");
    assert_eq!(cli(&train_args(p(&data), p(&run), "1")).status.code(), Some(0));
    let ckpt = run.join("best.ckpt");
    let images = data.join("images");
    let (o1, o2) = (dir.path().join("p1"), dir.path().join("p2"));
    for o in [&o1, &o2] {
        let res = cli(&["predict", "--checkpoint", p(&ckpt), "--input", p(&images), "--output", p(o), "--overlay"]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let masks: Vec<_> = fs::read_dir(o1.join("masks")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(masks.len(), 6);
    for m in &masks {
        let img = read_gray(m).unwrap();
        assert!(img.pixels.iter().all(|&v| v == 0.0 || v == 1.0));
        let name = m.file_name().unwrap();
        assert_eq!(fs::read(m).unwrap(), fs::read(o2.join("masks").join(name)).unwrap());
        assert!(o1.join("overlays").join(name).is_file());
    }
    let big = dir.path().join("big");
    fs::create_dir_all(&big).unwrap();
    write_gray_png(&big.join("x.png"), &GrayImage::filled(64, 64, 0.5)).unwrap();
    let res = cli(&["predict", "--checkpoint", p(&ckpt), "--input", p(&big), "--output", p(&dir.path().join("p3"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn constant_network_predicts_a_constant_mask() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::scaled(VariantKind::Unet, 2, 32);
    let mut model = Model::new(spec, 0).unwrap();
    for name in ["head.weight", "head.bias"] {
        let param = model.param_mut(name).unwrap();
        let n = param.numel();
        let v = if name == "head.bias" { 0.3 } else { 0.0 };
        param.set_data(vec![v; n]).unwrap();
    }
    let ckpt = dir.path().join("m.ckpt");
    checkpoint::save(&model, &ckpt).unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(&input).unwrap();
    write_gray_png(&input.join("q.png"), &GrayImage::from_fn(32, 32, |x, y| ((x * y) % 7) as f64 / 7.0)).unwrap();
    let out = dir.path().join("out");
    assert_eq!(cli(&["predict", "--checkpoint", p(&ckpt), "--input", p(&input), "--output", p(&out)]).status.code(), Some(0));
    assert!(read_gray(&out.join("masks").join("q.png")).unwrap().pixels.iter().all(|&v| v == 1.0));
}

fn block(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> InstanceMask {
    InstanceMask::from_fn(w, h, |x, y| (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y))
}

#[test]
fn evaluate_scores_perfect_predictions_as_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let samples: Vec<Sample> = (0..3)
        .map(|i| {
            let inst = vec![block(32, 32, 2 + i, 3, 6), block(32, 32, 18, 20 - i, 5)];
            Sample::new(format!("s{i}"), GrayImage::filled(32, 32, 0.5), inst).unwrap()
        })
        .collect();
    let index = save_dataset(&data, &samples).unwrap();
    let preds = dir.path().join("preds");
    fs::create_dir_all(&preds).unwrap();
    for (s, e) in samples.iter().zip(&index.samples) {
        let name = e.image.file_name().unwrap();
        write_mask_png(&preds.join(name), &s.gt_union).unwrap();
    }
    let out = dir.path().join("eval");
    let res = cli(&["evaluate", "--input", p(&preds), "--annotations", p(&data), "--output", p(&out), "--scales", "1,0.5"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report = EvalReport::from_json(&fs::read_to_string(out.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report.miou_pairwise, 1.0);
    assert_eq!(report.miou_multiscale, 1.0);
    assert_eq!(report.scales.deltas(), &[1.0, 0.5]);
    assert_eq!(report.config_hash.as_ref().map(String::len), Some(64));
    let csv = fs::read_to_string(out.join("pairs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);

    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    for e in &index.samples {
        write_mask_png(&empty.join(e.image.file_name().unwrap()), &InstanceMask::empty(32, 32)).unwrap();
    }
    let res = cli(&["evaluate", "--input", p(&empty), "--annotations", p(&data), "--output", p(&dir.path().join("e2"))]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no evaluable pairs"));
}

#[test]
fn evaluate_accepts_coco_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let doc = r#"{"images": [{"id": 1, "file_name": "obs1.pgm", "width": 16, "height": 16},
                             {"id": 2, "file_name": "obs2.pgm", "width": 16, "height": 16}],
                  "annotations": [{"image_id": 1, "segmentation": [[2,2, 8,2, 8,8, 2,8]]}]}"#;
    let ann = dir.path().join("ann.json");
    fs::write(&ann, doc).unwrap();
    let preds = dir.path().join("preds");
    fs::create_dir_all(&preds).unwrap();
    write_mask_png(&preds.join("obs1.png"), &block(16, 16, 2, 2, 6)).unwrap();
    write_mask_png(&preds.join("stray.png"), &block(16, 16, 0, 0, 4)).unwrap();
    let out = dir.path().join("eval");
    let res = cli(&["evaluate", "--input", p(&preds), "--annotations", p(&ann), "--output", p(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let unmatched: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("unmatched.json")).unwrap()).unwrap();
    assert_eq!(unmatched["unknown_predictions"][0], "stray");
}

#[test]
fn thread_cap_must_be_positive() {
    let out = Command::new(env!("CARGO_BIN_EXE_edgeattnet"))
        .args(["params"])
        .env("EDGEATTNET_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let ok = Command::new(env!("CARGO_BIN_EXE_edgeattnet"))
        .args(["params", "--variant", "unet"])
        .env("EDGEATTNET_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn config_file_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "6");
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"base_width": 2, "input_size": 32, "split": [4, 1, 1], "train": {"epochs": 5, "batch_size": 2}}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let res = cli(&["train", "--config", p(&cfg), "--input", p(&data), "--output", p(&out), "--epochs", "1"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(written["train"]["epochs"], 1);
    assert_eq!(written["train"]["batch_size"], 2);
    assert_eq!(written["base_width"], 2);
}
