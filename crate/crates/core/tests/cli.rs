mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use partaog::aog::Aog;
use partaog::feature_store::{load_annotations, PartAnnotation};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partaog")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the demo spec and synthesizes it into `dir/data`.
fn synth(dir: &Path, noise: f32) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, serde_json::to_string(&common::demo_spec(11, 30, noise, "img")).unwrap()).unwrap();
    let out = dir.join("data");
    let o = run(&["synth", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn learn(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let f = data.join("features");
    let a = data.join("annotations.json");
    let mut args = vec!["learn", "--features", s(&f), "--annotations", s(&a), "--out", s(out)];
    args.extend_from_slice(extra);
    run(&args)
}

fn digests(manifest: &Path) -> Value {
    let m: Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    m["outputs"].clone()
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = synth(a.path(), 0.25);
    let db = synth(b.path(), 0.25);
    assert_eq!(fs::read_dir(da.join("features")).unwrap().count(), 30);
    let strip = |v: Value| -> Vec<String> {
        v.as_array()
            .unwrap()
            .iter()
            .map(|o| {
                let p = o["path"].as_str().unwrap();
                let name = Path::new(p).file_name().unwrap().to_string_lossy().into_owned();
                format!("{name}:{}", o["sha256"].as_str().unwrap())
            })
            .collect()
    };
    assert_eq!(strip(digests(&da.join("manifest.json"))), strip(digests(&db.join("manifest.json"))));
}

#[test]
fn synth_rejects_bad_json() {
    let d = tempfile::tempdir().unwrap();
    let spec = d.path().join("spec.json");
    fs::write(&spec, "{ not json").unwrap();
    assert_eq!(code(&run(&["synth", "--spec", s(&spec), "--out", s(&d.path().join("o"))])), 2);
}

#[test]
fn learn_parse_eval_heatmap() {
    let d = tempfile::tempdir().unwrap();
    let data = synth(d.path(), 0.0);
    let aog3 = d.path().join("aog3.json");
    let o = learn(&data, &aog3, &["--shots", "3", "--nk", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("aog3.manifest.json").exists());
    let aog = Aog::from_json(&fs::read_to_string(&aog3).unwrap()).unwrap();
    assert_eq!(aog.templates.len(), 3);
    assert_eq!(aog.provenance.annotation_count, 3);

    // rerun gives a byte-identical graph
    let again = d.path().join("again.json");
    assert_eq!(code(&learn(&data, &again, &["--shots", "3", "--nk", "2"])), 0);
    assert_eq!(fs::read(&aog3).unwrap(), fs::read(&again).unwrap());

    let aog12 = d.path().join("aog12.json");
    let cfg = d.path().join("learn.json");
    fs::write(&cfg, r#"{"nk": 2, "epsilon": 2, "seed": 3, "weights": {"lambda_close": 0.4}}"#).unwrap();
    let o = learn(&data, &aog12, &["--shots", "12", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(Aog::from_json(&fs::read_to_string(&aog12).unwrap()).unwrap().provenance.annotation_count, 12);

    let one = fs::read_dir(data.join("features")).unwrap().next().unwrap().unwrap().path();
    let parsed = d.path().join("parse.json");
    assert_eq!(code(&run(&["parse", "--aog", s(&aog3), "--features", s(&one), "--out", s(&parsed)])), 0);
    let p: Value = serde_json::from_str(&fs::read_to_string(&parsed).unwrap()).unwrap();
    let c = p["center"].as_array().unwrap();
    assert!(c.len() == 2 && c.iter().all(Value::is_number));

    let report = d.path().join("eval.json");
    let ann = data.join("annotations.json");
    let feats = data.join("features");
    let o = run(&["eval", "--aog", s(&aog3), "--features", s(&feats), "--annotations", s(&ann), "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["images"], 30);
    assert_eq!(r["center_prediction_rate"], 1.0);
    assert_eq!(r["detection_rate"], 1.0);
    assert!(r["mean_normalized_distance"].as_f64().unwrap() < 0.05);
    assert_eq!(r["distance_normalizer"], "image_diagonal");

    let pgm = d.path().join("map.pgm");
    assert_eq!(code(&run(&["heatmap", "--aog", s(&aog3), "--features", s(&one), "--layer", "0", "--out", s(&pgm)])), 0);
    let bytes = fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(bytes.len(), b"P5\n16 16\n255\n".len() + 256);

    assert_eq!(code(&run(&["validate", s(&aog3)])), 0);
    assert_eq!(code(&run(&["validate", s(&feats)])), 0);
}

#[test]
fn eval_on_exact_boxes_scores_one() {
    // ground truth = the parser's own predicted boxes
    let d = tempfile::tempdir().unwrap();
    let data = synth(d.path(), 0.25);
    let aog = d.path().join("aog.json");
    assert_eq!(code(&learn(&data, &aog, &["--shots", "3", "--nk", "2"])), 0);
    let feats = data.join("features");
    let parsed = d.path().join("all.json");
    assert_eq!(code(&run(&["parse", "--aog", s(&aog), "--features", s(&feats), "--out", s(&parsed)])), 0);
    let reports: Vec<Value> = serde_json::from_str(&fs::read_to_string(&parsed).unwrap()).unwrap();
    let anns: Vec<PartAnnotation> = reports
        .iter()
        .map(|r| PartAnnotation {
            image_id: r["image"].as_str().unwrap().into(),
            part_name: "part".into(),
            template_id: r["template"].as_u64().unwrap() as usize,
            bbox: serde_json::from_value(r["bbox"].clone()).unwrap(),
        })
        .collect();
    let gt = d.path().join("gt.json");
    partaog::feature_store::save_annotations(&anns, &gt).unwrap();
    assert_eq!(load_annotations(&gt).unwrap().len(), 30);
    let report = d.path().join("eval.json");
    assert_eq!(code(&run(&["eval", "--aog", s(&aog), "--features", s(&feats), "--annotations", s(&gt), "--out", s(&report)])), 0);
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["detection_rate"], 1.0);
    assert_eq!(r["center_prediction_rate"], 1.0);
    assert_eq!(r["mean_normalized_distance"], 0.0);
}

#[test]
fn learn_error_codes() {
    let d = tempfile::tempdir().unwrap();
    let data = synth(d.path(), 0.25);
    let out = d.path().join("aog.json");

    let mut anns = load_annotations(data.join("annotations.json")).unwrap();
    anns.truncate(3);
    anns[1].image_id = "ghost".into();
    let missing = d.path().join("missing.json");
    partaog::feature_store::save_annotations(&anns, &missing).unwrap();
    let feats = data.join("features");
    let o = run(&["learn", "--features", s(&feats), "--annotations", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ghost"));

    let empty = d.path().join("empty.json");
    fs::write(&empty, "[]").unwrap();
    assert_eq!(code(&run(&["learn", "--features", s(&feats), "--annotations", s(&empty), "--out", s(&out)])), 2);

    let bad_cfg = d.path().join("cfg.json");
    fs::write(&bad_cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(code(&learn(&data, &out, &["--config", s(&bad_cfg)])), 2);
    assert_eq!(code(&run(&["learn", "--features", "/nonexistent", "--annotations", s(&empty), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["learn"])), 2);
    assert!(!out.exists());
}

#[test]
fn validate_flags_corruption() {
    let d = tempfile::tempdir().unwrap();
    let data = synth(d.path(), 0.25);
    let one = fs::read_dir(data.join("features")).unwrap().next().unwrap().unwrap().path();
    assert_eq!(code(&run(&["validate", s(&one)])), 0);

    let bytes = fs::read(&one).unwrap();
    let cut = d.path().join("cut.fvol");
    fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert_ne!(code(&run(&["validate", s(&cut)])), 0);

    let mut flipped = bytes.clone();
    flipped[0] ^= 0xff;
    let bad = d.path().join("bad.fvol");
    fs::write(&bad, &flipped).unwrap();
    assert_ne!(code(&run(&["validate", s(&bad)])), 0);

    assert_eq!(code(&run(&["validate", s(&d.path().join("nope.fvol"))])), 2);
}
