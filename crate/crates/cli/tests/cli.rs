use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use assert_cmd::Command;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn model(name: &str) -> PathBuf {
    repo().join("models").join(name)
}

fn bin() -> Command {
    let mut c = Command::cargo_bin("docsynth").unwrap();
    c.env_remove("DOCSYNTH_WORKERS");
    c
}

fn stderr_of(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn generate(out: &Path, workers: &str, extra: &[&str]) {
    let table = model("table.xml");
    let mut args = vec![
        "--workers",
        workers,
        "generate",
        "--model",
        table.to_str().unwrap(),
        "--count",
        "12",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
        "--width",
        "366",
        "--height",
        "256",
    ];
    args.extend_from_slice(extra);
    bin().args(&args).assert().success();
}

#[test]
fn validate_accepts_shipped_models() {
    for m in ["table.xml", "columns.xml"] {
        let out = bin().args(["validate", "--model"]).arg(model(m)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("OK"));
    }
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let out = bin().args(["generate", "--count", "3", "--out", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("--model"));
    bin().arg("--help").assert().code(0);
    bin().args(["generate", "--help"]).assert().code(0);
    bin().args(["--workers", "0", "validate", "--model", "m.xml"]).assert().code(1);
    bin().args(["augment", "--input", "a", "--manifest", "m", "--out", "o", "--regions", "3"])
        .assert()
        .code(1);
}

#[test]
fn invalid_model_exits_two_naming_the_attribute() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(model("table.xml"))
        .unwrap()
        .replace(r#"prob="0.9" font"#, r#"prob="1.5" font"#);
    let bad = dir.path().join("bad.xml");
    fs::write(&bad, text).unwrap();
    // Assets resolve relative to the model file.
    fs::create_dir_all(dir.path().join("words")).unwrap();
    let out = bin().args(["validate", "--model"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("@prob"), "{}", stderr_of(&out));

    let out = bin()
        .args(["generate", "--count", "1", "--out"])
        .arg(dir.path().join("o"))
        .arg("--model")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_model_exits_three() {
    bin().args(["validate", "--model", "/nonexistent/model.xml"]).assert().code(3);
}

#[test]
fn missing_assets_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.xml");
    fs::copy(model("table.xml"), &m).unwrap();
    let out = bin().args(["validate", "--model"]).arg(&m).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("not found"));
}

#[test]
fn generation_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    generate(&a, "1", &["--bw", "otsu", "--save-foreground"]);
    generate(&b, "3", &["--bw", "otsu", "--save-foreground"]);
    let (da, db) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(da.len(), 12 * 2 + 1);
    assert!(da == db, "outputs differ between worker counts");
    for (name, bytes) in &da {
        if name.ends_with(".png") && !name.ends_with(".fg.png") {
            let img = image_bytes_are_bilevel(bytes);
            assert!(img, "{name} is not black/white");
        }
    }
}

/// Cheap check through the library: decode and inspect values.
fn image_bytes_are_bilevel(bytes: &[u8]) -> bool {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.png");
    fs::write(&p, bytes).unwrap();
    let img = docsynth::raster::load_image(&p).unwrap();
    img.dimensions() == (366, 256) && img.pixels().iter().all(|&v| v == 0 || v == 255)
}

#[test]
fn augment_identity_copies_and_rotation_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    generate(&src, "2", &[]);
    let manifest = src.join("manifest.jsonl");

    let same = dir.path().join("same");
    bin()
        .args(["augment", "--input"])
        .arg(&src)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(&same)
        .assert()
        .success();
    for i in 0..12 {
        let name = format!("page_{i:06}.png");
        assert_eq!(fs::read(src.join(&name)).unwrap(), fs::read(same.join(&name)).unwrap());
    }
    assert_eq!(
        fs::read_to_string(&manifest).unwrap(),
        fs::read_to_string(same.join("manifest.jsonl")).unwrap()
    );

    let rot = dir.path().join("rot");
    bin()
        .args(["augment", "--rotate", "2.0", "--salt-pepper", "0.02", "--regions", "3"])
        .args(["--region-size", "10..40", "--scale", "0.05", "--seed", "9", "--input"])
        .arg(&src)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(&rot)
        .assert()
        .success();
    let before = docsynth::read_manifest(&manifest).unwrap();
    let after = docsynth::read_manifest(&rot.join("manifest.jsonl")).unwrap();
    assert_eq!(before.len(), after.len());
    for (b, a) in before.iter().zip(&after) {
        assert_eq!(b.record_count, a.record_count);
        let angle = a
            .applied_augmentations
            .iter()
            .find_map(|x| match x {
                docsynth::Augmentation::Rotate { angle, .. } => Some(*angle),
                _ => None,
            })
            .expect("rotation recorded");
        assert!((-2.0..=2.0).contains(&angle));
        assert_eq!(a.applied_augmentations.len(), 3);
    }
}

#[test]
fn augment_rejects_out_of_range_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    generate(&src, "1", &[]);
    bin()
        .args(["augment", "--rotate", "60", "--input"])
        .arg(&src)
        .arg("--manifest")
        .arg(src.join("manifest.jsonl"))
        .arg("--out")
        .arg(dir.path().join("o"))
        .assert()
        .code(2);
}

#[test]
fn evaluate_reports_and_joins_strictly() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    generate(&src, "1", &[]);
    let manifest = src.join("manifest.jsonl");
    let rows = docsynth::read_manifest(&manifest).unwrap();
    let mut csv = String::from("page_id,prediction\n");
    for r in &rows {
        csv.push_str(&format!("{},{}\n", r.page_id, r.record_count));
    }
    let pred = dir.path().join("pred.csv");
    fs::write(&pred, &csv).unwrap();

    let report = dir.path().join("report.json");
    let run = || {
        bin()
            .args(["evaluate", "--pred"])
            .arg(&pred)
            .arg("--truth")
            .arg(&manifest)
            .arg("--json")
            .arg(&report)
            .output()
            .unwrap()
    };
    let out = run();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy  100.00%"));
    let first = fs::read(&report).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(json["accuracy"], 100.0);
    assert_eq!(json["error"], 0.0);
    assert_eq!(json["n"], rows.len());
    assert_eq!(json["residuals"].as_array().unwrap().len(), rows.len());
    run();
    assert_eq!(fs::read(&report).unwrap(), first);

    fs::write(&pred, format!("{csv}page_999999,3\n")).unwrap();
    let out = run();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("page_999999"));

    fs::write(&pred, "page_id,prediction\npage_000000,three\n").unwrap();
    let out = run();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("line 2"), "{}", stderr_of(&out));
}

#[test]
fn extract_bg_skips_corrupt_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let scans = dir.path().join("scans");
    fs::create_dir_all(&scans).unwrap();
    for (i, name) in ["a.png", "b.png"].iter().enumerate() {
        let img = docsynth::Raster::gray_from_fn(60, 40, |x, y| {
            if (x + i as u32).is_multiple_of(9) && y > 5 {
                20
            } else {
                200
            }
        });
        docsynth::save_image(&img, scans.join(name)).unwrap();
    }
    fs::write(scans.join("c.png"), b"not a png").unwrap();
    let out_dir = dir.path().join("bg");
    let out = bin()
        .args(["extract-bg", "--input"])
        .arg(&scans)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("c.png"));
    let mut names: Vec<_> = dir_bytes(&out_dir).into_keys().collect();
    names.sort();
    assert_eq!(names, ["a.bg.png", "b.bg.png"]);

    bin()
        .args(["extract-bg", "--window", "1", "--input"])
        .arg(&scans)
        .arg("--output")
        .arg(&out_dir)
        .assert()
        .code(2);
}

#[test]
fn generate_uses_extracted_backgrounds_round_robin() {
    let dir = tempfile::tempdir().unwrap();
    let bgs = dir.path().join("bgs");
    fs::create_dir_all(&bgs).unwrap();
    for (name, v) in [("x.png", 190u8), ("y.png", 230)] {
        docsynth::save_image(&docsynth::Raster::filled_gray(80, 110, v), bgs.join(name)).unwrap();
    }
    let out = dir.path().join("o");
    generate(&out, "2", &["--backgrounds", bgs.to_str().unwrap()]);
    let rows = docsynth::read_manifest(&out.join("manifest.jsonl")).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.background.as_str()).collect();
    assert_eq!(&names[..4], ["x.png", "y.png", "x.png", "y.png"]);
}
