use std::path::Path;
use std::process::{Command, Output};

use featseg_cli::io::read_label_map;

fn featseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featseg")).args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_crystal(dir: &Path, size: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let prefix = dir.join("scene");
    let out = featseg(&["synth", "crystal", "--output", p(&prefix), "--size", size, "--rotation", "30"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    (dir.join("scene_image.png"), dir.join("scene_truth.png"))
}

#[test]
fn missing_segment_count_is_a_usage_error() {
    let out = featseg(&["segment", "--input", "x.png", "--output", "y"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("`k`") && err.contains("estimate-omega"), "{err}");
}

#[test]
fn malformed_flags_exit_with_usage_status() {
    assert_eq!(featseg(&["segment", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(featseg(&["synth", "crystal"]).status.code(), Some(2));
}

#[test]
fn invalid_k_names_the_field() {
    let out = featseg(&["segment", "--input", "x.png", "--output", "y", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("`k`"));
}

#[test]
fn unreadable_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    let out = featseg(&["segment", "--input", p(&missing), "--output", "y", "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("missing.png"));
}

#[test]
fn window_larger_than_image_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (image, _) = synth_crystal(dir.path(), "24");
    let out = featseg(&[
        "segment", "--input", p(&image), "--output", p(&dir.path().join("o")), "--features", "fft-mod", "--k", "2",
        "--s", "15",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("`s`"), "{}", text(&out.stderr));
}

#[test]
fn synth_crystal_writes_image_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("c");
    let out = featseg(&[
        "synth", "crystal", "--output", p(&prefix), "--size", "64", "--grains", "2", "--rotation", "30", "--noise",
        "1.0", "--seed", "7",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let truth = read_label_map(&dir.path().join("c_truth.png")).unwrap();
    assert_eq!((truth.width(), truth.height(), truth.k()), (64, 64, 2));
    let img = image::open(dir.path().join("c_image.png")).unwrap();
    assert_eq!(img.color(), image::ColorType::L16);
}

#[test]
fn synth_rejects_rotation_for_voronoi_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let out = featseg(&["synth", "crystal", "--output", p(&dir.path().join("c")), "--grains", "4", "--rotation", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_identical_masks() {
    let dir = tempfile::tempdir().unwrap();
    let (_, truth) = synth_crystal(dir.path(), "32");
    let csv = dir.path().join("scores.csv");
    let out = featseg(&["eval", "--pred", p(&truth), "--truth", p(&truth), "--csv", p(&csv)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("pixel_accuracy") && l.ends_with("1.000000")), "{stdout}");
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert!(rows.starts_with("metric,value\n"));
    assert!(rows.contains("pixel_accuracy,1.000000"));
    assert!(rows.contains("max_boundary_distance,0.000"));
}

#[test]
fn segment_writes_artifacts_and_manifest_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let (image, truth) = synth_crystal(dir.path(), "96");
    let first = dir.path().join("first");
    let out = featseg(&[
        "segment", "--input", p(&image), "--output", p(&first), "--features", "fft-mod", "--k", "2", "--s", "15",
        "--lambda", "25", "--delta", "1.0", "--seed", "3",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    for suffix in ["_labels.png", "_overlay.png", "_manifest.txt"] {
        assert!(dir.path().join(format!("first{suffix}")).is_file(), "{suffix}");
    }
    let manifest = dir.path().join("first_manifest.txt");
    let listing = std::fs::read_to_string(&manifest).unwrap();
    assert!(listing.contains("seed = 3") && listing.contains("features = fft-mod"), "{listing}");

    // the flag overrides the output prefix recorded in the manifest
    let second = dir.path().join("second");
    let out = featseg(&["segment", "--config", p(&manifest), "--output", p(&second)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let a = std::fs::read(dir.path().join("first_labels.png")).unwrap();
    let b = std::fs::read(dir.path().join("second_labels.png")).unwrap();
    assert_eq!(a, b);

    let out = featseg(&["eval", "--pred", p(&dir.path().join("first_labels.png")), "--truth", p(&truth)]);
    let acc: f64 = text(&out.stdout)
        .lines()
        .find_map(|l| l.strip_prefix("pixel_accuracy"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(acc > 0.9, "{acc}");
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# settings\nk = 1\nfeatures = fft-mod\n").unwrap();
    let out = featseg(&["segment", "--config", p(&cfg), "--input", "x.png", "--output", "y"]);
    assert_eq!(out.status.code(), Some(2), "k = 1 from the file is invalid");
    let out = featseg(&["segment", "--config", p(&cfg), "--input", "x.png", "--output", "y", "--k", "2"]);
    // k is now valid, so the run proceeds to reading the (missing) input
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stderr));
}

#[test]
fn reproduce_exit_status_follows_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.txt");
    let out = featseg(&["reproduce", "--suite", "operators", "--summary", p(&summary), "--workdir", p(dir.path())]);
    let stdout = text(&out.stdout);
    let lines: Vec<&str> =
        stdout.lines().filter(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")).collect();
    assert_eq!(lines.len(), 4, "{stdout}");
    let failed = lines.iter().any(|l| l.starts_with("FAIL"));
    assert_eq!(out.status.code(), Some(if failed { 1 } else { 0 }));
    assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 5);
}
