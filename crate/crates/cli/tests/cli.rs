use std::path::Path;
use std::process::{Command, Output};

use toonwarp_core::dataset::{load_png, save_png, to_rgb8};
use toonwarp_core::perceiver::load_checkpoint;
use toonwarp_core::{load_field, save_field, CoarseField, ImageBuffer};

fn toonwarp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toonwarp"))
        .args(args)
        .env("TOONWARP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = toonwarp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = toonwarp(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_column(path: &Path, column: usize) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(column).unwrap().parse().unwrap())
        .collect()
}

/// Synthesizes a small dataset and returns the path to its first sample.
fn synth(root: &Path, style: &str, count: &str) -> std::path::PathBuf {
    ok(&[
        "synth",
        s(root),
        "--count",
        count,
        "--style",
        style,
        "--seed",
        "3",
        "--size",
        "128",
    ]);
    root.join("synth-000")
}

#[test]
fn synth_writes_samples_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "smooth-random", "2");
    for id in ["synth-000", "synth-001"] {
        for f in ["input.png", "toon.png", "field.atf"] {
            assert!(dir.path().join(id).join(f).is_file());
        }
    }
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert_eq!(manifest, "synth-000,train\nsynth-001,train\n");
}

#[test]
fn fit_identical_images_gives_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let sample = synth(dir.path(), "smooth-random", "1");
    let input = sample.join("input.png");
    let out = dir.path().join("same.atf");
    ok(&["fit", s(&input), s(&input), s(&out), "--size", "128"]);
    assert!(load_field(&out).unwrap().max_abs() < 1e-3);
    assert!(dir.path().join("same.csv").is_file());
}

#[test]
fn fit_synthetic_pair_reaches_small_residual() {
    let dir = tempfile::tempdir().unwrap();
    let sample = synth(dir.path(), "smooth-random", "1");
    let out = dir.path().join("fit.atf");
    ok(&[
        "fit",
        s(&sample.join("input.png")),
        s(&sample.join("toon.png")),
        s(&out),
        "--size",
        "128",
    ]);
    let residuals = csv_column(&dir.path().join("fit.csv"), 1);
    assert!(*residuals.last().unwrap() < 0.01, "{:?}", residuals.last());
    assert!(residuals.len() <= 501);
}

#[test]
fn missing_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.png");
    let err = fails(&[
        "fit",
        s(&missing),
        s(&missing),
        s(&dir.path().join("x.atf")),
    ]);
    assert!(err.starts_with("error: io: "), "{err}");
    assert!(err.contains("nope.png"), "{err}");
}

#[test]
fn warp_alpha_zero_is_identity_and_alpha_one_matches_toon() {
    let dir = tempfile::tempdir().unwrap();
    let sample = synth(dir.path(), "smooth-random", "1");
    let input = sample.join("input.png");
    let field = sample.join("field.atf");
    let zero = dir.path().join("zero.png");
    ok(&[
        "warp",
        s(&input),
        s(&field),
        s(&zero),
        "--alpha",
        "0",
        "--size",
        "128",
    ]);
    assert_eq!(
        to_rgb8(&load_png(&zero).unwrap()),
        to_rgb8(&load_png(&input).unwrap())
    );

    let one = dir.path().join("one.png");
    ok(&[
        "warp",
        s(&input),
        s(&field),
        s(&one),
        "--alpha",
        "1",
        "--size",
        "128",
    ]);
    let toon = load_png(sample.join("toon.png")).unwrap();
    assert!(load_png(&one).unwrap().max_abs_diff(&toon).unwrap() <= 1.0 / 255.0 + 1e-12);
}

#[test]
fn alpha_sweep_writes_one_file_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let sample = synth(dir.path(), "smooth-random", "1");
    let input = sample.join("input.png");
    let out = dir.path().join("sweep.png");
    ok(&[
        "warp",
        s(&input),
        s(&sample.join("field.atf")),
        s(&out),
        "--alpha",
        "1,1.5,2",
        "--size",
        "128",
    ]);
    let original = load_png(&input).unwrap();
    let dists: Vec<f64> = ["1", "1.5", "2"]
        .iter()
        .map(|a| {
            let img = load_png(dir.path().join(format!("sweep_alpha{a}.png"))).unwrap();
            img.mean_abs_diff(&original).unwrap()
        })
        .collect();
    assert!(dists[0] < dists[1] && dists[1] < dists[2], "{dists:?}");
    assert!(!out.exists());
}

#[test]
fn transfer_matches_warp_and_zero_field_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let sample = synth(dir.path(), "bulge", "1");
    let input = sample.join("input.png");
    let field = sample.join("field.atf");
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    ok(&["warp", s(&input), s(&field), s(&a), "--size", "128"]);
    ok(&["transfer", s(&input), s(&field), s(&b), "--size", "128"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let zero = dir.path().join("zero.atf");
    save_field(&CoarseField::zeros(32, 32).unwrap(), &zero).unwrap();
    let c = dir.path().join("c.png");
    ok(&["transfer", s(&input), s(&zero), s(&c), "--size", "128"]);
    assert_eq!(
        to_rgb8(&load_png(&c).unwrap()),
        to_rgb8(&load_png(&input).unwrap())
    );
}

#[test]
fn transfer_onto_recolored_input_keeps_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let sample = synth(dir.path(), "smooth-random", "1");
    let input = load_png(sample.join("input.png")).unwrap();
    // channel swap plus inversion: a recoloring with no geometric change
    let recolored = ImageBuffer::from_fn(128, 128, |i, j| {
        let p = input.pixel(i, j);
        [1.0 - p[2], p[0], p[1]]
    })
    .unwrap();
    let styled = dir.path().join("styled.png");
    save_png(&recolored, &styled).unwrap();
    let field = sample.join("field.atf");
    let (orig_out, styled_out) = (dir.path().join("o.png"), dir.path().join("s.png"));
    ok(&[
        "warp",
        s(&sample.join("input.png")),
        s(&field),
        s(&orig_out),
        "--size",
        "128",
    ]);
    ok(&[
        "transfer",
        s(&styled),
        s(&field),
        s(&styled_out),
        "--size",
        "128",
    ]);
    let (o, t) = (load_png(&orig_out).unwrap(), load_png(&styled_out).unwrap());
    let edges = |img: &ImageBuffer, f: &dyn Fn([f64; 3]) -> f64| -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..128 {
            for j in 0..127 {
                out.push((f(img.pixel(i, j + 1)) - f(img.pixel(i, j))).abs());
            }
        }
        out
    };
    let e1 = edges(&o, &|p| p[1]);
    let e2 = edges(&t, &|p| p[2]);
    let diff: f64 = e1.iter().zip(&e2).map(|(a, b)| (a - b).abs()).sum::<f64>() / e1.len() as f64;
    assert!(diff < 2.0 / 255.0, "edge maps differ by {diff}");
}

#[test]
fn bad_inputs_exit_with_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sample = synth(dir.path(), "bulge", "1");
    let input = sample.join("input.png");
    let bogus = dir.path().join("bogus.atf");
    std::fs::write(&bogus, b"ATF9\x00\x00").unwrap();
    let err = fails(&["warp", s(&input), s(&bogus), s(&dir.path().join("o.png"))]);
    assert!(err.starts_with("error: format: "), "{err}");
    let err = fails(&[
        "warp",
        s(&input),
        s(&sample.join("field.atf")),
        s(&dir.path().join("o.png")),
        "--alpha",
        "1,x",
    ]);
    assert!(err.starts_with("error: invalid-argument: "), "{err}");
    let err = fails(&["synth", s(&dir.path().join("d")), "--style", "swirl"]);
    assert!(err.starts_with("error: invalid-argument: "), "{err}");
    let err = fails(&["warp"]);
    assert!(err.starts_with("error: invalid-argument: "), "{err}");
}

#[test]
fn viz_of_zero_field_is_white() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.atf");
    save_field(&CoarseField::zeros(32, 32).unwrap(), &zero).unwrap();
    let out = dir.path().join("viz.png");
    ok(&["viz", s(&zero), s(&out), "--size", "64"]);
    let img = load_png(&out).unwrap();
    assert_eq!(img.dims(), (64, 64));
    assert!(img.data().iter().all(|&v| v == 1.0));
}

#[test]
fn eval_untrained_model_reports_identity_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "bulge", "2");
    let out = dir.path().join("eval");
    ok(&["eval", s(&data), s(&out), "--size", "128"]);
    let recon = csv_column(&out.join("losses.csv"), 1);
    for (k, r) in recon.iter().enumerate() {
        let id = format!("synth-{k:03}");
        let a = load_png(data.join(&id).join("input.png")).unwrap();
        let b = load_png(data.join(&id).join("toon.png")).unwrap();
        assert!((r - a.mean_abs_diff(&b).unwrap()).abs() < 1e-12);
        let panel = load_png(out.join(format!("{id}.png"))).unwrap();
        assert_eq!(panel.dims(), (128, 384));
    }
}

#[test]
fn train_overfits_four_samples_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "synth",
        s(&data),
        "--count",
        "4",
        "--style",
        "bulge",
        "--seed",
        "7",
    ]);
    let run = |name: &str| {
        let ckpt = dir.path().join(name);
        ok(&[
            "train",
            s(&data),
            s(&ckpt),
            "--epochs",
            "200",
            "--seed",
            "7",
            "--lr",
            "1e-2",
            "--no-jitter",
        ]);
        ckpt
    };
    let a = run("a.ckpt");
    let totals = csv_column(&a.with_extension("csv"), 4);
    assert_eq!(totals.len(), 200);
    assert!(
        totals[199] <= 0.1 * totals[0],
        "{} vs {}",
        totals[199],
        totals[0]
    );
    load_checkpoint(&a).unwrap();
    let b = run("b.ckpt");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(a.with_extension("csv")).unwrap(),
        std::fs::read(b.with_extension("csv")).unwrap()
    );
}
