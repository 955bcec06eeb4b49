use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use overparam::harness::add_noise;
use overparam::imaging::{encode_p5, parse_pgm, piecewise_planar_image, Image};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_overparam"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn write_csv(dir: &Path, name: &str, v: &[f64]) -> PathBuf {
    let path = dir.join(name);
    let text: String = v.iter().map(|x| format!("{x:?}\n")).collect();
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_values(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.parse().unwrap())
        .collect()
}

/// Least-squares SSE of a degree-`n` polynomial on `g[a..b]`, in centred coordinates.
fn segment_sse(g: &[f64], a: usize, b: usize, n: usize) -> f64 {
    let len = b - a;
    let c = (a + b - 1) as f64 / 2.0;
    let x = DMatrix::from_fn(len, n + 1, |i, j| ((a + i) as f64 - c).powi(j as i32));
    let y = DVector::from_column_slice(&g[a..b]);
    let coef = x.clone().svd(true, true).solve(&y, 1e-12).unwrap();
    (&x * coef - y).norm_squared()
}

#[test]
fn project_two_level_and_global_fit() {
    let dir = TempDir::new().unwrap();
    write_csv(dir.path(), "two.csv", &[1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0]);
    let out = run(dir.path(), &["project", "two.csv", "--k", "1", "--n", "0", "--out", "p"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&dir.path().join("p/report.json"));
    assert_eq!(rep["breakpoints"], serde_json::json!([4]));
    assert!(rep["sse"].as_f64().unwrap() < 1e-20);
    assert!(dir.path().join("p/manifest.json").exists());

    write_csv(dir.path(), "line.csv", &[0.0, 1.0, 2.5, 3.0, 4.2]);
    let out = run(dir.path(), &["project", "line.csv", "--k", "0", "--n", "1", "--out", "q"]);
    assert!(out.status.success());
    let rep = read_json(&dir.path().join("q/report.json"));
    assert_eq!(rep["segments"].as_array().unwrap().len(), 1);
}

#[test]
fn project_matches_enumeration() {
    let dir = TempDir::new().unwrap();
    let g: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 * 0.9).sin() + 0.1 * i as f64).collect();
    write_csv(dir.path(), "g.csv", &g);
    let out = run(dir.path(), &["project", "g.csv", "--k", "2", "--n", "1", "--out", "p"]);
    assert!(out.status.success());
    let sse = read_json(&dir.path().join("p/report.json"))["sse"].as_f64().unwrap();
    let mut best = segment_sse(&g, 0, 12, 1);
    for t1 in 1..12 {
        best = best.min(segment_sse(&g, 0, t1, 1) + segment_sse(&g, t1, 12, 1));
        for t2 in t1 + 1..12 {
            best = best.min(segment_sse(&g, 0, t1, 1) + segment_sse(&g, t1, t2, 1) + segment_sse(&g, t2, 12, 1));
        }
    }
    assert!((sse - best).abs() <= 1e-9 * best.max(1e-12), "{sse} vs {best}");
}

#[test]
fn malformed_csv_reports_line() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "# values\n1.0\n2.0\nthree\n").unwrap();
    let out = run(dir.path(), &["project", "bad.csv", "--k", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

fn piecewise_linear(d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| match i {
            0..=29 => 0.02 * i as f64,
            30..=69 => 1.5 - 0.03 * i as f64,
            _ => -0.5 + 0.01 * i as f64,
        })
        .collect()
}

#[test]
fn denoise1d_clean_input_is_kept() {
    let dir = TempDir::new().unwrap();
    let f = piecewise_linear(100);
    write_csv(dir.path(), "f.csv", &f);
    let out = run(dir.path(), &["denoise1d", "f.csv", "--method", "bgapn", "--sigma", "0", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = read_values(&dir.path().join("o/recovered.csv"));
    for (a, b) in rec.iter().zip(&f) {
        assert!((a - b).abs() < 1e-6);
    }
    let coeffs = std::fs::read_to_string(dir.path().join("o/coefficients.csv")).unwrap();
    assert!(coeffs.starts_with("# b0,b1"));
}

#[test]
fn denoise1d_requires_method_flags() {
    let dir = TempDir::new().unwrap();
    write_csv(dir.path(), "f.csv", &piecewise_linear(40));
    let out = run(dir.path(), &["denoise1d", "f.csv", "--method", "sscosamp"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--k"));
    let out = run(dir.path(), &["denoise1d", "f.csv", "--method", "bgapn"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--sigma"));
}

#[test]
fn denoise1d_with_reference_lowers_mse() {
    let dir = TempDir::new().unwrap();
    let f = piecewise_linear(100);
    let g = add_noise(&f, 0.1, 5).unwrap();
    write_csv(dir.path(), "f.csv", &f);
    write_csv(dir.path(), "g.csv", &g);
    for method in ["bgapn", "bgapn-cont"] {
        let out = run(
            dir.path(),
            &["denoise1d", "g.csv", "--method", method, "--sigma", "0.1", "--reference", "f.csv", "--json", "--out", "o"],
        );
        assert!(out.status.success());
        let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(rep["metrics"]["mse"].as_f64().unwrap() < rep["input_metrics"]["mse"].as_f64().unwrap());
    }
    let out = run(dir.path(), &["denoise1d", "g.csv", "--method", "sscosamp", "--k", "2", "--reference", "f.csv", "--json"]);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["metrics"]["mse"].as_f64().unwrap() < rep["input_metrics"]["mse"].as_f64().unwrap());
}

fn write_pgm(dir: &Path, name: &str, img: &Image) {
    std::fs::write(dir.join(name), encode_p5(img)).unwrap();
}

#[test]
fn gradmap_of_constant_image_is_zero() {
    let dir = TempDir::new().unwrap();
    write_pgm(dir.path(), "c.pgm", &Image::from_fn(9, 7, |_, _| 77.0));
    let out = run(dir.path(), &["image", "gradmap", "c.pgm", "--out", "g"]);
    assert!(out.status.success());
    let g = parse_pgm(&std::fs::read(dir.path().join("g/gradmap.pgm")).unwrap()).unwrap();
    assert_eq!((g.h, g.w), (9, 7));
    assert!(g.pixels.iter().all(|&v| v == 0.0));
}

#[test]
fn bad_pgm_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("x.pgm"), "P7\n2 2\n255\n").unwrap();
    let out = run(dir.path(), &["image", "gradmap", "x.pgm"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn segment_two_regions() {
    let dir = TempDir::new().unwrap();
    let syn = piecewise_planar_image(48, 48, 2, 3).unwrap();
    write_pgm(dir.path(), "s.pgm", &syn.image);
    let out = run(dir.path(), &["image", "segment", "s.pgm", "--sigma", "1", "--json", "--out", "seg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["regions"], 2);
    let labels = std::fs::read_to_string(dir.path().join("seg/labels.pgm")).unwrap();
    assert!(labels.starts_with("P2\n48 48\n2\n"));
    for f in ["piecewise.pgm", "boundary.pgm"] {
        assert!(dir.path().join("seg").join(f).exists());
    }
}

#[test]
fn image_denoise_gains_psnr() {
    let dir = TempDir::new().unwrap();
    let syn = piecewise_planar_image(64, 64, 3, 1).unwrap();
    let clean = Image::new(64, 64, syn.image.pixels.iter().map(|v| v.round()).collect()).unwrap();
    let noisy = Image::new(64, 64, add_noise(&clean.pixels, 20.0, 2).unwrap()).unwrap().clamped();
    write_pgm(dir.path(), "clean.pgm", &clean);
    write_pgm(dir.path(), "noisy.pgm", &noisy);
    let out = run(
        dir.path(),
        &["image", "denoise", "noisy.pgm", "--sigma", "20", "--reference", "clean.pgm", "--json", "--out", "d"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["psnr"].as_f64().unwrap() >= rep["input_psnr"].as_f64().unwrap() + 6.0, "{rep}");
}

#[test]
fn experiment_outputs_have_expected_shape() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["experiment", "cs", "--ratios", "1.0", "--trials", "5", "--out", "cs"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = read_json(&dir.path().join("cs/result.json"));
    assert_eq!(res["trials"].as_array().unwrap().len(), 5 * 2);
    for a in res["aggregates"].as_array().unwrap() {
        let r = a["rate"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&r));
        assert_eq!(a["trials"], 5);
    }
    let svg = std::fs::read_to_string(dir.path().join("cs/plot.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let out = run(
        dir.path(),
        &["experiment", "sweep", "--d", "60", "--k", "2", "--sigmas", "0.1,0.2,0.3", "--trials", "2", "--out", "sw"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(dir.path().join("sw/aggregates.csv")).unwrap();
    assert_eq!(rows.lines().filter(|l| !l.starts_with('#')).count(), 3 * 4);

    let out = run(dir.path(), &["experiment", "rip", "--identity", "--trials", "20", "--out", "rip"]);
    assert!(out.status.success());
    let med = std::fs::read_to_string(dir.path().join("rip/medians.csv")).unwrap();
    let row = med.lines().find(|l| !l.starts_with('#')).unwrap();
    let delta: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(delta < 1e-12);
}

#[test]
fn empty_grid_and_unknown_method_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["experiment", "sweep", "--sigmas", ""]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["experiment", "cs", "--methods", "tv", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_reproduces_files() {
    let dir = TempDir::new().unwrap();
    let f = piecewise_linear(80);
    write_csv(dir.path(), "g.csv", &add_noise(&f, 0.05, 1).unwrap());
    let out = run(dir.path(), &["denoise1d", "g.csv", "--method", "bgapn-cont", "--sigma", "0.05", "--out", "a"]);
    assert!(out.status.success());
    let out = run(dir.path(), &["replay", "a/manifest.json", "--out", "b"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["recovered.csv", "coefficients.csv", "report.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(name)).unwrap(),
            std::fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    let manifest = read_json(&dir.path().join("a/manifest.json"));
    assert_eq!(manifest["command"]["command"], "denoise1d");
    assert!(manifest["prng"].as_str().unwrap().contains("chacha8"));
}
