use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn uagan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uagan")).args(args).env("UAFG_LOG", "error").output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_writes_five_csvs_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = configs().join("toy_spec.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = uagan(&["gen-data", "--spec", s(&spec), "--out", s(dir), "--seed", "7"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut csvs: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert_eq!(csvs, ["full.csv", "site_0.csv", "site_1.csv", "site_2.csv", "site_3.csv"]);
    for name in csvs.iter().map(String::as_str).chain(["manifest.toml"]) {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs between runs");
    }
    assert!(fs::read_to_string(a.join("full.csv")).unwrap().starts_with("x0,x1,label\n"));
}

#[test]
fn missing_spec_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = uagan(&["gen-data", "--spec", s(&tmp.path().join("nope.toml")), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn invalid_spec_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.toml");
    fs::write(&spec, "sites = 4\n[mixture]\ncenters = []\nvariance = 0.5\nsamples_per_mode = 3\n[partition]\nmode = \"iid\"\n").unwrap();
    let out = uagan(&["gen-data", "--spec", s(&spec), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

fn count(svg: &str, class: &str) -> usize {
    svg.matches(&format!("class=\"{class}\"")).count()
}

#[test]
fn plot_emits_one_marker_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = tmp.path().join("samples.csv");
    fs::write(&samples, "x0,x1\n0.0,1.0\n2.0,-1.0\n3.5,0.25\n").unwrap();
    let svg = tmp.path().join("plot.svg");
    let out = uagan(&["plot", "--samples", s(&samples), "--out", s(&svg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(&svg).unwrap();
    assert_eq!(svg.matches("<circle").count(), 3);
    assert_eq!(count(&svg, "generated"), 3);
}

#[test]
fn plot_separates_real_generated_and_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = tmp.path().join(name);
        fs::write(&p, body).unwrap();
        p
    };
    let samples = write("g.csv", "x0,x1\n1,1\n");
    let data = write("d.csv", "x0,x1,label\n10,10,0\n-10,-10,3\n");
    let noise = write("z.csv", "x0,x1\n0.1,0.2\n0.3,0.4\n0.5,0.6\n");
    let svg = tmp.path().join("p.svg");
    let out = uagan(&["plot", "--samples", s(&samples), "--data", s(&data), "--noise", s(&noise), "--out", s(&svg)]);
    assert!(out.status.success());
    let svg = fs::read_to_string(&svg).unwrap();
    assert_eq!((count(&svg, "real"), count(&svg, "generated"), count(&svg, "noise")), (2, 1, 3));
}

#[test]
fn plot_of_empty_samples_has_axes_only() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = tmp.path().join("empty.csv");
    fs::write(&samples, "x0,x1\n").unwrap();
    let svg = tmp.path().join("p.svg");
    assert!(uagan(&["plot", "--samples", s(&samples), "--out", s(&svg)]).status.success());
    let svg = fs::read_to_string(&svg).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches("<circle").count(), 0);
    assert_eq!(count(&svg, "axis"), 2);
}

#[test]
fn plot_rejects_malformed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = tmp.path().join("bad.csv");
    fs::write(&samples, "x0,x1\n1.0,abc\n").unwrap();
    let out = uagan(&["plot", "--samples", s(&samples), "--out", s(&tmp.path().join("p.svg"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_theory_correctness_passes_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("report.csv");
    let out = uagan(&["verify-theory", "--suite", "correctness", "--seed", "1", "--out", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("theorem,delta_or_gamma,trials,violations,max_dev,bound\n"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(3) == Some("0")), "{csv}");
}

#[test]
fn verify_theory_upper_has_no_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("r.csv");
    let out = uagan(&["verify-theory", "--suite", "upper", "--out", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 5);
}

#[test]
fn verify_theory_lower_reports_violations_with_exit_3() {
    // The constant-inflation construction leaves the minimiser at p, so the
    // lower bound cannot hold for it; the command must say so, not hide it.
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("r.csv");
    let out = uagan(&["verify-theory", "--suite", "lower", "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(report.exists());
}

#[test]
fn eval_reads_gen_data_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(uagan(&["gen-data", "--spec", s(&configs().join("toy_spec.toml")), "--out", s(&data)]).status.success());
    // Real data as "samples": every mode is covered and every point is high quality up to 3σ tails.
    let out_csv = tmp.path().join("eval.csv");
    let out = uagan(&["eval", "--samples", s(&data.join("full.csv")), "--data-dir", s(&data), "--out", s(&out_csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&out_csv).unwrap();
    assert!(csv.lines().any(|l| l == "covered_modes,4"), "{csv}");
}

#[test]
fn short_training_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    let base = fs::read_to_string(configs().join("toy_ua.toml")).unwrap();
    let body = base.replace("out_dir = \"../out/toy_ua\"", "out_dir = \"run\"").replace("samples_per_mode = 2500", "samples_per_mode = 200");
    fs::write(&cfg, body).unwrap();
    let out = uagan(&["train", "--config", s(&cfg), "--rounds", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("run");
    for f in ["metrics.csv", "samples.csv", "eval.csv", "generator.ckpt", "site_0.ckpt"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
}

#[test]
fn config_with_unknown_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "rounds = 1\nlearning_rate = 3\n[data]\ndir = \".\"\n").unwrap();
    assert_eq!(uagan(&["train", "--config", s(&cfg)]).status.code(), Some(2));
}
