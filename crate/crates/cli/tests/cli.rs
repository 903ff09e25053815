use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ctda::data::{apply_channel_to_dataset, gen_two_class_images, write_images_csv, TimeSeries};
use ctda::scenarios::two_channel_fusion;
use ctda::stats::{parametric_channel, DiscreteDistribution};
use tempfile::TempDir;

fn ctda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctda"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn ctda")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ctda(dir, args);
    assert!(
        out.status.success(),
        "ctda {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn last_value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .filter_map(|l| l.strip_prefix(&format!("{key}\t")))
        .next_back()
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .parse()
        .unwrap()
}

/// Writes x1.csv, x2.csv and y.csv from the two-channel scenario.
fn series_dir(seed: u64) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let s = two_channel_fusion().generate(seed).unwrap();
    for (name, v) in [("x1", &s.inputs[0]), ("x2", &s.inputs[1]), ("y", &s.target)] {
        TimeSeries::from_values(name, v.clone())
            .unwrap()
            .write_csv(&dir.path().join(format!("{name}.csv")))
            .unwrap();
    }
    dir
}

fn image_dir() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let a = DiscreteDistribution::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
    let b = DiscreteDistribution::new(vec![0.1, 0.1, 0.1, 0.7]).unwrap();
    let clean = gen_two_class_images(7, 20, 19, 19, [&a, &b]).unwrap();
    let noisy = apply_channel_to_dataset(&clean, &parametric_channel(0.05).unwrap(), 8).unwrap();
    write_images_csv(&clean, &dir.path().join("clean.csv")).unwrap();
    write_images_csv(&noisy, &dir.path().join("noisy.csv")).unwrap();
    fs::write(
        dir.path().join("bsc.json"),
        r#"{"outputs":2,"inputs":2,"matrix":[[0.9,0.1],[0.1,0.9]]}"#,
    )
    .unwrap();
    fs::write(dir.path().join("uniform.json"), r#"{"probs":[0.5,0.5]}"#).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&read(dir, name)).unwrap()
}

#[test]
fn json_outputs_carry_envelope() {
    let d = series_dir(1);
    let p = d.path();
    ok(
        p,
        &[
            "--seed",
            "11",
            "fit",
            "--input",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--max-length",
            "5",
            "--out",
            "m.json",
        ],
    );
    let m = json(p, "m.json");
    assert_eq!(m["seed"], 11);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config"]["command"]["command"], "fit");
    assert_eq!(m["config"]["command"]["max_length"], 5);
    assert_eq!(m["channels"].as_array().unwrap().len(), 2);
    assert_eq!(m["channels"][0]["name"], "x1");
}

#[test]
fn missing_file_is_usage_error() {
    let d = series_dir(1);
    let out = ctda(
        d.path(),
        &[
            "fit",
            "--input",
            "absent.csv",
            "--target",
            "y.csv",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn bad_flags_exit_two() {
    let d = series_dir(1);
    let p = d.path();
    assert_eq!(
        ctda(p, &["fit", "--target", "y.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        ctda(p, &["sweep", "--e-grid", "0:0.5:0.1", "--out", "s.csv"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ctda(p, &["sweep", "--dims", "19", "--out", "s.csv"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ctda(
            p,
            &[
                "fit",
                "--input",
                "x1.csv",
                "--target",
                "y.csv",
                "--train-frac",
                "1.5",
                "--out",
                "m.json"
            ]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn wrong_header_names_the_column() {
    let d = series_dir(1);
    let p = d.path();
    fs::write(p.join("bad.csv"), "day,price\n0,1.0\n1,2.0\n").unwrap();
    let out = ctda(
        p,
        &[
            "fit", "--input", "bad.csv", "--target", "y.csv", "--out", "m.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("date"));
}

#[test]
fn zero_max_length_forces_memoryless_fit() {
    let d = series_dir(2);
    let p = d.path();
    ok(
        p,
        &[
            "fit",
            "--input",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--max-length",
            "0",
            "--out",
            "m.json",
        ],
    );
    let m = json(p, "m.json");
    for c in m["channels"].as_array().unwrap() {
        assert_eq!(c["model"]["length"], 0);
    }
}

#[test]
fn select_top_beyond_channel_count_keeps_all() {
    let d = series_dir(3);
    let p = d.path();
    ok(
        p,
        &[
            "fit",
            "--input",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--out",
            "m.json",
        ],
    );
    let out = ctda(
        p,
        &[
            "infer",
            "--models",
            "m.json",
            "--inputs",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--select-top",
            "5",
            "--out",
            "p.csv",
            "--report",
            "r.json",
        ],
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(
        json(p, "r.json")["fusion"]["channels"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn single_channel_mrc_is_plain_equalization() {
    let d = series_dir(4);
    let p = d.path();
    ok(
        p,
        &[
            "fit", "--input", "x1.csv", "--target", "y.csv", "--out", "m.json",
        ],
    );
    let stdout = ok(
        p,
        &[
            "infer", "--models", "m.json", "--inputs", "x1.csv", "--target", "y.csv", "--out",
            "p.csv",
        ],
    );
    let fused = last_value(&stdout, "test_mse");
    let line = stdout.lines().find(|l| l.starts_with("x1\t")).unwrap();
    let single: f64 = line.rsplit("test_mse=").next().unwrap().parse().unwrap();
    assert!(line.contains("alpha=1\t"));
    assert!((fused - single).abs() <= 1e-12 * single.max(1.0));
}

#[test]
fn fused_error_beats_worst_channel() {
    let d = series_dir(5);
    let p = d.path();
    ok(
        p,
        &[
            "fit",
            "--input",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--out",
            "m.json",
        ],
    );
    for fusion in ["mrc", "lmmse", "egc"] {
        let stdout = ok(
            p,
            &[
                "infer",
                "--models",
                "m.json",
                "--inputs",
                "x2.csv,x1.csv",
                "--target",
                "y.csv",
                "--fusion",
                fusion,
                "--out",
                "p.csv",
            ],
        );
        let worst = stdout
            .lines()
            .filter_map(|l| {
                l.split_once("test_mse=")
                    .map(|(_, v)| v.parse::<f64>().unwrap())
            })
            .fold(0.0, f64::max);
        assert!(
            last_value(&stdout, "test_mse") < worst,
            "{fusion}: {stdout}"
        );
    }
    let header = String::from_utf8(read(p, "p.csv")).unwrap();
    assert!(header.starts_with("date,y_true,y_hat,abs_err\n"));
}

#[test]
fn online_window_needs_mrc() {
    let d = series_dir(6);
    let p = d.path();
    ok(
        p,
        &[
            "fit",
            "--input",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--out",
            "m.json",
        ],
    );
    ok(
        p,
        &[
            "infer",
            "--models",
            "m.json",
            "--inputs",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--online-window",
            "30",
            "--out",
            "p.csv",
        ],
    );
    let out = ctda(
        p,
        &[
            "infer",
            "--models",
            "m.json",
            "--inputs",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--online-window",
            "30",
            "--fusion",
            "egc",
            "--out",
            "p.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn baseline_writes_predictions_and_model() {
    let d = series_dir(7);
    let p = d.path();
    let stdout = ok(
        p,
        &[
            "baseline",
            "--inputs",
            "x1.csv,x2.csv",
            "--target",
            "y.csv",
            "--method",
            "bayes",
            "--lag",
            "2",
            "--out",
            "b.csv",
            "--model-out",
            "bm.json",
        ],
    );
    assert!(last_value(&stdout, "test_mse").is_finite());
    let m = json(p, "bm.json");
    assert_eq!(m["model"]["type"], "bayes");
    assert_eq!(m["model"]["coefficients"].as_array().unwrap().len(), 6);
    let rows = String::from_utf8(read(p, "b.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 3000 - 2400);
}

#[test]
fn couple_reports_bsc_solution() {
    let d = image_dir();
    let p = d.path();
    ok(
        p,
        &[
            "couple",
            "--channel",
            "bsc.json",
            "--source",
            "uniform.json",
            "--delta",
            "1e-4",
            "--out",
            "c.json",
        ],
    );
    let c = json(p, "c.json");
    assert!((c["sigma"][1].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert!((c["score"]["0"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    let local = c["perturbation"]["local_mi"].as_f64().unwrap();
    let exact = c["perturbation"]["exact_mi"].as_f64().unwrap();
    assert!((local - exact).abs() / exact < 0.02);
}

#[test]
fn score_modes_separate_classes() {
    let d = image_dir();
    let p = d.path();
    for extra in [
        &["--mode", "pooled"][..],
        &["--smooth"],
        &["--clean-images", "clean.csv"],
    ] {
        let mut args = vec![
            "score",
            "--images",
            "noisy.csv",
            "--channel-e",
            "0.05",
            "--dims",
            "19x19",
            "--out",
            "s.csv",
        ];
        args.extend_from_slice(extra);
        let stdout = ok(p, &args);
        assert!(last_value(&stdout, "separation_error") <= 0.05, "{extra:?}");
    }
    let header = String::from_utf8(read(p, "s.csv")).unwrap();
    assert!(header.starts_with("index,label,score\n"));
    let stdout = ok(
        p,
        &[
            "score",
            "--images",
            "clean.csv",
            "--channel-e",
            "0",
            "--mode",
            "per-pixel",
            "--out",
            "s.csv",
        ],
    );
    assert!(last_value(&stdout, "separation_error") <= 0.05);
}

#[test]
fn per_pixel_inversion_failure_is_computation_error() {
    let d = image_dir();
    let out = ctda(
        d.path(),
        &[
            "score",
            "--images",
            "noisy.csv",
            "--channel-e",
            "0.05",
            "--mode",
            "per-pixel",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn thread_cap_does_not_change_output() {
    let d = image_dir();
    let p = d.path();
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_ctda"))
            .current_dir(p)
            .env("CTDA_THREADS", threads)
            .args([
                "sweep",
                "--e-grid",
                "0,0.1,0.2",
                "--n",
                "30",
                "--out",
                "s.csv",
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        read(p, "s.csv")
    };
    assert_eq!(run("1"), run("0"));
    let bad = Command::new(env!("CARGO_BIN_EXE_ctda"))
        .current_dir(p)
        .env("CTDA_THREADS", "many")
        .args(["sweep", "--out", "s.csv"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn seed_changes_sweep_samples() {
    let d = image_dir();
    let p = d.path();
    ok(
        p,
        &[
            "--seed", "1", "sweep", "--e-grid", "0.1", "--n", "10", "--out", "a.csv",
        ],
    );
    ok(
        p,
        &[
            "--seed", "2", "sweep", "--e-grid", "0.1", "--n", "10", "--out", "b.csv",
        ],
    );
    let a = String::from_utf8(read(p, "a.csv")).unwrap();
    assert!(a.ends_with(",20,1\n"), "{a}");
    assert_ne!(read(p, "a.csv"), read(p, "b.csv"));
}
