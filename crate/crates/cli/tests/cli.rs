// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn scarlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scarlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("SCARLAB_DENSE_CAP")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pxp_check_reports_isospectral() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scarlab(&["pxp-check", "--N", "4", "--out", "p"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("isospectral: true"), "{}", stdout(&o));
    assert!(tmp.path().join("p/pxp_audit.json").exists());
}

#[test]
fn dynamics_revival_period_at_half() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scarlab(&["dynamics", "--twoJ", "1", "--N", "8", "--a", "0.5", "--tmax", "30", "--out", "d"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&tmp.path().join("d/revival.json"));
    let period = s["revival"]["period_estimate"].as_f64().unwrap();
    assert!((period - 4.0 * std::f64::consts::PI).abs() < 1e-3, "period {period}");
    let csv = fs::read_to_string(tmp.path().join("d/fidelity.csv")).unwrap();
    assert!(csv.lines().count() > 1000);
}

#[test]
fn rstat_summary_has_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scarlab(&["rstat", "--twoJ", "2", "--N", "6", "--a", "0.3", "--sector", "full", "--momentum", "k1", "--out", "r"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&tmp.path().join("r/summary.json"));
    let r = s["r_mean"].as_f64().unwrap();
    assert!(r > 0.3 && r < 0.7, "r_mean {r}");
    for f in ["spacings.csv", "r_values.csv", "histogram.csv", "manifest.json"] {
        assert!(tmp.path().join("r").join(f).exists(), "{f}");
    }
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scarlab(&["spectrum", "--twoJ", "2", "--N", "4", "--a", "0.5", "--sector", "C0"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    fs::write(tmp.path().join("bad.json"), r#"{"model": {"twoJ": 2, "N": 4}, "bogus": 1}"#).unwrap();
    let o = scarlab(&["spectrum", "--config", "bad.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    fs::write(tmp.path().join("task.json"), r#"{"task": "rstat", "model": {"twoJ": 2, "N": 4}}"#).unwrap();
    let o = scarlab(&["spectrum", "--config", "task.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn dense_cap_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_scarlab"))
        .args(["spectrum", "--twoJ", "2", "--N", "4", "--a", "0.5", "--sector", "full"])
        .current_dir(tmp.path())
        .env("SCARLAB_DENSE_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("--lowest"));
}

#[test]
fn json_values_win_with_warning() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"model": {"twoJ": 2, "N": 4, "a": 0.0}, "output": "j"}"#).unwrap();
    let o = scarlab(&["spectrum", "--config", "c.json", "--N", "5"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("warn"), "{}", stderr(&o));
    let m = json(&tmp.path().join("j/manifest.json"));
    assert_eq!(m["config"]["model"]["N"].as_u64(), Some(4), "{m}");
}

#[test]
fn verify_detects_tampering_and_deletion() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scarlab(&["spectrum", "--twoJ", "2", "--N", "4", "--out", "v"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = scarlab(&["verify", "v"], tmp.path());
    assert!(o.status.success(), "{}", stdout(&o));

    let csv = tmp.path().join("v/spectrum.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push('\n');
    fs::write(&csv, text).unwrap();
    let o = scarlab(&["verify", "v"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("spectrum.csv"));

    fs::remove_file(&csv).unwrap();
    let o = scarlab(&["verify", "v"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn outputs_are_byte_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str, threads: &'static str| {
        vec!["scars", "--twoJ", "2", "--N", "6", "--a", "0", "--sector", "C0", "--momentum", "k0", "--threads", threads, "--out", out]
    };
    for (out, t) in [("s1", "1"), ("s2", "1"), ("s4", "4")] {
        let o = scarlab(&args(out, t), tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["scatter.csv", "scars.json", "ladder.json", "summary.json"] {
        let a = fs::read(tmp.path().join("s1").join(f)).unwrap();
        assert_eq!(a, fs::read(tmp.path().join("s2").join(f)).unwrap(), "{f} differs between runs");
        assert_eq!(a, fs::read(tmp.path().join("s4").join(f)).unwrap(), "{f} differs across thread counts");
    }
}

#[test]
fn theta_sweep_leaves_statistics_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scarlab(
        &[
            "sweep", "--twoJ", "2", "--N", "6", "--a-grid", "0.4", "--theta-grid", "0,0.7,1.9,3.0", "--metrics", "rstat", "--sector", "full",
            "--momentum", "k1", "--out", "t",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<Value> = serde_json::from_value(json(&tmp.path().join("t/sweep.json"))).unwrap();
    assert_eq!(rows.len(), 4);
    let r: Vec<f64> = rows.iter().map(|row| row["r_mean"].as_f64().expect("r_mean present")).collect();
    for x in &r {
        assert!((x - r[0]).abs() < 1e-6, "{r:?}");
    }
    let csv = fs::read_to_string(tmp.path().join("t/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn fragments_cover_each_sector() {
    let tmp = tempfile::tempdir().unwrap();
    let o = scarlab(&["fragments", "--twoJ", "2", "--N", "4", "--out", "f"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&tmp.path().join("f/summary.json"));
    let sectors = s["sectors"].as_array().unwrap();
    let total: u64 = sectors.iter().map(|x| x["dim"].as_u64().unwrap()).sum();
    assert_eq!(total, 81);
    let csv = fs::read_to_string(tmp.path().join("f/fragments.csv")).unwrap();
    let frag_dims: u64 = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(frag_dims, 81);
}
