use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ghzcert::tradeoff::{f_max_linearized, f_piecewise};

fn ghzcert(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghzcert"))
        .args(args)
        .env("GHZCERT_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

#[test]
fn help_lists_flags_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, flags) in [
        ("rate-curve", &["--m", "--gamma", "--n", "--delta-est", "--eps-smo", "--eps-snd", "--points"][..]),
        ("simulate", &["--m", "--n", "--gamma", "--visibility", "--delta-est", "--omega-exp", "--trials", "--seed", "--protocol"][..]),
        ("verify", &["--m", "--trials", "--seed", "--inject-sign-flip"][..]),
        ("tradeoff", &["--m", "--gamma", "--pt1", "--points"][..]),
        ("entropy", &["--spec", "--eps-prime"][..]),
    ] {
        let out = ghzcert(dir.path(), &[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        for f in flags {
            assert!(text.contains(f), "{sub} --help misses {f}");
        }
        assert!(text.contains("[default:"), "{sub} --help shows no defaults");
        assert!(text.contains("--out-dir"));
    }
}

#[test]
fn rate_curve_is_byte_identical_and_uses_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["rate-curve", "--m", "4", "--gamma", "0.5", "--points", "41", "--svg"];
    assert!(ghzcert(dir.path(), &args).status.success());
    let first = fs::read(dir.path().join("rate_curve.csv")).unwrap();
    assert!(ghzcert(dir.path(), &args).status.success());
    assert_eq!(first, fs::read(dir.path().join("rate_curve.csv")).unwrap());
    let header = String::from_utf8(first).unwrap();
    assert!(header.starts_with("omega_exp,leading_order_rate,rate_per_round,pt_star\n"));
    let svg = fs::read_to_string(dir.path().join("rate_curve.svg")).unwrap();
    assert!(svg.contains("<polyline") && svg.contains("stroke-dasharray"));
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["rate-curve", "--points", "0"][..],
        &["rate-curve", "--gamma", "1.5"][..],
        &["simulate", "--trials", "50"][..],
        &["tradeoff", "--pt1", "0.9"][..],
        &["rate-curve", "--unknown-flag", "1"][..],
    ] {
        let out = ghzcert(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = ghzcert(dir.path(), &["verify", "--m", "4", "--trials", "50"]);
    assert_eq!(ok.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["cuts"].as_array().unwrap().len(), 3);

    let bad = ghzcert(dir.path(), &["verify", "--m", "4", "--trials", "5", "--inject-sign-flip"]);
    assert_eq!(bad.status.code(), Some(3));

    let two = ghzcert(dir.path(), &["verify", "--m", "2", "--trials", "5"]);
    assert_eq!(two.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify_report.json")).unwrap()).unwrap();
    assert!(report["cuts"].as_array().unwrap().is_empty());
}

#[test]
fn simulate_reports_summary() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--m", "3", "--n", "2000", "--seed", "5", "--protocol", "2"];
    let out = ghzcert(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("simulate_summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert!(v["summary"]["empirical_omega"].as_f64().unwrap() > 0.4);
    assert_eq!(v["summary"]["aborted"], false);
    let transcript = fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 2001);

    assert!(ghzcert(dir.path(), &args).status.success());
    assert_eq!(transcript, fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap());
}

#[test]
fn tradeoff_csv_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghzcert(dir.path(), &["tradeoff", "--m", "4", "--gamma", "0.5", "--pt1", "0.4", "--points", "21"]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(dir.path().join("tradeoff.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["p1", "f", "f_max", "a", "b"]);
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let p1: f64 = rec[0].parse().unwrap();
        assert_eq!(rec[1].parse::<f64>().unwrap(), f_piecewise(p1, 0.5, 4).unwrap());
        assert_eq!(rec[2].parse::<f64>().unwrap(), f_max_linearized(p1, 0.4, 0.5, 4).unwrap());
        rows += 1;
    }
    assert_eq!(rows, 21);
}

#[test]
fn entropy_reads_a_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"M": 3, "lambda0": {"00": 1.0}, "lambda1": {}}"#).unwrap();
    let out = ghzcert(dir.path(), &["entropy", "--spec", spec.to_str().unwrap(), "--eps-prime", "1e-4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("entropy.csv")).unwrap();
    assert!(csv.starts_with("quantity,subsystems,value\n"));
    let rate: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("asymptotic_distill_rate,1;2;3,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((rate - 0.5).abs() < 1e-10);

    fs::write(&spec, r#"{"M": 3, "lambda0": {"00": 1.0}, "lambda1": {}, "extra": 1}"#).unwrap();
    let out = ghzcert(dir.path(), &["entropy", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
