use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fountain-lab"))
        .args(args)
        .env_remove("FOUNTAIN_LAB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_row(text: &str, s: usize) -> Vec<&str> {
    text.lines()
        .find(|l| l.split(',').next() == Some(&s.to_string()))
        .unwrap_or_else(|| panic!("no row for s={s}"))
        .split(',')
        .collect()
}

#[test]
fn predict_ofc_half_recovery_is_k_ln2() {
    let text = stdout(&run(&["predict", "--scheme", "ofc", "--k", "1000", "--eps", "0"]));
    assert_eq!(text.lines().next(), Some("s,expected_n"));
    assert_eq!(text.lines().count(), 1001);
    let n: f64 = csv_row(&text, 500)[1].parse().unwrap();
    assert!((n - 693.1).abs() < 0.1, "{n}");
}

#[test]
fn predict_lossless_sofc_is_one_transmission_per_symbol() {
    let text = stdout(&run(&["predict", "--scheme", "sofc", "--k", "200"]));
    for line in text.lines().skip(1) {
        let (s, n) = line.split_once(',').unwrap();
        let (s, n): (f64, f64) = (s.parse().unwrap(), n.parse().unwrap());
        assert!((s - n).abs() < 1e-9, "{line}");
    }
}

#[test]
fn gamma0_with_other_scheme_is_usage_error() {
    let out = run(&["predict", "--scheme", "sofc", "--gamma0", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["simulate", "--scheme", "ofcnb"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["predict", "--scheme", "ofc", "--eps", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_for_fixed_seed() {
    let args = ["simulate", "--scheme", "ofc", "--k", "300", "--trials", "1", "--seed", "7"];
    let a = stdout(&run(&args));
    let b = stdout(&run(&args));
    assert_eq!(a, b);
    assert_eq!(a.lines().next(), Some("scheme,k,eps,gamma0,policy,trial_or_agg,s,sent_mean,sent_std"));

    let mut env_run = Command::new(env!("CARGO_BIN_EXE_fountain-lab"));
    env_run.args(&args[..7]).env("FOUNTAIN_LAB_SEED", "7");
    let c = String::from_utf8(env_run.output().unwrap().stdout).unwrap();
    assert!(a == c, "seed from environment differs");
}

#[test]
fn thread_count_does_not_change_output() {
    let base = ["simulate", "--scheme", "sofc", "--k", "200", "--eps", "0.2", "--trials", "30", "--seed", "3"];
    let one = stdout(&run(&[&["--jobs", "1"], &base[..]].concat()));
    let four = stdout(&run(&[&["--jobs", "4"], &base[..]].concat()));
    assert_eq!(one, four);
}

#[test]
fn sofc_threshold_feedback_near_reference() {
    let out = run(&[
        "--format", "json", "simulate", "--scheme", "sofc", "--k", "512", "--eps", "0.1",
        "--policy", "threshold", "--delta-p", "0.01", "--trials", "200", "--seed", "1",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let fb = v["summary"]["feedback_mean_full"].as_f64().unwrap();
    assert!((fb - 9.7).abs() <= 0.3 * 9.7, "feedback {fb}");
    assert_eq!(v["summary"]["budget_exceeded_count"], 0);
}

#[test]
fn compare_and_sweep_headers_are_pinned() {
    let text = stdout(&run(&["compare", "--scheme", "ofc", "--k", "200", "--trials", "10"]));
    assert!(text.lines().any(|l| l == "s,analytic,empirical,relative_error"));
    let text = stdout(&run(&["sweep", "--k", "100", "--trials", "5", "--eps-list", "0.1,0.5"]));
    assert!(text.lines().any(|l| l == "eps,sofc_sent_mean,ofc_sent_mean,difference"));
    assert_eq!(text.lines().filter(|l| l.starts_with("0.")).count(), 2);
}

#[test]
fn transfer_reproduces_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.bin");
    let output = dir.path().join("out.bin");
    let data: Vec<u8> = (0..300_000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 13) as u8).collect();
    fs::write(&input, &data).unwrap();
    for scheme in [&["--scheme", "ofc"][..], &["--scheme", "ofcnb", "--gamma0", "0.1"], &["--scheme", "sofc"]] {
        let mut args = vec!["transfer", "--in", input.to_str().unwrap(), "--out", output.to_str().unwrap(), "--eps", "0.1"];
        args.extend_from_slice(scheme);
        let report = stdout(&run(&args));
        assert!(report.starts_with("scheme,k,symbol_size,original_len,"), "{report}");
        assert_eq!(fs::read(&output).unwrap(), data);
    }
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = run(&["transfer", "--in", missing.to_str().unwrap(), "--out", "/dev/null", "--scheme", "sofc"]);
    assert_eq!(out.status.code(), Some(4));
}
