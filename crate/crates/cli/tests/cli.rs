use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn nmqpuf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmqpuf"))
        .args(args)
        .env_remove("NMQPUF_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(out: &str, key: &str) -> f64 {
    let line = out
        .lines()
        .find(|l| l.starts_with(key))
        .unwrap_or_else(|| panic!("no `{key}` in\n{out}"));
    line[key.len()..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn auth_simulate_with_margin_threshold() {
    let o = nmqpuf(&[
        "auth",
        "simulate",
        "--ber",
        "0.1",
        "--crps",
        "200",
        "--threshold-rule",
        "paper",
        "--trials",
        "200000",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(field(&out, "threshold:"), 170.0);
    let exact = field(&out, "failure probability (exact):");
    let mc = field(&out, "failure probability (monte carlo):");
    assert!((0.005..=0.02).contains(&exact), "{exact}");
    assert!((mc - exact).abs() < 0.002, "{mc} vs {exact}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = nmqpuf(&["attack", "lr", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error kind=usage"));
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nmqpuf(&[
        "metrics",
        "uniformity",
        "--dataset",
        path(&dir.path().join("nope.bin")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error kind=io"));
}

#[test]
fn all_zero_dataset_has_zero_uniformity() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("zeros.csv");
    let mut text = String::from(
        "# format=nmq-crp-csv\n# version=1\n# n=8\n# architecture=apuf\n# g=0\n# k=1\n\
         # seed_digest=0000000000000000\n# record_count=4\n# enrollment_temperature=20\n\
         challenge,response,temperature,draw\n",
    );
    for c in ["00", "01", "a2", "ff"] {
        text.push_str(&format!("{c},0,,\n"));
    }
    std::fs::write(&csv, text).unwrap();
    let o = nmqpuf(&["metrics", "uniformity", "--dataset", path(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(field(&stdout(&o), "uniformity:"), 0.0);
}

#[test]
fn generate_then_attack_apuf() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("apuf.bin");
    let report = dir.path().join("report.csv");
    let start = Instant::now();
    let o = nmqpuf(&[
        "crp",
        "generate",
        "--arch",
        "apuf",
        "--count",
        "11000",
        "--out",
        path(&data),
    ]);
    assert!(o.status.success());
    let o = nmqpuf(&[
        "attack",
        "lr",
        "--dataset",
        path(&data),
        "--report-csv",
        path(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed() < Duration::from_secs(60));
    let out = stdout(&o);
    assert!(field(&out, "test_accuracy:") >= 0.95);
    assert_eq!(field(&out, "overlap:"), 0.0);
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("attack,target,"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn instance_file_feeds_generation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("inst.cfg");
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    assert!(
        nmqpuf(&["instance", "new", "--out", path(&cfg), "--n", "32"])
            .status
            .success()
    );
    for out in [&a, &b] {
        let o = nmqpuf(&[
            "crp",
            "generate",
            "--config",
            path(&cfg),
            "--arch",
            "nmq-ro:200",
            "--count",
            "500",
            "--out",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::metadata(&a).unwrap().len(), 48 + 9 * 500);
}

#[test]
fn seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("inst.cfg");
    let o = Command::new(env!("CARGO_BIN_EXE_nmqpuf"))
        .args(["instance", "new", "--out", path(&cfg)])
        .env("NMQPUF_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("seed=77"));
    assert!(std::fs::read_to_string(&cfg)
        .unwrap()
        .lines()
        .any(|l| l == "seed=77"));
}
