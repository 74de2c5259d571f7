//! End-to-end checks of the binary: exit codes, artifact formats, manifest
//! hashing, and byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vvplab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn save_instance(dir: &Path) -> PathBuf {
    let report = dir.join("report.json");
    let instance = dir.join("instance.json");
    let out = run(&[
        "shatter-verify",
        "--d1", "16", "--d2", "16", "--B", "4", "--J", "4",
        "--eps", "0.5", "--tau", "0.5",
        "--labelings", "random:32",
        "--out", report.to_str().unwrap(),
        "--save-instance", instance.to_str().unwrap(),
        "--seed", "1",
    ]);
    assert_success(&out);
    instance
}

#[test]
fn shatter_verify_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "shatter-verify",
        "--d1", "8", "--d2", "16", "--B", "4", "--J", "2",
        "--eps", "0.5",
        "--labelings", "all",
        "--out", report_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    assert_eq!(report["labelings_checked"], serde_json::json!(256));
    assert!(report_path.with_extension("json.manifest.json").exists());
}

#[test]
fn erm_gap_validates_sample_size() {
    let dir = tempfile::tempdir().unwrap();
    let instance = save_instance(dir.path());
    let out = run(&[
        "erm-gap",
        "--instance", instance.to_str().unwrap(),
        "--sample-size", "17", // instance has n = 16
        "--trials", "3",
        "--out", dir.path().join("gaps.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn erm_gap_output_is_deterministic_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let instance = save_instance(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out_path in [&a, &b] {
        let out = run(&[
            "erm-gap",
            "--instance", instance.to_str().unwrap(),
            "--sample-size", "8",
            "--trials", "10",
            "--seed", "9",
            "--out", out_path.to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b, "identical runs must be byte-identical");

    // Parallelism must not leak into the artifact bytes.
    let c = dir.path().join("c.csv");
    let out = bin()
        .env("VVPLAB_JOBS", "1")
        .args([
            "erm-gap",
            "--instance", instance.to_str().unwrap(),
            "--sample-size", "8",
            "--trials", "10",
            "--seed", "9",
            "--out", c.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert_success(&out);
    assert_eq!(bytes_a, std::fs::read(&c).unwrap());

    let text = String::from_utf8(bytes_a.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,unseen_fraction,empirical_loss,excess"
    );
    assert_eq!(lines.count(), 10);
    assert!(!text.contains('\r'));

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(a.with_extension("csv.manifest.json")).unwrap(),
    )
    .unwrap();
    let mut hasher = Sha256::new();
    hasher.update(&bytes_a);
    let expect: String = hasher.finalize().iter().map(|x| format!("{x:02x}")).collect();
    assert_eq!(manifest["artifacts"][0]["sha256"], serde_json::json!(expect));
    assert_eq!(manifest["seed"], serde_json::json!(9));
}

#[test]
fn sgd_writes_a_feasible_model() {
    let dir = tempfile::tempdir().unwrap();
    let instance = save_instance(dir.path());
    let model_path = dir.path().join("model.json");
    let out = run(&[
        "sgd",
        "--instance", instance.to_str().unwrap(),
        "--n", "16",
        "--out", model_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let model: vvplab::StructuredMatrix =
        serde_json::from_str(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    assert_eq!(model.rows(), 32);
    assert_eq!(model.cols(), 20);
}

#[test]
fn reduce_emits_the_pinned_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("reduction.csv");
    let out = run(&[
        "reduce",
        "--problem", "linear",
        "--d", "4",
        "--n", "20",
        "--seeds", "3",
        "--out", csv_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,n,c,delta,vvp_rate_eps_n,measured_excess,bound"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn reduce_rejects_unknown_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let out = run(&[
        "reduce", "--problem", "nonsense", "--n", "4",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"error\""), "structured error JSON expected");

    let out = run(&[
        "reduce", "--problem", "linear", "--n", "4", "--learner", "newton",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rademacher_writes_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let instance = save_instance(dir.path());
    let out_path = dir.path().join("rad.json");
    let out = run(&[
        "rademacher",
        "--instance", instance.to_str().unwrap(),
        "--n", "16",
        "--trials", "500",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let est: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(est["value"].as_f64().unwrap() <= est["bound"].as_f64().unwrap());
    assert_eq!(est["trials"], serde_json::json!(500));
}

#[test]
fn sweep_varying_n_produces_grouped_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--vary", "n=4,8",
        "--trials", "5",
        "--seed", "3",
        "--out", csv_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,status,trial,unseen_fraction,empirical_loss,excess"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().filter(|r| r.starts_with("4,ok,")).count(), 5);
    assert_eq!(rows.iter().filter(|r| r.starts_with("8,ok,")).count(), 5);
}

#[test]
fn sweep_records_infeasible_cells_as_status_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    // ε = 0.6 with J = 4 exceeds the unit ball: the cell must be reported,
    // not aborted.
    let out = run(&[
        "sweep",
        "--vary", "eps=0.5,0.6",
        "--trials", "2",
        "--out", csv_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|r| r.starts_with("0.5,ok,")).count(), 2);
    let bad: Vec<&&str> = rows.iter().filter(|r| r.starts_with("0.6,")).collect();
    assert_eq!(bad.len(), 1);
    assert!(!bad[0].contains("ok"), "infeasible cell row: {}", bad[0]);
}

#[test]
fn empty_sweep_matches_the_direct_command() {
    let dir = tempfile::tempdir().unwrap();
    let instance = save_instance(dir.path());
    let direct = dir.path().join("direct.csv");
    let out = run(&[
        "erm-gap",
        "--instance", instance.to_str().unwrap(),
        "--sample-size", "8",
        "--trials", "6",
        "--seed", "42",
        "--out", direct.to_str().unwrap(),
    ]);
    assert_success(&out);

    let swept = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        "--sample-size", "8",
        "--trials", "6",
        "--seed", "42",
        "--out", swept.to_str().unwrap(),
    ]);
    assert_success(&out);

    let direct_rows: Vec<String> = std::fs::read_to_string(&direct)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect();
    let sweep_rows: Vec<String> = std::fs::read_to_string(&swept)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.strip_prefix("ok,").unwrap().to_string())
        .collect();
    assert_eq!(direct_rows, sweep_rows);
}

#[test]
fn sweep_excess_tracks_the_margin_identity() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    // Two-variable sweep pairing block counts with margins; each feasible row
    // must satisfy the exact identity excess = 2ε·unseen_fraction.
    let out = run(&[
        "sweep",
        "--vary", "J=4,16",
        "--vary", "eps=0.5,0.25",
        "--d1", "64", // hosts the B·J = 64 top vectors at J = 16
        "--trials", "10",
        "--seed", "2",
        "--out", csv_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "J,eps,status,trial,unseen_fraction,empirical_loss,excess"
    );
    let mut ok_rows = 0;
    let mut infeasible = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[2] != "ok" {
            infeasible += 1;
            continue;
        }
        ok_rows += 1;
        let eps: f64 = fields[1].parse().unwrap();
        let unseen: f64 = fields[4].parse().unwrap();
        let excess: f64 = fields[6].parse().unwrap();
        assert!((excess - 2.0 * eps * unseen).abs() <= 1e-9, "row {line}");
    }
    // (J=16, eps=0.5) exceeds the unit ball; the other three cells run.
    assert_eq!(infeasible, 1);
    assert_eq!(ok_rows, 30);
}

#[test]
fn sweep_rejects_more_than_two_variables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--vary", "n=4,8",
        "--vary", "eps=0.5",
        "--vary", "J=4",
        "--out", dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn signset_writes_a_certified_family() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("set.json");
    let out = run(&[
        "signset",
        "--d", "32", "--count", "64",
        "--max-restarts", "20",
        "--seed", "5",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let set: vvplab::SignVectorSet =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(set.len(), 64);
    assert!(set.verify().is_ok());
}
