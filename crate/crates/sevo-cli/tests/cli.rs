//! End-to-end tests of the compiled binary: pipeline wiring, output
//! determinism, the documented exit codes, and the reduction to plain
//! optimizers at beta = 0.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sevo_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sevo"))
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = sevo_bin().args(args).current_dir(dir).output().unwrap();
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str], dir: &Path) -> i32 {
    sevo_bin()
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

const SMALL_RUN: &str = r#"
seed = 5

[input]
interactions = "data/interactions.tsv"
graph = "g/graph.txt"

[synthetic]
n_items = 30
n_users = 40
n_clusters = 3
seq_len = 8

[train]
epochs = 2
batch_size = 64
dimension = 4
"#;

fn prepared_pipeline() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL_RUN).unwrap();
    run_ok(
        &["--config", "run.toml", "gen-synthetic", "--out", "data"],
        dir.path(),
    );
    run_ok(
        &["--config", "run.toml", "build-graph", "--out", "g"],
        dir.path(),
    );
    dir
}

#[test]
fn pipeline_produces_deterministic_artifacts() {
    let dir = prepared_pipeline();
    run_ok(
        &["--config", "run.toml", "gen-synthetic", "--out", "data2"],
        dir.path(),
    );
    let a = fs::read(dir.path().join("data/interactions.tsv")).unwrap();
    let b = fs::read(dir.path().join("data2/interactions.tsv")).unwrap();
    assert_eq!(a, b, "same seed must reproduce the log byte for byte");

    run_ok(
        &["--config", "run.toml", "build-graph", "--out", "g2"],
        dir.path(),
    );
    assert_eq!(
        fs::read(dir.path().join("g/graph.txt")).unwrap(),
        fs::read(dir.path().join("g2/graph.txt")).unwrap()
    );

    run_ok(&["--config", "run.toml", "train", "--out", "t1"], dir.path());
    run_ok(&["--config", "run.toml", "train", "--out", "t2"], dir.path());
    for file in ["metrics.csv", "trace.csv", "manifest.json", "model.json"] {
        assert_eq!(
            fs::read(dir.path().join("t1").join(file)).unwrap(),
            fs::read(dir.path().join("t2").join(file)).unwrap(),
            "{file} must be deterministic"
        );
    }

    let manifest = fs::read_to_string(dir.path().join("t1/manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(parsed["seed"], 5);
    assert_eq!(parsed["inputs"][0]["role"], "interactions");
    assert!(parsed["inputs"][0]["sha256"].as_str().unwrap().len() == 64);

    let metrics = fs::read_to_string(dir.path().join("t1/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,seed,variant,beta,layers,metric,N,value"
    );
    assert!(lines.clone().count() >= 4, "hr and ndcg at two cutoffs");
    for line in lines {
        assert_eq!(line.split(',').count(), 8);
    }

    let trace = fs::read_to_string(dir.path().join("t1/trace.csv")).unwrap();
    assert!(trace.starts_with(
        "step,loss,smoothness,raw_delta_smoothness,transformed_delta_smoothness\n"
    ));
    assert_eq!(trace.lines().count(), 1 + 2, "one row per epoch");
}

/// Extracts (metric, cutoff, value) rows, dropping the label columns that
/// legitimately differ between runs (run id, variant, beta).
fn metric_values(path: &Path) -> Vec<(String, String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[5].to_string(), f[6].to_string(), f[7].to_string())
        })
        .collect()
}

#[test]
fn beta_zero_reduces_every_variant_to_the_plain_optimizer() {
    let dir = prepared_pipeline();
    for (variant, out) in [("exact", "ve"), ("neumann", "vn"), ("iterative", "vi")] {
        run_ok(
            &[
                "--config", "run.toml", "train", "--out", out, "--beta", "0", "--variant", variant,
            ],
            dir.path(),
        );
    }
    let exact = metric_values(&dir.path().join("ve/metrics.csv"));
    let neumann = metric_values(&dir.path().join("vn/metrics.csv"));
    let iterative = metric_values(&dir.path().join("vi/metrics.csv"));
    assert_eq!(exact, neumann);
    assert_eq!(exact, iterative);
    // Traces carry no variant label, so they must match byte for byte.
    assert_eq!(
        fs::read(dir.path().join("ve/trace.csv")).unwrap(),
        fs::read(dir.path().join("vn/trace.csv")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_config_and_changes_outputs() {
    let dir = prepared_pipeline();
    run_ok(&["--config", "run.toml", "train", "--out", "s5"], dir.path());
    run_ok(
        &["--config", "run.toml", "--seed", "6", "train", "--out", "s6"],
        dir.path(),
    );
    assert_ne!(
        fs::read(dir.path().join("s5/trace.csv")).unwrap(),
        fs::read(dir.path().join("s6/trace.csv")).unwrap()
    );
}

#[test]
fn slice_sweep_writes_one_row_per_end_and_window() {
    let dir = prepared_pipeline();
    run_ok(
        &[
            "--config",
            "run.toml",
            "build-graph",
            "--out",
            "sweep",
            "--sweep-slice",
            "2,4,6",
        ],
        dir.path(),
    );
    let csv = fs::read_to_string(dir.path().join("sweep/slice_sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "slice,window,n_nodes,n_edges,nnz,mean_weighted_degree,max_weighted_degree"
    );
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("first,")).count(), 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("last,")).count(), 3);
}

#[test]
fn iterative_high_beta_warns_on_stderr() {
    let dir = prepared_pipeline();
    let out = run_ok(
        &[
            "--config", "run.toml", "train", "--out", "w", "--variant", "iterative", "--beta",
            "0.8",
        ],
        dir.path(),
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("beta < 0.5"),
        "expected direction-awareness warning, got: {stderr}"
    );
}

#[test]
fn checkpoint_written_by_train_resumes_under_the_same_config() {
    let dir = prepared_pipeline();
    run_ok(&["--config", "run.toml", "train", "--out", "t"], dir.path());
    let bytes = fs::read(dir.path().join("t/checkpoint.json")).unwrap();
    // Reassemble the optimizer config the run used: defaults plus the
    // [sevo] section of the config file (none here, so pure defaults).
    let optimizer = sevo::optim::OptimizerConfig::default();
    let state = sevo::optim::load_checkpoint(bytes.as_slice(), &optimizer).unwrap();
    assert!(state.step_count() > 0);
    let mut other = optimizer.clone();
    other.learning_rate = 0.5;
    assert!(sevo::optim::load_checkpoint(bytes.as_slice(), &other).is_err());
}

#[test]
fn validation_problems_exit_with_code_one() {
    let dir = TempDir::new().unwrap();
    // Config file missing entirely.
    assert_eq!(
        exit_code(&["--config", "absent.toml", "verify"], dir.path()),
        1
    );
    // Unknown key.
    fs::write(dir.path().join("bad.toml"), "[train]\nepochz = 1\n").unwrap();
    assert_eq!(
        exit_code(&["--config", "bad.toml", "train", "--out", "x"], dir.path()),
        1
    );
    // Train without inputs configured.
    fs::write(dir.path().join("empty.toml"), "").unwrap();
    assert_eq!(
        exit_code(
            &["--config", "empty.toml", "train", "--out", "x"],
            dir.path()
        ),
        1
    );
}

#[test]
fn numerical_blowup_exits_with_code_two() {
    let dir = prepared_pipeline();
    let cfg = format!("{SMALL_RUN}\n[optimizer]\nlearning_rate = 1e200\n");
    fs::write(dir.path().join("blowup.toml"), cfg).unwrap();
    let out = sevo_bin()
        .args(["--config", "blowup.toml", "train", "--out", "x"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code().unwrap(), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("non-finite"),
        "diagnostic should name the failure: {stderr}"
    );
}

#[test]
fn verify_passes_clean_and_fails_under_fault_injection() {
    let dir = TempDir::new().unwrap();
    let out = run_ok(&["verify", "--out", "report.json"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(!stdout.contains("FAIL"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert!(report.as_array().unwrap().len() >= 20);

    let fault = sevo_bin()
        .args(["verify", "--fault", "drop-rescale"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(fault.status.code().unwrap(), 3);
    assert!(String::from_utf8_lossy(&fault.stdout).contains("FAIL"));
}
