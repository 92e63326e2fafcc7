//! End-to-end checks of the `synergy` binary and the library entry points on
//! the in-memory synthetic streams.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use synergy_cli::{resolve, run_experiment, Overrides, SeedMetrics};
use synergy_core::learner::MethodKind;

fn synergy(args: &[&str], out: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_synergy"));
    c.args(args).env("RUST_LOG", "warn");
    if let Some(o) = out {
        c.arg("--out").arg(o);
    }
    c.output().expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

#[test]
fn joint_training_with_sgd_learns_the_synthetic_task() {
    let ov = Overrides {
        method: Some(MethodKind::Sgd),
        scenario: Some("synthetic-joint".into()),
        seeds: Some(3),
        ..Default::default()
    };
    let cfg = resolve(None, &ov).unwrap();
    let r = run_experiment(&cfg).unwrap();
    let acc = r.aggregate.mean("avg_accuracy").unwrap();
    assert!(acc > 95.0, "{acc}");
}

#[test]
fn run_writes_every_output_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("er");
    let o = synergy(&["run", "--method", "er", "--scenario", "synthetic", "--buffer-size", "50", "--seeds", "2"], Some(&out));
    ok(&o);
    for f in ["aggregate.json", "table.md", "training.log.jsonl", "config.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    for k in 0..2 {
        let sd = out.join(format!("seed_{k}"));
        assert!(sd.join("metrics.json").is_file());
        let csv = fs::read_to_string(sd.join("task_matrix.csv")).unwrap();
        // Header plus one row per task.
        assert_eq!(csv.lines().count(), 6, "{csv}");
    }
    let log = fs::read_to_string(out.join("training.log.jsonl")).unwrap();
    assert!(log.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
    let table = fs::read_to_string(out.join("table.md")).unwrap();
    assert!(table.contains("| ER |"), "{table}");
}

#[test]
fn aggregate_mean_matches_per_seed_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("syn");
    ok(&synergy(&["run", "--method", "synergy", "--scenario", "synthetic", "--buffer-size", "50", "--seeds", "3"], Some(&out)));
    let agg = read_json(&out.join("aggregate.json"));
    for metric in ["avg_accuracy", "avg_accuracy_working", "ece"] {
        let vals: Vec<f64> = (0..3)
            .map(|k| read_json(&out.join(format!("seed_{k}/metrics.json")))[metric].as_f64().unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / 3.0;
        let got = agg["metrics"][metric]["mean"].as_f64().unwrap();
        assert!((got - mean).abs() < 1e-9, "{metric}: {got} vs {mean}");
    }
}

#[test]
fn repeated_seed_gives_identical_seed_outputs() {
    let file = json!({"seeds": [17, 17], "n_seeds": 2});
    let ov = Overrides {
        method: Some(MethodKind::Synergy),
        scenario: Some("synthetic".into()),
        buffer_size: Some(50),
        ..Default::default()
    };
    let r = run_experiment(&resolve(Some(file), &ov).unwrap()).unwrap();
    let strip = |m: &SeedMetrics| SeedMetrics { seed_index: 0, ..m.clone() };
    assert_eq!(strip(&r.seeds[0].metrics), strip(&r.seeds[1].metrics));
    assert_eq!(r.seeds[0].task_matrix, r.seeds[1].task_matrix);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"method": "er", "n_seeds": 4, "synergy": {"buffer_size": 20, "epochs": 1}}"#).unwrap();
    let out = tmp.path().join("o");
    let o = synergy(
        &["run", "--config", cfg.to_str().unwrap(), "--scenario", "synthetic", "--method", "mean-er", "--seeds", "1"],
        Some(&out),
    );
    ok(&o);
    let c = read_json(&out.join("config.json"));
    assert_eq!(c["method"], "mean_er");
    assert_eq!(c["n_seeds"], 1);
    assert_eq!(c["synergy"]["buffer_size"], 20);
    assert_eq!(c["synergy"]["epochs"], 1);
}

#[test]
fn report_builds_a_table_from_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for m in ["er", "sgd"] {
        ok(&synergy(&["run", "--method", m, "--scenario", "synthetic", "--buffer-size", "50", "--seeds", "1"], Some(&tmp.path().join(m))));
    }
    let o = synergy(&["report", tmp.path().to_str().unwrap()], None);
    ok(&o);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("| ER |") && table.contains("| SGD |"), "{table}");
    assert!(table.contains("synthetic"), "{table}");

    let o = synergy(&["report", "--csv", "--metric", "ece", tmp.path().to_str().unwrap()], None);
    ok(&o);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
}

#[test]
fn stream_dump_is_reproducible() {
    let args = ["stream", "dump", "--scenario", "synthetic", "--seed", "3", "-k", "12"];
    let a = synergy(&args, None);
    let b = synergy(&args, None);
    ok(&a);
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<Value> = String::from_utf8(a.stdout.clone()).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.iter().filter(|l| l.get("checksum").is_some()).count(), 12);

    let c = synergy(&["stream", "dump", "--scenario", "synthetic", "--seed", "4", "-k", "12"], None);
    assert_ne!(a.stdout, c.stdout);

    let tmp = tempfile::tempdir().unwrap();
    ok(&synergy(&args, Some(tmp.path())));
    assert_eq!(fs::read(tmp.path().join("stream_dump.jsonl")).unwrap(), b.stdout);
}

#[test]
fn missing_data_names_the_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no-mnist-here");
    let o = synergy(&["run", "--scenario", "r-mnist", "--data-dir", missing.to_str().unwrap()], Some(&tmp.path().join("o")));
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("no-mnist-here"), "{err}");
}

#[test]
fn invalid_configuration_is_rejected_with_the_field_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"n_seeds": 0}"#).unwrap();
    let o = synergy(&["run", "--config", cfg.to_str().unwrap(), "--scenario", "synthetic"], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_seeds"));

    let o = synergy(&["run", "--scenario", "mnist-360", "--method", "mean-er-oewc"], None);
    assert!(!o.status.success());
}

#[test]
fn ablation_runs_the_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"synergy": {"epochs": 1}}"#).unwrap();
    let out = tmp.path().join("abl");
    let o = synergy(&["ablate", "--config", cfg.to_str().unwrap(), "--scenario", "synthetic", "--buffer-size", "50"], Some(&out));
    ok(&o);
    let table = fs::read_to_string(out.join("table.md")).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Method")).count(), 6, "{table}");
    assert!(out.join("synergy/aggregate.json").is_file());
}
