use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_fusion-bounds");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("FUSION_BOUNDS_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("stderr error is JSON")
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "-o", "d.csv"];
    args.extend_from_slice(extra);
    let o = run(dir, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--scenario", "base", "--seed", "1", "--with-internals"]);
    let csv = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2501);
    assert_eq!(csv.lines().next().unwrap(), "x1,x2,x3,s,t,y");
    let internals = std::fs::read_to_string(dir.path().join("d.internals.csv")).unwrap();
    assert_eq!(internals.lines().count(), 2501);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seeds"]["simulate"], 1);
    assert!(manifest["dataset_fingerprint"].as_str().unwrap().len() == 64);
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), &["--seed", "4", "--n", "300"]);
    simulate(b.path(), &["--seed", "4", "--n", "300"]);
    assert_eq!(
        std::fs::read(a.path().join("d.csv")).unwrap(),
        std::fs::read(b.path().join("d.csv")).unwrap()
    );
}

#[test]
fn unknown_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--scenario", "huge-tau", "-o", "d.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "UnknownScenario");
}

#[test]
fn minimal_simulation_is_valid_or_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--n", "4", "-o", "d.csv"]);
    if o.status.success() {
        let csv = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
    } else {
        assert_eq!(error_json(&o)["error"]["code"], "DegenerateDraw");
    }
}

#[test]
fn bounds_without_confounding_are_tight() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--beta", "0", "--seed", "2"]);
    let o = run(dir.path(), &["bounds", "-i", "d.csv", "--rho", "0", "--gamma", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let e = &v["estimate"];
    let lb = e["theta_lb_bc"].as_f64().unwrap();
    let ub = e["theta_ub_bc"].as_f64().unwrap();
    let se = e["var_lb"].as_f64().unwrap().sqrt();
    assert!((ub - lb).abs() < 2.0 * se, "lb {lb} ub {ub} se {se}");
    assert!(((lb + ub) / 2.0 - 7.0).abs() < 4.0 * se);
    assert_eq!(v["manifest"]["command"], "bounds");
}

#[test]
fn bounds_subgroup_uses_filtered_units() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seed", "3"]);
    let all = run(dir.path(), &["bounds", "-i", "d.csv"]);
    let sub = run(dir.path(), &["bounds", "-i", "d.csv", "--subgroup", "x1>1"]);
    assert!(sub.status.success(), "{}", String::from_utf8_lossy(&sub.stderr));
    let all: Value = serde_json::from_str(&stdout(&all)).unwrap();
    let sub: Value = serde_json::from_str(&stdout(&sub)).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let expected = csv
        .lines()
        .skip(1)
        .filter(|l| l.split(',').next().unwrap().parse::<f64>().unwrap() > 1.0)
        .count();
    assert_eq!(sub["n_units"], expected);
    assert_eq!(all["n_units"], 2500);
}

#[test]
fn bounds_writes_audit_and_nuisances() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--n", "200", "--seed", "5"]);
    let o = run(dir.path(), &["bounds", "-i", "d.csv", "-o", "out", "--audit", "--dump-nuisances"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["bounds.json", "manifest.json", "audit.json", "nuisances.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let audit: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/audit.json")).unwrap()).unwrap();
    assert_eq!(audit.as_array().unwrap().len(), 200);
    assert_eq!(audit[0]["slots"].as_array().unwrap().len(), 4);
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bounds", "-i", "nope.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "FileNotFound");
    assert!(stdout(&o).contains("FileNotFound"));
}

#[test]
fn conflicting_sources_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bounds", "-i", "d.csv", "--scenario", "base"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "InvalidArgument");
}

#[test]
fn negative_outcomes_need_shift() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,s,t,y\n");
    for (i, (s, t)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().cycle().take(40).enumerate() {
        csv.push_str(&format!("{},{s},{t},{}\n", i as f64 / 10.0, i as f64 - 20.0));
    }
    std::fs::write(dir.path().join("neg.csv"), csv).unwrap();
    let o = run(dir.path(), &["bounds", "-i", "neg.csv", "--k-folds", "2"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"]["code"], "NonPositiveOutcome");
    let o = run(dir.path(), &["bounds", "-i", "neg.csv", "--shift-outcomes"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compat_modes_and_decisions() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--beta", "0", "--seed", "6"]);
    let o = run(dir.path(), &["compat", "-i", "d.csv", "--rho", "0.2", "--gamma", "0.2", "--both-modes", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["compatible"], true);
    assert_eq!(v["arms"].as_array().unwrap().len(), 4);

    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--scenario", "larger-u", "--seed", "6"]);
    let o = run(dir.path(), &["compat", "-i", "d.csv", "--rho", "0", "--gamma", "0", "--r", "200"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("decision (corrected-left-tail): incompatible"), "{}", stdout(&o));
}

#[test]
fn compat_rejects_few_resamples() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["compat", "--scenario", "base", "--r", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "RTooSmall");
}

#[test]
fn frontier_outputs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["frontier", "--scenario", "base", "--grid-n", "15", "-o", "fr"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("fr/grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 226);
    assert!(csv.starts_with("rho,gamma,region,theta_lb,theta_ub,ci_lb_lo,ci_lb_hi,ci_ub_lo,ci_ub_hi,p_compat_t0,p_compat_t1\n"));
    let grid: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fr/grid.json")).unwrap()).unwrap();
    let total: u64 = grid["region_counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 225);
    assert!(dir.path().join("fr/manifest.json").exists());
    let out = stdout(&o);
    for region in ["Conclusive", "Tentative", "Inconclusive", "Incompatible"] {
        assert!(out.contains(region), "{out}");
    }
}

#[test]
fn frontier_bootstrap_variance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["frontier", "--scenario", "base", "--n", "600", "--grid-n", "3", "--variance", "bootstrap", "--bootstrap-b", "50", "-o", "fr"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fr/grid.json")).unwrap()).unwrap();
    assert_eq!(grid["config"]["variance_method"], "bootstrap");
    let cells = grid["cells"].as_array().unwrap();
    assert!(cells.iter().filter(|c| !c["bound"].is_null()).all(|c| c["bound"]["variance_method"] == "bootstrap"));
}

#[test]
fn manifest_replay_and_thread_count_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["frontier", "--scenario", "smaller-u", "--n", "1000", "--grid-n", "6", "--seed", "8"];
    let mut a = args.to_vec();
    a.extend(["-o", "one", "--threads", "1"]);
    assert!(run(dir.path(), &a).status.success());
    let o = run(dir.path(), &["frontier", "--config", "one/manifest.json", "-o", "replay", "--threads", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("one/grid.csv"), read("replay/grid.csv"));
    assert_eq!(read("one/grid.json"), read("replay/grid.json"));
}

#[test]
fn seed_comes_from_environment_when_absent() {
    let dir = tempfile::tempdir().unwrap();
    let with_env = Command::new(BIN)
        .args(["simulate", "--n", "50", "-o", "env.csv"])
        .current_dir(dir.path())
        .env("FUSION_BOUNDS_SEED", "17")
        .output()
        .unwrap();
    assert!(with_env.status.success());
    simulate(dir.path(), &["--n", "50", "--seed", "17"]);
    assert_eq!(
        std::fs::read(dir.path().join("env.csv")).unwrap(),
        std::fs::read(dir.path().join("d.csv")).unwrap()
    );
    let bad = Command::new(BIN)
        .args(["simulate", "--n", "50", "-o", "x.csv"])
        .current_dir(dir.path())
        .env("FUSION_BOUNDS_SEED", "minus one")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"n": 60, "seed": 2, "scenario": "base"}"#).unwrap();
    assert!(run(dir.path(), &["simulate", "--config", "cfg.json", "-o", "a.csv"]).status.success());
    assert!(run(dir.path(), &["simulate", "--config", "cfg.json", "--n", "70", "-o", "b.csv"]).status.success());
    let lines = |p: &str| std::fs::read_to_string(dir.path().join(p)).unwrap().lines().count();
    assert_eq!(lines("a.csv"), 61);
    assert_eq!(lines("b.csv"), 71);
}

#[test]
fn usage_errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["frontier", "--variance", "jackknife"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "UsageError");
    let o = run(dir.path(), &["bounds", "--scenario", "base", "--subgroup", "x9 > 1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "UnknownColumn");
}
