use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dpslice(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_dpslice"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn labels(csv: &str) -> Vec<usize> {
    csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

/// Drops the columns whose values depend on wall-clock time.
fn strip_columns(csv: &str, timed: &[&str]) -> String {
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !timed.contains(&header[i])).collect();
    csv.lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| cols[i]).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn generate_three_clusters_is_balanced_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"dataset": {"kind": "three_clusters", "n": 150}}"#;
    for out in ["a", "b"] {
        let res = dpslice(dir.path(), cfg, &["generate", "--seed", "11", "--out", out]);
        assert!(res.status.success(), "{res:?}");
    }
    let a = read(dir.path(), "a/data.csv");
    assert_eq!(a, read(dir.path(), "b/data.csv"));
    assert_eq!(a.lines().next(), Some("y,true_label"));
    let ls = labels(&a);
    assert_eq!(ls.len(), 150);
    for c in 1..=3 {
        assert_eq!(ls.iter().filter(|&&l| l == c).count(), 50);
    }
    let sidecar: serde_json::Value = serde_json::from_str(&read(dir.path(), "a/data.json")).unwrap();
    assert_eq!(sidecar["seed"], 11);
    assert_eq!(sidecar["dataset"]["n"], 150);

    let res = dpslice(dir.path(), cfg, &["generate", "--seed", "12", "--out", "c"]);
    assert!(res.status.success());
    assert_ne!(a, read(dir.path(), "c/data.csv"));
}

#[test]
fn generate_zipf_labels_stay_in_range() {
    let dir = TempDir::new().unwrap();
    let res = dpslice(dir.path(), r#"{"dataset": {"kind": "zipf", "n": 300}}"#, &["generate", "--out", "z"]);
    assert!(res.status.success(), "{res:?}");
    let ls = labels(&read(dir.path(), "z/data.csv"));
    assert_eq!(ls.len(), 300);
    assert!(ls.iter().all(|&l| (1..=500).contains(&l)));
    assert!(ls.iter().filter(|&&l| l == 1).count() > 100);
}

#[test]
fn bad_configs_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    for (cfg, cmd) in [
        (r#"{"dataset": {"kind": "file", "path": "x.csv"}}"#, "generate"),
        (r#"{"dataset": {"kind": "three_clusters", "n": 2}}"#, "generate"),
        (r#"{"verify": {"ns": []}}"#, "verify"),
        (r#"{"verify": {"deltas": [1.5]}}"#, "verify"),
        (r#"{"verify": {"ns": [100], "replicates": 10}}"#, "verify"),
        (r#"{"verify": {"grid": [1]}}"#, "verify"),
        (r#"{"run": {"sampler": "gibbs"}}"#, "run"),
        (r#"{"run": {"iterations": 10, "burn_in": 10}}"#, "run"),
        (r#"{"oracle": {"n": 13}}"#, "oracle"),
        (r#"{"benchmark": {"ns": []}}"#, "benchmark"),
        ("not json", "run"),
    ] {
        let res = dpslice(dir.path(), cfg, &[cmd, "--out", "bad"]);
        assert_eq!(res.status.code(), Some(2), "{cmd} {cfg}: {res:?}");
    }
}

#[test]
fn verify_single_config_prints_threshold_and_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"verify": {"ns": [100], "alphas": [1.0], "deltas": [0.1], "spec": "singleton",
                  "replicates": 2000, "tail": null, "merge": null, "poisson": null}}"#;
    let res = dpslice(dir.path(), cfg, &["verify", "--out", "v"]);
    assert!(res.status.success(), "{res:?}");
    let text = stdout(&res);
    assert!(text.contains("threshold C log n = 262.6"), "{text}");
    assert!(text.contains("exceedance 0"), "{text}");
    let csv = read(dir.path(), "v/verify.csv");
    assert_eq!(csv.lines().next(), Some("n,alpha,delta,spec,exceedance,threshold,pass"));
    assert!(csv.lines().nth(1).unwrap().starts_with("100,1,0.1,singleton,0,262.6"));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "v/verify.json")).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn verify_default_checks_pass_at_small_scale() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"verify": {"ns": [50], "alphas": [1.0], "deltas": [0.5],
                  "tail": {"n": 50}, "merge": {"n": 4, "replicates": 20000}, "poisson": {"alpha": 1.0}}}"#;
    let res = dpslice(dir.path(), cfg, &["verify", "--preset", "desk", "--out", "v"]);
    assert!(res.status.success(), "{res:?}");
    let text = stdout(&res);
    for line in ["tail n=50", "merge [1, 1, 1, 1]", "poisson x=0.3679", "verify: PASS"] {
        assert!(text.contains(line), "missing {line:?} in {text}");
    }
}

#[test]
fn verify_output_does_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"verify": {"ns": [30], "alphas": [2.0], "deltas": [0.1], "replicates": 3000,
                  "tail": null, "merge": null, "poisson": {"replicates": 3000}}}"#;
    for (threads, out) in [("1", "t1"), ("3", "t3")] {
        let res = dpslice(dir.path(), cfg, &["verify", "--threads", threads, "--out", out]);
        assert!(res.status.success(), "{res:?}");
    }
    assert_eq!(read(dir.path(), "t1/verify.json"), read(dir.path(), "t3/verify.json"));
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"dataset": {"kind": "three_clusters", "n": 90},
                  "run": {"sampler": "slice", "iterations": 300, "burn_in": 100, "thin": 4}}"#;
    for out in ["a", "b"] {
        let res = dpslice(dir.path(), cfg, &["run", "--seed", "4", "--out", out]);
        assert!(res.status.success(), "{res:?}");
    }
    let trace = read(dir.path(), "a/trace.csv");
    assert_eq!(trace.lines().next(), Some("iter,K,H,loglik,alpha,elapsed_ns"));
    assert_eq!(trace.lines().count(), 301);
    assert_eq!(
        strip_columns(&trace, &["elapsed_ns"]),
        strip_columns(&read(dir.path(), "b/trace.csv"), &["elapsed_ns"])
    );
    let snaps = read(dir.path(), "a/snapshots.csv");
    assert_eq!(snaps, read(dir.path(), "b/snapshots.csv"));
    assert_eq!(snaps.lines().count(), 1 + 50);
    assert!(snaps.lines().nth(1).unwrap().starts_with("101,"));
    assert_eq!(read(dir.path(), "a/coclustering.csv").lines().count(), 90);

    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "a/summary.json")).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["completed"], 300);
    assert_eq!(summary["infeasible"], false);
    assert!(summary["rand_binder"].as_f64().unwrap() > 0.7);
    let other: serde_json::Value = serde_json::from_str(&read(dir.path(), "b/summary.json")).unwrap();
    assert_eq!(summary["binder"], other["binder"]);
}

#[test]
fn run_on_generated_file_matches_synthetic_run() {
    let dir = TempDir::new().unwrap();
    let synthetic = r#"{"dataset": {"kind": "zipf", "n": 120},
                        "run": {"sampler": "crp-collapsed", "iterations": 60, "burn_in": 30}}"#;
    assert!(dpslice(dir.path(), synthetic, &["generate", "--out", "g"]).status.success());
    assert!(dpslice(dir.path(), synthetic, &["run", "--out", "s"]).status.success());
    let from_file = r#"{"dataset": {"kind": "file", "path": "g/data.csv"},
                        "run": {"sampler": "crp-collapsed", "iterations": 60, "burn_in": 30}}"#;
    assert!(dpslice(dir.path(), from_file, &["run", "--out", "f"]).status.success());
    assert_eq!(read(dir.path(), "s/snapshots.csv"), read(dir.path(), "f/snapshots.csv"));
}

#[test]
fn infeasible_run_reports_and_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"dataset": {"kind": "three_clusters", "n": 60},
                  "run": {"sampler": "bgs-n", "guard_budget_s": 1e-9}}"#;
    let res = dpslice(dir.path(), cfg, &["run", "--out", "r"]);
    assert_eq!(res.status.code(), Some(1), "{res:?}");
    assert!(stdout(&res).contains("infeasible"));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "r/summary.json")).unwrap();
    assert_eq!(summary["infeasible"], true);
    assert_eq!(summary["completed"], 10);
    assert_eq!(summary["sampler"], "bgs-60");
}

#[test]
fn benchmark_has_fixed_columns_and_marks_infeasible_cells() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"benchmark": {"samplers": ["slice", "bgs-n", "crp"], "ns": [30, 60], "seeds": [1, 2]},
                  "run": {"iterations": 120, "burn_in": 60, "guard_budget_s": 0}}"#;
    let res = dpslice(dir.path(), cfg, &["benchmark", "--out", "b"]);
    assert!(res.status.success(), "{res:?}");
    let csv = read(dir.path(), "b/benchmark.csv");
    assert_eq!(
        csv.lines().next(),
        Some("sampler,n,L,seed,median_sweep_ns,ess_loglik_per_s,ess_H_per_s,rand_binder,infeasible")
    );
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 2);
    assert!(csv.lines().any(|l| l.starts_with("bgs-n,60,60,2,")));
    assert!(csv.lines().any(|l| l.starts_with("slice,30,,1,")));

    let res = dpslice(dir.path(), cfg, &["benchmark", "--threads", "1", "--out", "c"]);
    assert!(res.status.success());
    let timed = ["median_sweep_ns", "ess_loglik_per_s", "ess_H_per_s"];
    assert_eq!(
        strip_columns(&csv, &timed),
        strip_columns(&read(dir.path(), "c/benchmark.csv"), &timed)
    );

    let guarded = r#"{"benchmark": {"samplers": ["slice", "bgs-n"], "ns": [80], "seeds": [3]},
                      "run": {"iterations": 40, "burn_in": 20, "guard_budget_s": 1e-9}}"#;
    let res = dpslice(dir.path(), guarded, &["benchmark", "--out", "d"]);
    assert!(res.status.success(), "per-cell infeasibility must not stop the grid: {res:?}");
    let csv = read(dir.path(), "d/benchmark.csv");
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn oracle_compares_samplers_with_enumeration() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"oracle": {"n": 5, "samplers": ["slice", "crp-collapsed", "bgs-2", "bgs-n", "prior"],
                             "sweeps": 20000, "burn_in": 500, "tv_threshold": 0.1}}"#;
    let res = dpslice(dir.path(), cfg, &["oracle", "--seed", "9", "--out", "o"]);
    assert!(res.status.success(), "{res:?}");
    let csv = read(dir.path(), "o/oracle.csv");
    let row = |name: &str| -> Vec<String> {
        let line = csv.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
        line.split(',').map(String::from).collect()
    };
    let bgs2 = row("bgs-2");
    assert_eq!(bgs2[7], "0", "blocked Gibbs with L = 2 never visits H > 2");
    assert!(bgs2[6].parse::<f64>().unwrap() > 0.0);
    assert_eq!(row("bgs-5")[3], "5");
    assert_eq!(row("prior")[8], "");
    assert!(row("slice")[2].parse::<f64>().unwrap() < 0.1);
    // 52 partitions of [5]
    assert_eq!(read(dir.path(), "o/exact.csv").lines().count(), 53);

    let strict = r#"{"oracle": {"n": 4, "samplers": ["slice"], "sweeps": 200, "burn_in": 0, "tv_threshold": 0.001}}"#;
    let res = dpslice(dir.path(), strict, &["oracle", "--out", "s"]);
    assert_eq!(res.status.code(), Some(1), "{res:?}");
}

#[test]
fn documented_config_example_is_accepted() {
    let guide = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../book/src/harness.md")).unwrap();
    let start = guide.find("```json\n").unwrap() + "```json\n".len();
    let example = &guide[start..start + guide[start..].find("```").unwrap()];
    let dir = TempDir::new().unwrap();
    let res = dpslice(dir.path(), example, &["generate", "--out", "g"]);
    assert!(res.status.success(), "{res:?}");
    let sidecar: serde_json::Value = serde_json::from_str(&read(dir.path(), "g/data.json")).unwrap();
    assert_eq!(sidecar["seed"], 7);
    assert_eq!(sidecar["n"], 1500);
}
