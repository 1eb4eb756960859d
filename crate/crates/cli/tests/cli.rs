use std::path::Path;
use std::process::{Command, Output};

fn bin(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_adapted-ot"));
    c.current_dir(dir).env_remove("ADAPTED_OT_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn sidecar(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn convergence_csv_schema_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["convergence", "--preset", "drift-gap", "--p", "2", "--samples", "400", "--n-list", "2,4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,h,dp_scaled,kr_cost,mc_sync,mc_stderr"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], 2.0);
    assert_eq!(rows[1][1], 0.25);
    // every float cell carries 17 significant digits
    let cell = text.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    assert_eq!(cell.split('e').next().unwrap().replace('.', "").len(), 17);

    let meta = sidecar(dir.path(), "convergence.meta.json");
    assert_eq!(meta["seed"], 0);
    assert_eq!(meta["command"]["subcommand"], "convergence");
    assert_eq!(meta["command"]["preset"], "drift-gap");
    let r = run(dir.path(), &["--replay", "convergence.meta.json"]);
    assert_eq!(r.status.code(), Some(0));
    assert!(stdout(&r).contains("reproduced"));
}

#[test]
fn replay_detects_changed_output_record() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["counterexample", "--samples", "200", "--n-steps", "10"]).status.success());
    let path = dir.path().join("counterexample.meta.json");
    let mut meta = sidecar(dir.path(), "counterexample.meta.json");
    meta["command"]["seed"] = 7.into();
    std::fs::write(&path, meta.to_string()).unwrap();
    assert_eq!(run(dir.path(), &["--replay", "counterexample.meta.json"]).status.code(), Some(1));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for threads in ["1", "3"] {
        let o = bin(dir.path())
            .args(["rho-scan", "--preset", "ou-vol", "--samples", "300", "--n-steps", "8"])
            .env("ADAPTED_OT_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        let meta = sidecar(dir.path(), "rho_scan.meta.json");
        assert_eq!(meta["threads"].as_u64().unwrap().to_string(), threads);
        digests.push(meta["output"]["sha256"].clone());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn aw_distance_of_a_lattice_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["lattice", "--drift", "kind=ou,theta=1", "--vol", "1", "--n-steps", "4", "--out", "l.json"]);
    assert!(o.status.success());
    let o = run(dir.path(), &["aw-distance", "--lattice-x", "l.json", "--lattice-y", "l.json", "--p", "2", "--scaled"]);
    assert!(o.status.success());
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(result["value"].as_f64().unwrap(), 0.0);
    assert_eq!(result["fosd_x"]["status"], "certified");
    assert!(result["policy_size"].as_u64().unwrap() > 0);
    // inputs are fingerprinted
    assert_eq!(sidecar(dir.path(), "result.meta.json")["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn metrics_on_two_point_trees() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("mu.json"), r#"{"paths": [[0.5, 1.0], [-0.5, -1.0]], "weights": [0.5, 0.5]}"#).unwrap();
    std::fs::write(dir.path().join("nu.json"), r#"{"paths": [[0.0, 1.0], [0.0, -1.0]], "weights": [0.5, 0.5]}"#).unwrap();
    let o = run(dir.path(), &["metrics", "--tree-mu", "mu.json", "--tree-nu", "nu.json", "--p", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert!((v["metrics"]["adapted"].as_f64().unwrap() - 2.25).abs() < 1e-10);
    assert!((v["metrics"]["wasserstein"].as_f64().unwrap() - 0.25).abs() < 1e-10);
}

#[test]
fn simulate_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--drift", "kind=ou,theta=2", "--vol", "0.5", "--n-steps", "5", "--samples", "3", "--seed", "9"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("replicate,t,value"));
    assert_eq!(text.lines().count(), 1 + 3 * 6);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["convergence", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["lattice", "--drift", "kind=wat", "--vol", "1"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--threads", "0", "selftest", "--only", "3"]).status.code(), Some(2));
    let o = run(
        dir.path(),
        &["simulate", "--drift", "kind=affine,a=1,slope=1000", "--vol", "1", "--n-steps", "8", "--scheme", "em"],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn selftest_reports_each_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["selftest", "--quick", "--only", "3,4"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
    assert!(out.contains("2 of 2 criteria passed"));
}

#[test]
fn selftest_exit_status_follows_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["selftest", "--quick", "--only", "1,5"]);
    let out = stdout(&o);
    let failed = out.lines().any(|l| l.starts_with("[FAIL]"));
    assert_eq!(o.status.code(), Some(if failed { 4 } else { 0 }));
    assert_eq!(out.lines().filter(|l| l.starts_with('[')).count(), 2);
}
