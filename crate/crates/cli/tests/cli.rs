use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mfgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfgraph")).args(args).env_remove("MFGRAPH_THREADS").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracle_two_node_example() {
    let out =
        mfgraph(&["oracle", "--n", "2", "--p", "1", "--lambda", ".5", "--beta", ".5", "--r-plus", ".5", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = v["sigma_vec"].as_array().unwrap();
    assert!((s[0].as_f64().unwrap() - 1.0 / 9.0).abs() < 1e-10);
    assert!((s[1].as_f64().unwrap() + 1.0 / 9.0).abs() < 1e-10);
    assert!(v.get("sigma0").is_none());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(mfgraph(&["simulate", "--n", "5"]).status.code(), Some(2));
    assert_eq!(mfgraph(&["simulate", "--t", "5", "--lambda", "0"]).status.code(), Some(2));
    assert_eq!(mfgraph(&["mc", "--t", "10", "--format", "binary"]).status.code(), Some(2));
    assert_eq!(mfgraph(&["sweep", "--t-grid", "10"]).status.code(), Some(2));
    assert_eq!(mfgraph(&["bogus"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing.csv");
    assert_eq!(mfgraph(&["estimate", "--input", path(&missing)]).status.code(), Some(1));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,x1\n1,7\n").unwrap();
    assert_eq!(mfgraph(&["estimate", "--input", path(&bad)]).status.code(), Some(1));
}

#[test]
fn env_simulate_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    let traj = dir.path().join("traj.bin");
    let est = dir.path().join("est.json");
    let out = mfgraph(&["env", "--n", "12", "--seed", "3", "--shuffle", "--out", path(&env)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("environment N=12"));

    let sim =
        ["simulate", "--env", path(&env), "--t", "100000", "--seed", "4", "--format", "binary", "--out", path(&traj)];
    assert!(mfgraph(&sim).status.success());
    let first = fs::read(&traj).unwrap();
    assert!(mfgraph(&sim).status.success());
    assert_eq!(first, fs::read(&traj).unwrap());
    assert_eq!(&first[..4], b"MFGT");

    let out = mfgraph(&["estimate", "--input", path(&traj), "--env", path(&env), "--out", path(&est)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&est).unwrap()).unwrap();
    assert_eq!(v["sigma_hat"].as_array().unwrap().len(), 12);
    assert_eq!(v["labels_hat"].as_array().unwrap().len(), 12);
    assert_eq!(v["centroids"].as_array().unwrap().len(), 2);
    assert_eq!(v["exact"], serde_json::json!(true));
    assert_eq!(v["misclassified_fraction"].as_f64(), Some(0.0));
}

#[test]
fn simulate_csv_and_oracle_files() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let res = dir.path().join("res.csv");
    let json = dir.path().join("oracle.json");
    assert!(mfgraph(&["simulate", "--n", "4", "--t", "3", "--seed", "2", "--out", path(&traj)]).status.success());
    let text = fs::read_to_string(&traj).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "t,x1,x2,x3,x4");
    assert!(lines[1].starts_with("1,"));

    let out =
        mfgraph(&["oracle", "--n", "8", "--seed", "5", "--matrices", "--residuals", path(&res), "--out", path(&json)]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["sigma0"].as_array().unwrap().len(), 8);
    let csv = fs::read_to_string(&res).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("n,seed,iterations,residual,"));
    assert!(csv.lines().nth(1).unwrap().starts_with("8,5,"));
}

fn strip_wall(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(h, _)| h).to_string()).collect()
}

#[test]
fn mc_is_reproducible_and_thread_independent() {
    let run = |threads: &str| {
        let out = mfgraph(&["mc", "--n", "10", "--t", "2000", "--replicas", "30", "--seed", "7", "--threads", threads]);
        assert!(out.status.success());
        strip_wall(&String::from_utf8(out.stdout).unwrap())
    };
    let a = run("1");
    assert_eq!(a, run("4"));
    let header = a.iter().position(|l| l.starts_with("N,T,")).unwrap();
    let row: Vec<&str> = a[header + 1].split(',').collect();
    assert_eq!(&row[..7], &["10", "2000", "0.5", "0.5", "0.5", "0.5", "30"]);
    let per: f64 = row[7].parse().unwrap();
    assert!((0.0..=1.0).contains(&per));
}

#[test]
fn params_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    fs::write(&params, r#"{"n": 6, "r_plus": 0.5, "beta": 0.5, "lambda": 0.5, "p": 0.2}"#).unwrap();
    let out =
        mfgraph(&["mc", "--params", path(&params), "--p", "0.9", "--t", "50", "--replicas", "3", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["params"]["n"], 6);
    assert_eq!(v[0]["params"]["p"], 0.9);
}

#[test]
fn heatmap_and_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("h.svg");
    let out = mfgraph(&[
        "heatmap",
        "--n-grid",
        "6,8",
        "--t-grid",
        "20,200",
        "--replicas",
        "5",
        "--seed",
        "1",
        "--format",
        "svg",
        "--out",
        path(&svg),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("heatmap cells=4"));

    let out = mfgraph(&[
        "sweep",
        "--n",
        "8",
        "--param",
        "lambda",
        "--values",
        "0.3,0.7",
        "--t-grid",
        "100",
        "--replicas",
        "4",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"t_grid":[30],"sweep":{"param":"p","values":[0.2,0.4,0.6]},"replicas":3,"master_seed":2}"#)
        .unwrap();
    let out = mfgraph(&["sweep", "--spec", path(&spec), "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
}

#[test]
fn help_lists_defaults() {
    let out = mfgraph(&["mc", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in
        ["--n", "--r-plus", "--beta", "--lambda", "--p", "--replicas", "--threads", "--seed", "--out", "--format"]
    {
        assert!(text.contains(flag), "{flag} missing");
    }
    assert!(text.contains("[default: 50]") && text.contains("[default: 1000]") && text.contains("MFGRAPH_THREADS"));
}
