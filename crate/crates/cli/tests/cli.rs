use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn conc_lab(args: &[&str], out: &Path, threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_conc-lab"));
    cmd.args(args).arg("--out").arg(out);
    match threads {
        Some(t) => cmd.env("CONC_LAB_THREADS", t.to_string()),
        None => cmd.env_remove("CONC_LAB_THREADS"),
    };
    cmd.output().expect("spawn conc-lab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn certify_chamber_of_four() {
    let tmp = TempDir::new().unwrap();
    let o = conc_lab(&["certify", "--n", "4"], tmp.path(), None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert = json(&tmp.path().join("certificate.json"));
    assert_eq!(cert["delta"].as_f64(), Some(0.0625));
    assert!(cert["K"].as_f64().unwrap() <= 1.0 + 4.0 * 32.0);
    let manifest = json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["command"], "certify");
    assert_eq!(manifest["config"]["n"], 4);
    assert_eq!(manifest["outputs"][0]["file"], "certificate.json");
}

#[test]
fn selftest_passes() {
    let tmp = TempDir::new().unwrap();
    let o = conc_lab(&["selftest"], tmp.path(), None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rep = json(&tmp.path().join("selftest.json"));
    assert_eq!(rep["failed"], 0);
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let unknown = write(tmp.path(), "unknown.json", r#"{"schema_version": 1, "n": 3, "colour": "red"}"#);
    let unversioned = write(tmp.path(), "unversioned.json", r#"{"n": 3}"#);
    let future = write(tmp.path(), "future.json", r#"{"schema_version": 2, "n": 3}"#);
    let nested = write(
        tmp.path(),
        "nested.json",
        r#"{"schema_version": 1, "mode": "max_local_time", "n": 2, "method": {"method": "occupation", "eps": 0.01, "extra": 1}}"#,
    );
    let out = tmp.path().join("out");
    for (cmd, cfg) in [("certify", &unknown), ("certify", &unversioned), ("certify", &future), ("concentrate", &nested)] {
        let o = conc_lab(&[cmd, "--config", cfg], &out, None);
        assert_eq!(code(&o), 2, "{cmd} {cfg}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&conc_lab(&["certify", "--config", "/nonexistent/cfg.json"], &out, None)), 2);
    assert_eq!(code(&conc_lab(&["certify", "--n", "4"], &out, Some(0))), 2);
    assert_eq!(code(&conc_lab(&["simulate", "--dt", "-1"], &out, None)), 2);
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn contracting_failure_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let domain = write(
        tmp.path(),
        "domain.json",
        r#"{"dim": 2, "faces": [
            {"normal": [1, 0], "offset": 0, "direction": [1, 2]},
            {"normal": [0, 1], "offset": 0, "direction": [2, 1]}]}"#,
    );
    let o = conc_lab(&["certify", "--domain", &domain], &tmp.path().join("out"), None);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spectral radius"));
}

#[test]
fn general_domain_gets_a_default_u_vector() {
    let tmp = TempDir::new().unwrap();
    let domain = write(
        tmp.path(),
        "domain.json",
        r#"{"dim": 2, "faces": [
            {"normal": [1, 0], "offset": 0, "direction": [1, 0.3]},
            {"normal": [0, 1], "offset": 0, "direction": [-0.2, 1]}]}"#,
    );
    let o = conc_lab(&["certify", "--domain", &domain], tmp.path(), None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert = json(&tmp.path().join("certificate.json"));
    assert!(cert["delta"].as_f64().unwrap() > 0.99);
    assert!(cert["u"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() > 0.0));
}

#[test]
fn solver_budget_exhaustion_exits_with_four() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "lt.json",
        r#"{"schema_version": 1, "deltas": [0, 0, 0, 0], "n_paths": 4, "grid": {"T": 0.2, "dt": 0.01},
            "method": {"method": "skorokhod", "tol": 1e-14, "max_iter": 1}}"#,
    );
    let o = conc_lab(&["localtimes", "--config", &cfg], &tmp.path().join("out"), None);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn flags_override_config_fields() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "sim.json",
        r#"{"schema_version": 1, "model": {"kind": "brownian", "drift": [0.5, -0.5]},
            "grid": {"T": 1.0, "dt": 0.1}, "n_paths": 7, "seed": 3}"#,
    );
    let out = tmp.path().join("out");
    let o = conc_lab(&["simulate", "--config", &cfg, "--paths", "4", "--seed", "11", "--T", "0.5"], &out, None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["n_paths"], 4);
    assert_eq!(m["config"]["seed"], 11);
    assert_eq!(m["master_seed"], 11);
    assert_eq!(m["config"]["grid"]["T"], 0.5);
    assert_eq!(m["config"]["grid"]["dt"], 0.1);
    let csv = fs::read_to_string(out.join("paths.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("member,time,x1,x2"));
    assert_eq!(csv.lines().count(), 1 + 4 * 6);
    assert!(!out.join("gaps.csv").exists());
    let o = conc_lab(&["simulate", "--config", &cfg, "--n", "3"], &out, None);
    assert_eq!(code(&o), 2);
}

#[test]
fn shard_layout_writes_one_file_per_member() {
    let tmp = TempDir::new().unwrap();
    let o = conc_lab(&["simulate", "--layout", "shards", "--paths", "3", "--T", "0.1", "--dt", "0.05"], tmp.path(), None);
    assert_eq!(code(&o), 0);
    for j in 0..3 {
        let f = tmp.path().join(format!("paths/member_{j:06}.csv"));
        assert_eq!(fs::read_to_string(f).unwrap().lines().count(), 4);
    }
    let m = json(&tmp.path().join("manifest.json"));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3 + 3 + 1);
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let m = json(&dir.join("manifest.json"));
    let mut files: Vec<(String, Vec<u8>)> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            let name = o["file"].as_str().unwrap().to_string();
            let bytes = fs::read(dir.join(&name)).unwrap();
            (name, bytes)
        })
        .collect();
    files.push(("manifest.json".into(), fs::read(dir.join("manifest.json")).unwrap()));
    files
}

#[test]
fn outputs_are_identical_across_thread_counts_and_reruns() {
    let tmp = TempDir::new().unwrap();
    let runs: &[&[&str]] = &[
        &["concentrate", "--thm1", "--n", "3", "--paths", "300", "--dt", "0.01", "--seed", "5"],
        &["localtimes", "--n", "3", "--paths", "50", "--dt", "0.01", "--write-paths"],
        &["transport", "--paths", "40", "--dt", "0.05"],
        &["simulate", "--paths", "20", "--dt", "0.01"],
        &["concentrate", "--martingale", "--n", "2", "--paths", "200", "--dt", "0.01"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut reference = None;
        for (k, threads) in [Some(1), Some(4), None, Some(4)].into_iter().enumerate() {
            let dir = tmp.path().join(format!("run{i}_{k}"));
            let o = conc_lab(args, &dir, threads);
            assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            let files = read_outputs(&dir);
            match &reference {
                None => reference = Some(files),
                Some(r) => assert!(r == &files, "{args:?} differs with threads {threads:?}"),
            }
        }
    }
}

#[test]
fn concentrate_writes_tail_reports_and_manifest_hashes() {
    let tmp = TempDir::new().unwrap();
    let o = conc_lab(&["concentrate", "--thm1", "--n", "2", "--paths", "200", "--dt", "0.01"], tmp.path(), None);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(tmp.path().join("tail_report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("r,tail,bound"));
    assert_eq!(csv.lines().count(), 13);
    let m = json(&tmp.path().join("manifest.json"));
    assert_eq!(m["config"]["mode"], "max_local_time");
    assert_eq!(m["config"]["scale_exponent"], 2.5);
    for out in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(tmp.path().join(out["file"].as_str().unwrap())).unwrap();
        let digest = {
            use sha2::Digest;
            format!("{:x}", sha2::Sha256::digest(&bytes))
        };
        assert_eq!(out["sha256"].as_str().unwrap(), digest);
    }
    let chi = fs::read_to_string(tmp.path().join("chi.csv")).unwrap();
    assert_eq!(chi.lines().count(), 201);
}

#[test]
fn max_local_time_experiment_reruns_byte_identically() {
    let tmp = TempDir::new().unwrap();
    let args = ["concentrate", "--thm1", "--n", "3", "--paths", "5000"];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&conc_lab(&args, &a, None)), 0);
    assert_eq!(code(&conc_lab(&args, &b, Some(3))), 0);
    let fa = read_outputs(&a);
    assert!(fa.iter().any(|(f, _)| f == "tail_report.csv"));
    assert!(fa == read_outputs(&b));
}
