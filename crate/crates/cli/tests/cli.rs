use std::path::Path;
use std::process::{Command, Output};

use evdkit::io::{load_symf, load_trid};

const HEADER: &str = "schema_version,stage,n,b,nb,workers,seconds,gflops,residual,seed";

fn evdkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evdkit")).args(args).env_remove("EVDKIT_WORKERS").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// CSV rows (header checked and dropped), split into fields.
fn rows(o: &Output) -> Vec<Vec<String>> {
    let text = stdout(o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(HEADER));
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

fn field(row: &[String], name: &str) -> String {
    let idx = HEADER.split(',').position(|h| h == name).unwrap();
    row[idx].clone()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tridiag_verify_small() {
    let o = evdkit(&[
        "tridiag",
        "--n",
        "64",
        "--bandwidth",
        "4",
        "--blocksize",
        "8",
        "--workers",
        "2",
        "--seed",
        "1",
        "--verify",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = rows(&o);
    let stages: Vec<_> = rows.iter().map(|r| field(r, "stage")).collect();
    assert_eq!(stages, ["dbr", "chase", "total"]);
    let residual: f64 = field(&rows[2], "residual").parse().unwrap();
    assert!(residual <= 1e-12);
    assert_eq!(field(&rows[0], "workers"), "2");
    assert_eq!(field(&rows[0], "seed"), "1");
}

#[test]
fn tridiag_of_two_by_two_is_identity_map() {
    let dir = tempfile::tempdir().unwrap();
    let a_path = dir.path().join("a.symf");
    let t_path = dir.path().join("t.trid");
    assert_eq!(evdkit(&["gen", "--n", "2", "--seed", "4", "--output", path_str(&a_path)]).status.code(), Some(0));
    let o = evdkit(&["tridiag", "--input", path_str(&a_path), "--output", path_str(&t_path), "--verify"]);
    assert_eq!(o.status.code(), Some(0));
    let a = load_symf(&a_path).unwrap();
    let t = load_trid(&t_path).unwrap();
    assert_eq!(t.diagonal(), &[a.get(0, 0), a.get(1, 1)]);
    assert_eq!(t.subdiagonal(), &[a.get(1, 0)]);
}

#[test]
fn bandwidth_equal_to_n_is_a_config_error() {
    let o = evdkit(&["tridiag", "--n", "64", "--bandwidth", "64"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));
}

#[test]
fn bad_arguments_are_config_errors() {
    for args in [
        &["tridiag", "--dist", "cauchy"][..],
        &["tridiag", "--n", "64", "--bandwidth", "8", "--blocksize", "12"],
        &["tridiag", "--workers", "0"],
        &["tridiag", "--n", "64,128"],
        &["gen", "--n", "8"],
        &["evd", "--n", "600", "--oracle"],
        &["tune", "--n", "64", "--bandwidth", "16", "--blocksize", "8"],
    ] {
        assert_eq!(evdkit(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn evd_oracle_agrees() {
    let o = evdkit(&["evd", "--n", "128", "--bandwidth", "8", "--oracle", "--verify"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = rows(&o);
    let eig = rows.iter().find(|r| field(r, "stage") == "eig").unwrap();
    let dev: f64 = field(eig, "residual").parse().unwrap();
    assert!(dev <= 1e-11);
    assert_eq!(field(eig, "gflops"), "NaN");
}

#[test]
fn evd_single_entry() {
    let dir = tempfile::tempdir().unwrap();
    let a_path = dir.path().join("a.symf");
    let out = dir.path().join("w.trid");
    evdkit(&["gen", "--n", "1", "--seed", "8", "--output", path_str(&a_path)]);
    let o = evdkit(&["evd", "--input", path_str(&a_path), "--output", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let a = load_symf(&a_path).unwrap();
    assert_eq!(load_trid(&out).unwrap().diagonal(), &[a.get(0, 0)]);
}

#[test]
fn evd_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p4) = (dir.path().join("w1.trid"), dir.path().join("w4.trid"));
    for (w, p) in [("1", &p1), ("4", &p4)] {
        let o =
            evdkit(&["evd", "--n", "256", "--bandwidth", "8", "--seed", "3", "--workers", w, "--output", path_str(p)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p4).unwrap());
}

#[test]
fn serial_chase_matches_pipelined_chase() {
    let dir = tempfile::tempdir().unwrap();
    let (ps, pp, pf) = (dir.path().join("s.trid"), dir.path().join("p.trid"), dir.path().join("f.trid"));
    let base = ["tridiag", "--n", "150", "--bandwidth", "6", "--blocksize", "24", "--workers", "3"];
    let run = |extra: &[&str], out: &Path| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--output", path_str(out)]);
        assert_eq!(evdkit(&args).status.code(), Some(0));
    };
    run(&["--serial-chase"], &ps);
    run(&[], &pp);
    run(&["--flat-panel-updates", "--accumulate-q"], &pf);
    assert_eq!(std::fs::read(&ps).unwrap(), std::fs::read(&pp).unwrap());
    let (tp, tf) = (load_trid(&pp).unwrap(), load_trid(&pf).unwrap());
    for (x, y) in tp.diagonal().iter().zip(tf.diagonal()) {
        assert!((x.abs() - y.abs()).abs() < 1e-10);
    }
}

#[test]
fn syr2k_bench_rows() {
    let o = evdkit(&["syr2k-bench", "--n", "96", "--k", "16,96", "--blocksize", "32,64"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = rows(&o);
    assert_eq!(rows.len(), 2 * 3);
    for r in &rows {
        assert_eq!(field(r, "stage"), "syr2k");
        if field(r, "nb") == "0" {
            assert_eq!(field(r, "residual"), "NaN");
        } else {
            assert!(field(r, "residual").parse::<f64>().unwrap() <= 1e-13);
        }
    }
    assert!(rows.iter().any(|r| field(r, "b") == "96"));
}

#[test]
fn tune_reports_grid_and_winner() {
    let o = evdkit(&["tune", "--n", "256", "--bandwidth", "4,8,16", "--blocksize", "32,64", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let objs: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(objs.len(), 7);
    let secs: Vec<f64> = objs.iter().map(|v| v["seconds"].as_f64().unwrap()).collect();
    let winner = secs[6];
    assert!(secs[..6].iter().all(|&s| winner <= s));
    assert!(objs.iter().all(|v| v["stage"] == "total" && v["residual"].is_null()));
}

#[test]
fn json_objects_follow_schema() {
    let o = evdkit(&["evd", "--n", "40", "--bandwidth", "4", "--format", "json", "--verify"]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().map(String::as_str).collect();
        keys.sort();
        let mut expected: Vec<_> = HEADER.split(',').collect();
        expected.sort();
        assert_eq!(keys, expected);
        assert_eq!(obj["schema_version"], 1);
        assert!(["dbr", "chase", "eig", "total"].contains(&obj["stage"].as_str().unwrap()));
        assert!(obj["seconds"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn verify_suite_passes() {
    let o = evdkit(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 30);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));

    let o = evdkit(&["verify", "--n", "1"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn corrupted_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("a.symf");
    let bad = dir.path().join("bad.symf");
    evdkit(&["gen", "--n", "6", "--output", path_str(&good)]);
    let bytes = std::fs::read(&good).unwrap();
    std::fs::write(&bad, &bytes[..bytes.len() - 5]).unwrap();
    for cmd in ["verify", "tridiag", "evd"] {
        let o = evdkit(&[cmd, "--input", path_str(&bad)]);
        assert_eq!(o.status.code(), Some(3), "{cmd}");
    }
    let missing = dir.path().join("missing.symf");
    assert_eq!(evdkit(&["tridiag", "--input", path_str(&missing)]).status.code(), Some(3));
}

#[test]
fn workers_fall_back_to_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_evdkit"));
        c.args(args);
        match env {
            Some(v) => c.env("EVDKIT_WORKERS", v),
            None => c.env_remove("EVDKIT_WORKERS"),
        };
        c.output().unwrap()
    };
    let o = run(Some("3"), &["tridiag", "--n", "50", "--bandwidth", "4"]);
    assert_eq!(field(&rows(&o)[0], "workers"), "3");
    let o = run(Some("3"), &["tridiag", "--n", "50", "--bandwidth", "4", "--workers", "2"]);
    assert_eq!(field(&rows(&o)[0], "workers"), "2");
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y, z) = (dir.path().join("x"), dir.path().join("y"), dir.path().join("z"));
    for (p, seed) in [(&x, "5"), (&y, "5"), (&z, "6")] {
        let o = evdkit(&["gen", "--n", "20", "--dist", "uniform", "--seed", seed, "--output", path_str(p)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&y).unwrap());
    assert_ne!(std::fs::read(&x).unwrap(), std::fs::read(&z).unwrap());
    let w = dir.path().join("w");
    evdkit(&["gen", "--n", "7", "--dist", "wilkinson", "--output", path_str(&w)]);
    assert_eq!(load_symf(&w).unwrap().get(0, 0), 3.0);
}
