use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_frameharm"));
    for (k, _) in std::env::vars() {
        if k.starts_with("FRAMEHARM_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn operator_json(diag: &[f64]) -> String {
    let n = diag.len();
    let re: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|l| if k == l { diag[k] } else { 0.0 }).collect()).collect();
    let im = vec![vec![0.0; n]; n];
    serde_json::json!({"n": n, "re": re, "im": im}).to_string()
}

const Z1_FOURTH: &str = r#"[{"alpha":[2,0,0],"beta":[2,0,0],"re":1,"im":0}]"#;

#[test]
fn verify_diagonal_operator() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.json", &operator_json(&[1.0, 2.0, 3.0]));
    let out = run(&["verify-frame", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rep: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rep["passed"], true);
    let w = rep["result"]["weight"][0].as_f64().unwrap();
    assert!((w - 6.0).abs() < 1e-10);
    assert_eq!(rep["config"]["seed"], 0);
    assert!(rep["version"].as_str().unwrap().starts_with('v'));
    assert_eq!(rep["tolerances"]["mc_sigmas"], 4.0);
}

#[test]
fn verify_identity_reconstructs_identity() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "i.json", &operator_json(&[1.0, 1.0, 1.0, 1.0]));
    let out = run(&["verify-frame", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rep: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let re = &rep["result"]["reconstruction"]["re"];
    for k in 0..4 {
        for l in 0..4 {
            let want = if k == l { 1.0 } else { 0.0 };
            assert!((re[k][l].as_f64().unwrap() - want).abs() < 1e-10);
        }
    }
}

#[test]
fn verify_fourth_power_samples_fails_with_top_component() {
    let dir = tempfile::tempdir().unwrap();
    let poly = write(dir.path(), "f.json", Z1_FOURTH);
    let csv = dir.path().join("f.csv");
    let out = run(&["sample", "--input", poly.to_str().unwrap(), "--samples", "20000", "--seed", "3", "--output", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["verify-frame", "--input", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let rep: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rep["passed"], false);
    let flagged: Vec<(u64, u64)> = rep["result"]["residual"]["components"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["significant"] == true)
        .map(|c| (c["p"].as_u64().unwrap(), c["q"].as_u64().unwrap()))
        .collect();
    assert!(flagged.contains(&(2, 2)), "{flagged:?}");
}

#[test]
fn decompose_examples() {
    let dir = tempfile::tempdir().unwrap();
    let one = write(dir.path(), "one.json", &operator_json(&[1.0, 1.0, 1.0]));
    let out = run(&["decompose", "--input", one.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,q,dim,component_l2_norm");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,0,1,"));
    let norm: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    assert!((norm - 1.0).abs() < 1e-12);

    let traceless = write(dir.path(), "t.json", &operator_json(&[1.0, -1.0, 0.0]));
    let text = stdout(&run(&["decompose", "--input", traceless.to_str().unwrap()]));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("1,1,8,"));

    // |z_1|^2: (0,0) norm 1/3, (1,1) norm sqrt(1/3 − 1/9) by moments
    let z1 = write(dir.path(), "z1.json", &operator_json(&[1.0, 0.0, 0.0]));
    let text = stdout(&run(&["decompose", "--input", z1.to_str().unwrap()]));
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 2);
    let get = |p: &str, q: &str| -> f64 {
        rows.iter().find(|r| r[0] == p && r[1] == q).unwrap()[3].parse().unwrap()
    };
    assert!((get("0", "0") - 1.0 / 3.0).abs() < 1e-12);
    assert!((get("1", "1") - (1.0f64 / 6.0 - 1.0 / 9.0).sqrt()).abs() < 1e-12);
}

#[test]
fn zonal_table_rows() {
    let out = run(&["zonal-table", "--n", "3", "--max-bidegree", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,q,R1,R0,sum");
    assert!(lines.contains(&"0,0,1,1,3"));
    assert!(lines.contains(&"1,1,4,-2,0"));
    assert!(lines.contains(&"1,0,2,0,2"));
    let zero_rows: Vec<&&str> = lines[1..].iter().filter(|l| l.ends_with(",0")).collect();
    assert_eq!(zero_rows, vec![&"1,1,4,-2,0"]);
}

#[test]
fn character_check_passes() {
    let out = run(&["character-check", "--n", "3", "--samples", "20000", "--bidegrees", "0,0;1,1;2,0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = rep["result"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    let trivial = &rows[0];
    assert_eq!(trivial["mean"][0].as_f64().unwrap(), 1.0);
    assert_eq!(trivial["stderr"].as_f64().unwrap(), 0.0);
}

#[test]
fn gleason_demo_flags_non_positive_input() {
    let dir = tempfile::tempdir().unwrap();
    let third = write(dir.path(), "t.json", &operator_json(&[1.0, 1.0, 1.0]));
    let out = run(&["gleason-demo", "--input", third.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rep: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rank1 = rep["result"]["projectors"][0]["measure"][0].as_f64().unwrap();
    assert!((rank1 - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(rep["result"]["positive"], true);

    let neg = write(dir.path(), "n.json", &operator_json(&[2.0, -0.5, 0.5]));
    let out = run(&["gleason-demo", "--input", neg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rep: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rep["result"]["positive"], false);
    assert!(rep["result"]["additivity"]["warning"].as_str().unwrap().contains("negative"));
    assert!(rep["result"]["additivity"]["max_error"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn usage_and_parse_errors() {
    let out = run(&["zonal-table", "--n", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "re_1,re_2,re_3,im_1,im_2,im_3,f_re,f_im\n1,0,0,0,0,0,1,0\n1,0,zz,0,0,0,1,0\n");
    let out = run(&["verify-frame", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("re_3"), "{err}");
    let bad = write(dir.path(), "bad.json", r#"{"n": 3, "re": [[1]], "im": []}"#);
    assert_eq!(run(&["verify-frame", "--input", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["verify-frame"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
}

#[test]
fn resource_guard_exit_code() {
    let out = run(&["character-check", "--n", "5", "--bidegrees", "4,4", "--samples", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn environment_mirrors_flags_and_flags_win() {
    let out = bin().args(["zonal-table", "--max-bidegree", "1"]).env("FRAMEHARM_N", "4").output().unwrap();
    assert!(stdout(&out).contains("0,0,1,1,4"));
    let out = bin()
        .args(["zonal-table", "--max-bidegree", "1", "--n", "5"])
        .env("FRAMEHARM_N", "4")
        .output()
        .unwrap();
    assert!(stdout(&out).contains("0,0,1,1,5"));
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.json", &operator_json(&[0.5, 0.25, 0.25]));
    let args = ["verify-frame", "--input", input.to_str().unwrap(), "--seed", "11", "--workers", "2"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let args = ["character-check", "--samples", "5000", "--seed", "4", "--workers", "3"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let poly = write(dir.path(), "f.json", Z1_FOURTH);
    let args = ["sample", "--input", poly.to_str().unwrap(), "--samples", "50", "--seed", "9"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}
