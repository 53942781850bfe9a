//! Black-box checks of the binary: exit codes, output shapes, and the
//! error paths a script would depend on.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rrit")
}

fn rrit(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn generate(dir: &Path, name: &str, n: usize, seed: u64) -> (String, String) {
    let x = dir.join("x.csv").to_str().unwrap().to_string();
    let y = dir.join("y.csv").to_str().unwrap().to_string();
    let out = rrit(&[
        "generate", name, "--n", &n.to_string(), "--seed", &seed.to_string(), "--x-out", &x,
        "--y-out", &y,
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    (x, y)
}

#[test]
fn dependent_sample_rejects_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = generate(dir.path(), "two_parabolas", 50, 7);
    let out = rrit(&["test", &x, &y, "--perms", "199", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(3));
    let text = stdout_of(&out);
    assert!(text.contains("reject independence"), "{text}");
}

#[test]
fn independent_sample_accepts_with_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    // Generator seed pinned to an accepting draw; at the 5% level one
    // independent sample in twenty legitimately rejects.
    let (x, y) = generate(dir.path(), "four_clouds", 40, 3);
    let out = rrit(&["test", &x, &y, "--perms", "99", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout_of(&out));
    assert!(stdout_of(&out).contains("fail to reject"));
}

#[test]
fn fixed_weights_echo_their_moments_in_json() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = generate(dir.path(), "circle", 30, 2);
    let out = rrit(&[
        "test", &x, &y, "--perms", "19", "--seed", "5", "--weights", "N(1,4)xN(0,1)", "--json",
    ]);
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(parsed["weight"]["g1"]["mu"], 1.0);
    assert_eq!(parsed["weight"]["g1"]["sigma2"], 4.0);
    assert_eq!(parsed["weight"]["g2"]["mu"], 0.0);
    assert_eq!(parsed["weight"]["g2"]["sigma2"], 1.0);
    assert_eq!(parsed["m"], 19);
}

#[test]
fn sup_statistic_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = generate(dir.path(), "two_parabolas", 40, 1);
    let out = rrit(&["test", &x, &y, "--stat", "sup", "--perms", "99", "--seed", "2", "--json"]);
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(parsed["statistic"]["kind"], "sup");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn header_flag_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv").to_str().unwrap().to_string();
    let y = dir.path().join("y.csv").to_str().unwrap().to_string();
    let out = rrit(&[
        "generate", "ar1", "--n", "20", "--seed", "4", "--param", "phi=0.5", "--x-out", &x,
        "--y-out", &y, "--header",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let first = std::fs::read_to_string(&x).unwrap().lines().next().unwrap().to_string();
    assert!(first.starts_with("c1,"), "{first}");
    let out = rrit(&["test", &x, &y, "--header", "--perms", "19", "--seed", "1"]);
    assert!([Some(0), Some(3)].contains(&out.status.code()), "{}", stderr_of(&out));
}

#[test]
fn distance_tables_are_accepted_and_exclude_normal_scores() {
    let dir = tempfile::tempdir().unwrap();
    let table = "0,1,2,3\n1,0,1,2\n2,1,0,1\n3,2,1,0\n";
    let x = dir.path().join("dx.csv");
    let y = dir.path().join("dy.csv");
    std::fs::write(&x, table).unwrap();
    std::fs::write(&y, table).unwrap();
    let (x, y) = (x.to_str().unwrap(), y.to_str().unwrap());
    let out = rrit(&["test", x, y, "--distance-tables", "--perms", "19", "--seed", "1"]);
    assert!([Some(0), Some(3)].contains(&out.status.code()), "{}", stderr_of(&out));
    let out = rrit(&["test", x, y, "--distance-tables", "--normal-scores", "--perms", "19"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("point inputs"), "{}", stderr_of(&out));
}

#[test]
fn malformed_input_reports_position_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    std::fs::write(&x, "1.0\n2.0\nnot-a-number\n4.0\n").unwrap();
    let y = dir.path().join("y.csv");
    std::fs::write(&y, "1.0\n2.0\n3.0\n4.0\n").unwrap();
    let out = rrit(&["test", x.to_str().unwrap(), y.to_str().unwrap(), "--perms", "19"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("row 3"), "{err}");
}

#[test]
fn missing_file_exits_1() {
    let out = rrit(&["test", "/nonexistent/a.csv", "/nonexistent/b.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("a.csv"));
}

#[test]
fn power_emits_csv_header_and_json_parses() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "alternatives": [{"name": "two_parabolas"}],
            "tests": [{"test": "rr_cvm", "weights": ["N(1,1)"]}],
            "n_values": [20],
            "power_reps": 10,
            "perm_m": 19,
            "calibration": "permutation",
            "master_seed": 5
        })
        .to_string(),
    )
    .unwrap();
    let config = config.to_str().unwrap();
    let out = rrit(&["power", config]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.starts_with("alternative,n,test,weight,power,se,reps,elapsed\n"), "{text}");

    let out = rrit(&["power", config, "--json"]);
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(parsed["rows"][0]["test"], "rr_cvm");
    assert_eq!(parsed["rows"][0]["reps"], 10);
}

#[test]
fn bad_config_field_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    std::fs::write(
        &config,
        r#"{"alternatives": [{"name": "circle"}], "tests": [{"test": "rr_cvm", "weights": ["auto"]}], "n_values": [20], "power_reps": "lots", "master_seed": 5}"#,
    )
    .unwrap();
    let out = rrit(&["power", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("power_reps"), "{}", stderr_of(&out));
}

#[test]
fn sigma2_curve_and_max_agree() {
    let out = rrit(&["sigma2", "--r-max", "3", "--points", "60"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,sigma"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (r, s) = l.split_once(',').unwrap();
            (r.parse().unwrap(), s.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 61);
    assert_eq!(rows[0], (0.0, 0.0));
    let curve_max = rows.iter().map(|r| r.1).fold(0.0f64, f64::max);

    let out = rrit(&["sigma2", "--max"]);
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    let max = parsed["max"].as_f64().unwrap();
    assert!(parsed["argmax"].as_f64().unwrap() > 0.0);
    assert!(max >= curve_max && max - curve_max < 1e-3, "{max} vs {curve_max}");
}

#[test]
fn validate_failures_exit_2() {
    let out = rrit(&["validate", "envelope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout_of(&out).contains("one_sided_envelope"));

    let out = rrit(&["validate", "sigma2", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert!(parsed.as_array().unwrap().iter().all(|r| r["passed"] == true));
}

#[test]
fn env_var_sets_the_default_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = generate(dir.path(), "circle", 30, 6);
    let flag = rrit(&["--threads", "2", "test", &x, &y, "--perms", "49", "--seed", "3", "--json"]);
    let env = Command::new(bin())
        .env("RRIT_THREADS", "2")
        .args(["test", &x, &y, "--perms", "49", "--seed", "3", "--json"])
        .output()
        .unwrap();
    assert_eq!(flag.stdout, env.stdout);
    assert_eq!(flag.status.code(), env.status.code());

    let bad = Command::new(bin())
        .env("RRIT_THREADS", "many")
        .args(["test", &x, &y, "--perms", "49"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr_of(&bad).contains("RRIT_THREADS"));
}

#[test]
fn bad_generate_parameter_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv").to_str().unwrap().to_string();
    let y = dir.path().join("y.csv").to_str().unwrap().to_string();
    let out = rrit(&[
        "generate", "ar1", "--n", "20", "--param", "phi=abc", "--x-out", &x, "--y-out", &y,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("phi"), "{}", stderr_of(&out));

    let out = rrit(&[
        "generate", "ar1", "--n", "20", "--param", "bogus=1", "--x-out", &x, "--y-out", &y,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("bogus"), "{}", stderr_of(&out));
}
