use std::path::Path;
use std::process::{Command, Output};

fn brg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brg")).args(args).env_remove("BRG_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_names_every_experiment() {
    let o = brg(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for k in 1..=10 {
        assert!(text.lines().any(|l| l.starts_with(&format!("E{k} "))), "E{k} missing:\n{text}");
    }
}

#[test]
fn unknown_experiment_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = brg(&["run", "E11", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("E11"));
}

#[test]
fn usage_error_exits_2() {
    assert_eq!(brg(&["run"]).status.code(), Some(2));
    assert_eq!(brg(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn default_config_round_trips_through_validate() {
    let o = brg(&["default-config"]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("default.toml");
    std::fs::write(&path, &o.stdout).unwrap();
    let v = brg(&["validate-config", path.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0), "{}", stderr(&v));
    assert!(stdout(&v).contains("ok"));
}

#[test]
fn shipped_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let v = brg(&["validate-config", path.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0), "{}", stderr(&v));
    let hash = |o: &Output| stdout(o).rsplit_once("config hash ").unwrap().1.trim().trim_end_matches(')').to_string();
    let dir = tempfile::tempdir().unwrap();
    let dumped = dir.path().join("d.toml");
    std::fs::write(&dumped, brg(&["default-config"]).stdout).unwrap();
    assert_eq!(hash(&v), hash(&brg(&["validate-config", dumped.to_str().unwrap()])), "shipped file drifted from defaults");
}

#[test]
fn bad_weight_sum_is_rejected_with_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[sentinel]\nw_x = 0.5\nw_a = 0.3\nw_e = 0.4\n").unwrap();
    let v = brg(&["validate-config", path.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(5));
    assert!(stderr(&v).contains("w_x + w_a + w_e = 1"), "{}", stderr(&v));
}

#[test]
fn malformed_or_missing_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, "[sentinel]\nalpha_zero = 0.8\n").unwrap();
    assert_eq!(brg(&["validate-config", path.to_str().unwrap()]).status.code(), Some(4));
    let missing = dir.path().join("nope.toml");
    assert_eq!(brg(&["validate-config", missing.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn run_writes_grid_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/results");
    let o = brg(&["run", "E1", "--seeds", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["E1_grid.csv", "E1_trace.csv", "E1_summary.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
        assert!(stdout(&o).contains(f));
    }
}

#[test]
fn seed_precedence_on_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env: Option<&str>, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut c = Command::new(env!("CARGO_BIN_EXE_brg"));
        c.args(["run", "E1", "--seeds", "2", "--out", out.to_str().unwrap()]).args(extra).env_remove("BRG_SEED");
        if let Some(v) = env {
            c.env("BRG_SEED", v);
        }
        assert!(c.status().unwrap().success());
        std::fs::read(out.join("E1_grid.csv")).unwrap()
    };
    let base = run("base", None, &[]);
    let env = run("env", Some("99"), &[]);
    let flag = run("flag", None, &["--master-seed", "99"]);
    let det = run("det", Some("99"), &["--deterministic"]);
    assert_ne!(base, env);
    assert_eq!(env, flag);
    assert_eq!(det, base);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let run = |jobs: &str| {
        let out = dir.path().join(format!("jobs{jobs}"));
        let o = brg(&["run", "E10", "--seeds", "3", "--jobs", jobs, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        (std::fs::read(out.join("E10_grid.csv")).unwrap(), std::fs::read(out.join("E10_summary.json")).unwrap())
    };
    assert_eq!(run("1"), run("3"));
}
