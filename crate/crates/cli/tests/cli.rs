use std::path::Path;
use std::process::{Command, Output};

fn lady(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lady")).current_dir(dir).env_remove("LADY_SEED").args(args).output().unwrap()
}

#[test]
fn demo_then_score_gives_pdms_in_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = lady(dir.path(), &["demo", "--frames", "4", "--seed", "42", "--out", "traj.json", "--scene-out", "scene.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = lady(dir.path(), &["score", "--traj", "traj.json", "--scene", "scene.json", "--out", "report.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "scene,trajectory,nc,dac,ttc,comfort,ep,pdms");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let pdms: f64 = row[7].parse().unwrap();
    assert!((0.0..=1.0).contains(&pdms));
}

#[test]
fn equiv_is_deterministic_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let a = lady(dir.path(), &["equiv", "--seed", "42"]);
    let b = lady(dir.path(), &["equiv", "--seed", "42"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("0 failed"));
}

#[test]
fn bench_writes_expected_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = lady(dir.path(), &["bench", "--frames", "1,2", "--mode", "both", "--trials", "1", "--repeats", "1", "--out", "bench.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "frames,mode,latency_ms,state_bytes,wall_ms");
    assert_eq!(lines.count(), 4);
}

#[test]
fn seed_env_var_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: Option<&str>, name: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lady"));
        cmd.current_dir(dir.path()).env_remove("LADY_SEED").args(["gen-trajs", "--n", "5", "--out", name]);
        if let Some(s) = seed {
            cmd.env("LADY_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let default = run(None, "a.json");
    assert_eq!(run(Some("42"), "b.json"), default);
    assert_ne!(run(Some("7"), "c.json"), default);
}

#[test]
fn cluster_writes_k_anchors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(lady(dir.path(), &["gen-trajs", "--n", "50", "--out", "t.json"]).status.success());
    assert!(lady(dir.path(), &["cluster", "--data", "t.json", "--k", "5", "--out", "a.json"]).status.success());
    let text = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    assert_eq!(text.matches("\"dt\"").count(), 5);
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let usage = lady(dir.path(), &["demo", "--no-such-flag"]);
    let missing = lady(dir.path(), &["score", "--traj", "x.json", "--scene", "y.json"]);
    assert!(lady(dir.path(), &["gen-trajs", "--n", "3", "--out", "t.json"]).status.success());
    let too_few = lady(dir.path(), &["cluster", "--data", "t.json", "--k", "10"]);
    std::fs::write(dir.path().join("bad.json"), "{not json").unwrap();
    let bad_json = lady(dir.path(), &["cluster", "--data", "bad.json", "--k", "1"]);
    let codes: Vec<i32> = [&usage, &missing, &too_few, &bad_json].iter().map(|o| o.status.code().unwrap()).collect();
    assert!(codes.iter().all(|&c| c != 0), "{codes:?}");
    let mut unique = codes.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), codes.len(), "{codes:?}");
    assert!(String::from_utf8_lossy(&usage.stderr).contains("Usage"));
}
