use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_toda-ghd"));
    cmd.env_remove("TODA_GHD_OUT").env("RUST_LOG", "error");
    cmd
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn report(dir: &Path, experiment: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{experiment}-report.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn passing_run_exits_zero_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"experiment": "conservation", "beta": 1, "theta": 0.5, "N": 64, "T": 2, "seeds": [1, 2]}"#);
    let out_dir = tmp.path().join("out");
    let out = bin().args(["conservation", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS eig_drift"));
    assert_eq!(report(&out_dir, "conservation")["experiment"], "conservation");
    let seeds = std::fs::read_to_string(out_dir.join("conservation-seeds.jsonl")).unwrap();
    assert_eq!(seeds.lines().count(), 2);
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "p.json", r#"{"experiment": "proxy", "beta": 1, "theta": 0.1, "N": 128, "T": 4, "snapshots": 5, "seeds": [1]}"#);
    let out = bin().args(["proxy", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL margin_positive_fraction"));
}

#[test]
fn errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.json");
    let out = bin().args(["conservation", "--config"]).arg(&missing).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 2);

    let cfg = write(tmp.path(), "c.json", r#"{"experiment": "dos", "beta": 1, "theta": 1, "N": 64, "seeds": [1]}"#);
    let out = bin().args(["conservation", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"dos\""));

    let out = bin().args(["warp-drive", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 2);

    let bad = write(tmp.path(), "bad.json", r#"{"beta": 1, "theta": 1, "N": 64, "seeds": [1], "typo": 3}"#);
    let out = bin().args(["dos", "--config"]).arg(&bad).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn env_sets_default_output_and_seed_offset_shifts_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"beta": 1, "theta": 0.5, "N": 64, "T": 1, "seeds": [1]}"#);
    let env_dir = tmp.path().join("from-env");
    let out = bin().env("TODA_GHD_OUT", &env_dir).args(["conservation", "--config"]).arg(&cfg).args(["--seed-offset", "10", "--threads", "1"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let r = report(&env_dir, "conservation");
    assert_eq!(r["config"]["seeds"], serde_json::json!([11]));
}

#[test]
fn emit_veff_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"experiment": "conservation", "beta": 1, "theta": 1, "N": 32, "T": 1, "seeds": [3]}"#);
    let out = bin().args(["conservation", "--emit-veff", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("veff.csv")).unwrap();
    assert!(csv.lines().count() > 100);
}
