use std::path::Path;
use std::process::{Command, Output};

fn effdim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effdim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EFFDIM_OUT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = effdim(&["double-descent-linear", "--seeds", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn unknown_key_and_bad_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = effdim(&["contraction-curve", "--seed", "1", "--set", "colour=red"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
    let o = effdim(&["contraction-curve", "--seed", "1", "--set", "k=many"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = effdim(&["no-such-command"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.cfg"), "k 10\n").unwrap();
    let o = effdim(&["contraction-curve", "--seed", "1", "--config", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_output_root_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = effdim(&["contraction-curve", "--seed", "1", "--n-max", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("effdim-out/contraction-curve/contraction.csv").exists());

    let root = dir.path().join("elsewhere");
    let o = Command::new(env!("CARGO_BIN_EXE_effdim"))
        .args(["contraction-curve", "--seed", "1", "--n-max", "3"])
        .current_dir(dir.path())
        .env("EFFDIM_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(root.join("contraction-curve/manifest.json").exists());
}

#[test]
fn config_file_flags_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# contraction\nseed = 9\nk = 30\nn_max = 8\nalpha=2\n").unwrap();
    let o = effdim(&["contraction-curve", "--config", "run.cfg", "--n-max", "4", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("o/contraction.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
    assert!(csv.starts_with("n,n_eff_covariance,n_eff_hessian,contraction,identity_residual\n"));

    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["k"], "30");
    assert_eq!(m["config"]["n_max"], "4");
    assert_eq!(m["config"]["alpha"], "2");
    assert_eq!(m["config_file_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["outputs"][0]["path"], "contraction.csv");
}

#[test]
fn theorem_check_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = effdim(&["theorem-check", "--seed", "7", "--k", "60", "--n", "10", "--alpha", "1", "--out", "t"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("t/theorem.json")).unwrap()).unwrap();
    assert_eq!(r["prior_variance_eigenvalues"], 50);
    assert_eq!(r["pass"], true);
    let o = effdim(&["theorem-check", "--seed", "7", "--k", "5", "--n", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn double_descent_columns() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["double-descent-linear", "--seed", "2", "--seeds", "2", "--k-max", "30", "--k-step", "10", "--n", "20"];
    let o = effdim(&[&args[..], &["--out", "d"]].concat(), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("d/double_descent.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,seed,train_loss,test_loss,n_eff"));
    assert_eq!(lines.count(), 3 * 2);
}

#[test]
fn correlate_rejects_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = effdim(&["correlate", "--input", "nope.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
