use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn retsim(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retsim"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("retsim runs")
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn bundled_case1_succeeds_and_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = retsim(&["run", &scenario("relaxation.cfg")], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("relaxation.csv"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("relaxation.csv")).unwrap();
    assert!(csv.starts_with("t_bar,"));
    assert_eq!(csv.lines().count(), 502);
    assert!(dir.path().join("relaxation.svg").exists());
    assert!(dir.path().join("relaxation.meta.cfg").exists());
}

#[test]
fn config_errors_exit_with_2_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(
        &cfg,
        "[scenario]\nkind = case1\n[material]\nm = 0.7\nk = 1\ncolour = red\n[protocol]\nt_end = 1\n",
    )
    .unwrap();
    let out = retsim(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.cfg:6") && stderr.contains("colour"), "{stderr}");
}

#[test]
fn sweep_subcommand_rejects_other_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = retsim(&["sweep", &scenario("steady_shear.cfg")], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_sweep_rows_exit_with_3_but_keep_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("starved.cfg");
    fs::write(
        &cfg,
        "[scenario]\nkind = sweep\n[material]\nm = 0.7\nk = conventional\n\
         [protocol]\nvx0 = 0.1\nt_end = 30\n[solver]\nmax_steps = 5\n\
         [sweep]\naxis = tau0\nvalues = 0.1, 0.01\n",
    )
    .unwrap();
    let out = retsim(&["sweep", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("starved.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.contains("failed")), "{csv}");
}

#[test]
fn unwritable_output_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("not_a_dir");
    fs::write(&blocker, "").unwrap();
    let out = retsim(&["run", &scenario("relaxation.cfg")], &blocker);
    assert_eq!(out.status.code(), Some(1));
}
