use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bubblelab_harness::record::Summary;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bubblelab"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out-dir").arg(out).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A shipped config with `edit` applied to its text, written under `dir`.
fn edited(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = edit(fs::read_to_string(shipped(name)).unwrap());
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL_NOISY: &str = r#"
name = "small"
kind = "sweep"
dim = 1
blowup_time = 1.0
t_n = [0.5]
t_end = 0.0

[grid]
extent = 16.0
points = 512

[[bubbles]]
omega = 1.0
center = [0.0]
phase = 0.0

[controller]
dt_base = 5e-4
c_dt = 0.5
checkpoint_spacing = 0.025

[noise]
modes = 1
flatness = 5
envelope = 2.0
scale = 4.0
amplitude = 0.1
seed = 1
dt = 1e-3

[sweep]
seeds = [4, 5, 6]
child = "construct"
workers = 2
"#;

#[test]
fn construct_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["construct", shipped("d1_k1.toml").to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("d1_k1");
    let s = Summary::read(&dir).unwrap();
    assert_eq!(s.get("status"), Some("completed"));
    assert!((s.get_f64("omega_est_1").unwrap() - 1.0).abs() < 1e-2);
    for f in ["config.toml", "diagnostics.csv", "parameters.csv", "run.log", "checkpoints/index.txt"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }

    let r = bin().arg("report").arg(tmp.path()).output().unwrap();
    assert!(r.status.success(), "{}", stderr(&r));
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("## rate fits"));
    assert!(text.contains("## conservation drifts"));
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let off_box = edited(tmp.path(), "d1_k1.toml", |t| t.replace("center = [0.0]", "center = [15.0]"));
    let o = run(&["construct", off_box.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("margin rule"), "{}", stderr(&o));

    let o = run(&["construct", shipped("d1_k1.toml").to_str().unwrap(), "--seed", "3"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("noise.seed"));

    let o = run(&["pair", shipped("d1_k1.toml").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nkind = \"construct\"\nunknown = 1\n").unwrap();
    let o = run(&["construct", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn short_runs_report_no_fit_window() {
    let tmp = tempfile::tempdir().unwrap();
    let short = edited(tmp.path(), "d1_k1.toml", |t| t.replace("t_n = [0.75]", "t_n = [0.25]"));
    let o = run(&["construct", short.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let s = Summary::read(&tmp.path().join("d1_k1")).unwrap();
    assert_eq!(s.get("status"), Some("no_fit_window"));
}

#[test]
fn sweep_writes_one_child_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL_NOISY).unwrap();
    let o = run(&["sweep", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let parent = tmp.path().join("small");
    let s = Summary::read(&parent).unwrap();
    assert_eq!(s.get("children"), Some("3"));
    for seed in [4, 5, 6] {
        assert_eq!(s.get(&format!("child_{seed}")), Some("completed"));
        let child = Summary::read(&parent.join(format!("small_seed{seed}"))).unwrap();
        assert_eq!(child.get("kind"), Some("construct"));
    }
    let r = bin().arg("report").arg(&parent).output().unwrap();
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.matches("small_seed").count() >= 3, "{text}");
}

#[test]
fn report_of_nothing_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let r = bin().arg("report").arg(tmp.path()).output().unwrap();
    assert_eq!(r.status.code(), Some(1));
}
