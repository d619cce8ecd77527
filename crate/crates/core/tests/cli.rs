use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_blowup1d");

fn blowup1d(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SHORT_RUN: &str = "m = 1\np = 1.5\nt_end = 0.3\nn = 20\nsnapshot_times = 0.1, 0.3\n";

#[test]
fn run_writes_trace_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.cfg", SHORT_RUN);
    let out = blowup1d(&["run", &cfg, "--out", "result"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("q = 0.5"));
    let result = dir.path().join("result");
    let trace = fs::read_to_string(result.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,dt,sup_u,sup_v,l1_v,s_minus,s_plus,lemma23_slack,eq210_slack\n"));
    for snap in ["snapshot_0.1.csv", "snapshot_0.3.csv"] {
        assert!(fs::read_to_string(result.join(snap)).unwrap().starts_with("x,u\n"));
    }
    let summary = fs::read_to_string(result.join("summary.txt")).unwrap();
    assert!(summary.contains("termination = horizon"));
    assert!(summary.contains("T1 = 2.0000000000000000e0"));
}

#[test]
fn identical_configs_give_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.cfg", SHORT_RUN);
    assert!(blowup1d(&["run", &cfg, "--out", "a"], dir.path()).status.success());
    assert!(blowup1d(&["run", &cfg, "--out", "b"], dir.path()).status.success());
    for file in ["trace.csv", "snapshot_0.1.csv", "snapshot_0.3.csv", "summary.txt"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn hat_config_blows_up() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hat.cfg", "m = 1\np = 1.5\nt_end = 10\nn = 40\ninitial = hat\n");
    let out = blowup1d(&["run", &cfg], dir.path());
    assert!(out.status.success());
    let summary = fs::read_to_string(dir.path().join("hat_output/summary.txt")).unwrap();
    assert!(summary.contains("termination = blowup"));
    assert!(summary.contains("blowup_detected = true"));
    assert!(!summary.contains("crossing_1e6 = none"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("regime.cfg", "m = 1\np = 2.0\nt_end = 1\n", "outside the admissible range"),
        ("missing.cfg", "p = 1.5\nt_end = 1\n", "missing required key `m`"),
        ("unknown.cfg", "m = 1\np = 1.5\nt_end = 1\nspeed = 3\n", "line 4: unknown key `speed`"),
    ];
    for (name, text, message) in cases {
        let cfg = write(dir.path(), name, text);
        let out = blowup1d(&["run", &cfg], dir.path());
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(message), "{name}");
    }
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = blowup1d(&["run", "does_not_exist.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn strict_mode_run_succeeds_when_bounds_hold() {
    let dir = tempfile::tempdir().unwrap();
    let text = "m = 1\np = 1.5\nt_end = 10\nn = 10\nstrict = true\n";
    let cfg = write(dir.path(), "strict.cfg", text);
    let out = blowup1d(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn certify_reports_certificate_or_its_absence() {
    let dir = tempfile::tempdir().unwrap();
    let fine = write(dir.path(), "fine.cfg", "m = 1\np = 1.5\nt_end = 10\nn = 100\n");
    let out = blowup1d(&["certify", &fine], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("certificate found"));
    assert!(text.contains("T_star = "));

    let coarse = write(dir.path(), "coarse.cfg", "m = 1\np = 1.5\nt_end = 10\nn = 1\n");
    let out = blowup1d(&["certify", &coarse], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("no certificate at this mesh"));
    let delta: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("delta = "))
        .and_then(|v| v.parse().ok())
        .unwrap();
    assert!(delta >= 1.0);

    let zero = write(dir.path(), "zero.cfg", "m = 1\np = 1.5\nt_end = 10\ninitial_peak = 0\n");
    assert_eq!(blowup1d(&["certify", &zero], dir.path()).status.code(), Some(2));
}

#[test]
fn sweep_uses_one_directory_per_config() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    fs::create_dir(&configs).unwrap();
    write(&configs, "first.cfg", SHORT_RUN);
    write(&configs, "second.cfg", &SHORT_RUN.replace("m = 1", "m = 2"));
    write(&configs, "notes.txt", "ignored");
    let out = blowup1d(&["sweep", "configs", "--out", "swept"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for stem in ["first", "second"] {
        assert!(dir.path().join("swept").join(stem).join("trace.csv").exists());
    }
    assert!(!dir.path().join("swept/notes").exists());
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = blowup1d(&["selftest"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("pass ")).count(), 3);
}
