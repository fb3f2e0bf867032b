//! Black-box tests of the `fedsched` binary: exit codes, file outputs, and
//! the determinism contract as seen from the command line.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedsched"))
}

fn write_config(dir: &Path, name: &str, extra: &str) -> String {
    let path = dir.join(name);
    let base = "\
# small deterministic run
clients = 6
rbs = 3
horizon = 12
samples_per_class = 40
seed = 9
";
    std::fs::write(&path, format!("{base}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn run_writes_csv_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    let config = write_config(dir.path(), "run.cfg", "");

    let stdout_a = run_ok(bin().args([
        "run",
        "--config",
        &config,
        "--set",
        &format!("output={}", out_a.display()),
    ]))
    .stdout;
    run_ok(bin().args([
        "run",
        "--config",
        &config,
        "--set",
        &format!("output={}", out_b.display()),
    ]));

    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "identical config+seed must give byte-identical CSV");

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        fedsched::harness::CSV_HEADER,
        "CSV header mismatch"
    );
    assert_eq!(lines.count(), 12, "one row per round");
    assert!(String::from_utf8_lossy(&stdout_a).contains("final gap"));
}

#[test]
fn channel_trace_is_policy_independent() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.cfg", "");
    let trace_a = dir.path().join("qaw.trace");
    let trace_b = dir.path().join("random.trace");

    for (policy, trace) in [("QAW", &trace_a), ("RANDOM", &trace_b)] {
        run_ok(bin().args([
            "run",
            "--config",
            &config,
            "--set",
            &format!("policy={policy}"),
            "--set",
            &format!("output={}", dir.path().join(policy).display()),
            "--set",
            &format!("channel_trace={}", trace.display()),
        ]));
    }
    assert_eq!(
        std::fs::read(&trace_a).unwrap(),
        std::fs::read(&trace_b).unwrap(),
        "changing the policy must not change the channel realization"
    );
}

#[test]
fn sweep_emits_summary_and_per_run_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let config = write_config(
        dir.path(),
        "sweep.cfg",
        &format!("output = {}\n", out.display()),
    );

    let stdout = run_ok(bin().args([
        "sweep",
        "--config",
        &config,
        "--axis",
        "rbs",
        "--values",
        "2,3",
        "--seeds",
        "2",
    ]))
    .stdout;
    let summary = String::from_utf8(stdout).unwrap();
    assert!(summary.starts_with("axis,value,seeds,mean_gap,std_gap"));
    assert_eq!(summary.lines().count(), 3, "one summary line per value");

    let rows = std::fs::read_to_string(&out).unwrap();
    // header + 2 values × 2 seeds × 12 rounds
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 12);
}

#[test]
fn baseline_prints_f0() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "base.cfg", "");
    let out = run_ok(bin().args(["baseline", "--config", &config])).stdout;
    let text = String::from_utf8(out).unwrap();
    let value: f64 = text.trim().strip_prefix("F0 = ").unwrap().parse().unwrap();
    assert!(value.is_finite() && value >= 0.0);
}

#[test]
fn exit_codes_distinguish_config_errors() {
    let dir = tempfile::tempdir().unwrap();

    // missing config file
    let out = bin().args(["run", "--config", "/nonexistent.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // unknown key
    let config = write_config(dir.path(), "bad.cfg", "no_such_field = 1\n");
    let out = bin().args(["run", "--config", &config]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_field"));

    // bad --set syntax
    let config = write_config(dir.path(), "ok.cfg", "");
    let out = bin()
        .args(["run", "--config", &config, "--set", "beta"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // unknown sweep axis
    let out = bin()
        .args([
            "sweep", "--config", &config, "--axis", "bogus", "--values", "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
