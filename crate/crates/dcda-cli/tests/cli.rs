//! End-to-end tests running the actual binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dcda_cli::config::parse_config;

fn dcda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcda"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary launches")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_RUN: &str = "problem.family = linreg\nproblem.n = 4\nproblem.m = 6\nproblem.d = 5\ngraph.kind = full\npolicy.kind = static\nchannel.kind = perfect\nT = 40\nseed = 11\n";

#[test]
fn run_writes_trace_and_reparsable_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.cfg"), SMALL_RUN).unwrap();
    let out = dcda(dir.path(), &["run", "exp.cfg"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let trace = fs::read_to_string(dir.path().join("exp.trace.csv")).unwrap();
    assert!(trace.starts_with("t,node,f_gap,dual_consensus,primal_spread,gbar_norm,alpha\n"));
    let rows = dcda::engine::read_trace_csv(trace.as_bytes()).unwrap();
    assert_eq!(rows.last().unwrap().t, 40);

    // The sidecar must parse back into the resolved config.
    let sidecar = fs::read_to_string(dir.path().join("exp.trace.csv.meta")).unwrap();
    let side_cfg = parse_config(&sidecar).expect("sidecar re-parses");
    let mut orig = parse_config(SMALL_RUN).unwrap();
    orig.trace_path = Some("exp.trace.csv".to_string());
    assert_eq!(side_cfg, orig);
}

#[test]
fn identical_configs_produce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.cfg"), SMALL_RUN).unwrap();
    fs::write(dir.path().join("b.cfg"), SMALL_RUN).unwrap();
    assert_eq!(dcda(dir.path(), &["run", "a.cfg"]).status.code(), Some(0));
    assert_eq!(dcda(dir.path(), &["run", "b.cfg"]).status.code(), Some(0));
    let a = fs::read(dir.path().join("a.trace.csv")).unwrap();
    let b = fs::read(dir.path().join("b.trace.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn divergence_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL_RUN.replace("seed = 11", "seed = 11\nC = 1000000");
    fs::write(dir.path().join("boom.cfg"), cfg).unwrap();
    let out = dcda(dir.path(), &["run", "boom.cfg"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("divergence"), "{}", stderr_of(&out));
}

#[test]
fn config_errors_exit_one_and_name_lines() {
    let dir = tempfile::tempdir().unwrap();
    let bad = "problem.family = linreg\ngraph.kind = full\npolicy.kind = round_robin\npolicy.m = 7\nchannel.kind = perfect\nT = 40\nseed = 1\nwat = 9\n";
    fs::write(dir.path().join("bad.cfg"), bad).unwrap();
    let out = dcda(dir.path(), &["run", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("line 4") && err.contains("m must divide d"), "{err}");
    assert!(err.contains("line 8") && err.contains("unknown key `wat`"), "{err}");
}

#[test]
fn missing_config_file_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcda(dir.path(), &["run", "nope.cfg"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr_of(&out));
}

#[test]
fn quantized_run_logs_messages_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "problem.family = linreg\nproblem.n = 3\nproblem.m = 4\nproblem.d = 3\ngraph.kind = full\npolicy.kind = static\nchannel.kind = quantized\nchannel.s0 = 0.5\nT = 12\nseed = 2\noutput.messages = msg.csv\n";
    fs::write(dir.path().join("q.cfg"), cfg).unwrap();
    let out = dcda(dir.path(), &["run", "q.cfg"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let log = fs::read_to_string(dir.path().join("msg.csv")).unwrap();
    assert!(log.starts_with("t,sender,receiver,coordinate,payload\n"));
    // Integer symbols on the wire: every payload parses as i64.
    for line in log.lines().skip(1).take(20) {
        let payload = line.rsplit(',').next().unwrap();
        payload.parse::<i64>().expect("quantized payloads are symbols");
    }
}

#[test]
fn bounds_certifies_a_clean_run_and_flags_a_tampered_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL_RUN}bounds.r = 40\n");
    fs::write(dir.path().join("exp.cfg"), &cfg).unwrap();
    assert_eq!(dcda(dir.path(), &["run", "exp.cfg"]).status.code(), Some(0));

    let out = dcda(dir.path(), &["bounds", "exp.cfg", "exp.trace.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let report = fs::read_to_string(dir.path().join("exp.bounds.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,max_gap,certificate,certificate_violated,model,model_bound"
    );
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let gap: f64 = cells[1].parse().unwrap();
        let cert: f64 = cells[2].parse().unwrap();
        assert!(gap <= cert, "{line}");
        assert_eq!(cells[3], "false");
        assert_eq!(cells[4], "static");
    }

    // Inflate one recorded gap and the checker must notice.
    let trace = fs::read_to_string(dir.path().join("exp.trace.csv")).unwrap();
    let mut lines: Vec<String> = trace.lines().map(str::to_string).collect();
    let cells: Vec<&str> = lines[1].split(',').collect();
    let inflated: f64 = cells[2].parse::<f64>().unwrap() * 1e6;
    let mut new_cells = cells.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    new_cells[2] = format!("{inflated}");
    lines[1] = new_cells.join(",");
    fs::write(dir.path().join("forged.trace.csv"), lines.join("\n") + "\n").unwrap();

    let out = dcda(dir.path(), &["bounds", "exp.cfg", "forged.trace.csv"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    let report = fs::read_to_string(dir.path().join("forged.bounds.csv")).unwrap();
    assert!(report.lines().any(|l| l.contains(",true,")), "{report}");
}

#[test]
fn reproduce_is_deterministic_and_reports_both_time_axes() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["one", "two"] {
        let out = dcda(dir.path(), &["reproduce", "linreg", "--seeds", "0,1", "--steps", "60", "--out", sub]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    }
    let names = ["linreg-s0-exact.trace.csv", "linreg-s0-minibatch-4.trace.csv", "linreg-s0-noisy.trace.csv", "linreg-s1-exact.trace.csv", "linreg-s1-minibatch-4.trace.csv", "linreg-s1-noisy.trace.csv", "linreg-summary.csv"];
    for name in names {
        let a = fs::read(dir.path().join("one").join(name)).unwrap();
        let b = fs::read(dir.path().join("two").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between invocations");
    }
    let summary = fs::read_to_string(dir.path().join("one/linreg-summary.csv")).unwrap();
    let header = summary.lines().next().unwrap();
    assert!(header.contains("iterations") && header.contains("transmissions"), "{header}");
    assert_eq!(summary.lines().count(), 1 + 6);
}

#[test]
fn robust_preset_emits_the_two_by_two_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcda(dir.path(), &["reproduce", "robust", "--seeds", "3", "--steps", "40", "--out", "."]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    for name in ["robust-s3-rr-full.trace.csv", "robust-s3-subset-full.trace.csv", "robust-s3-rr-ring.trace.csv", "robust-s3-subset-ring.trace.csv"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
}

#[test]
fn svm_preset_emits_four_traces_with_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcda(dir.path(), &["reproduce", "svm", "--seeds", "5", "--steps", "40", "--out", "."]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let mut traces = 0;
    for sub in [0, 8, 15, 30] {
        let path = dir.path().join(format!("svm-s5-subset-{sub}.trace.csv"));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",accuracy"), "{path:?}");
        traces += 1;
    }
    assert_eq!(traces, 4);
    let summary = fs::read_to_string(dir.path().join("svm-summary.csv")).unwrap();
    assert!(summary.contains("median-accuracy>=0.9"));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcda(dir.path(), &["reproduce", "mnist", "--seeds", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("unknown preset"), "{}", stderr_of(&out));
}

#[test]
fn sweep_runs_the_grid_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = "problem.family = linreg\nproblem.n = 4\nproblem.m = 6\nproblem.d = 6\ngraph.kind = full\npolicy.kind = random_subset\nsweep.policy.m = 2, 6\nchannel.kind = perfect\nT = 30\nrecord_every = 3\nseeds = 1, 2\n";
    fs::write(dir.path().join("grid.sweep"), sweep).unwrap();
    let out = dcda(dir.path(), &["sweep", "grid.sweep", "--out", "runs"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    for name in ["grid-policy_m=2-s1.trace.csv", "grid-policy_m=2-s2.trace.csv", "grid-policy_m=6-s1.trace.csv", "grid-policy_m=6-s2.trace.csv"] {
        assert!(dir.path().join("runs").join(name).exists(), "missing {name}");
        assert!(dir.path().join("runs").join(format!("{name}.meta")).exists());
    }
    let summary = fs::read_to_string(dir.path().join("runs/grid-summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "policy.m,seed,threshold,reached,iterations,transmissions,final_value");
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(summary.lines().skip(1).all(|l| l.starts_with("2,") || l.starts_with("6,")));
}

#[test]
fn sweep_value_specific_errors_name_the_combo() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = "problem.family = linreg\nproblem.n = 4\nproblem.m = 6\nproblem.d = 6\ngraph.kind = full\npolicy.kind = round_robin\nsweep.policy.m = 3, 4\nchannel.kind = perfect\nT = 10\nseeds = 1\n";
    fs::write(dir.path().join("grid.sweep"), sweep).unwrap();
    let out = dcda(dir.path(), &["sweep", "grid.sweep"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("policy.m = 4"), "{err}");
    assert!(err.contains("m must divide d"), "{err}");
}

#[test]
fn sweep_rejects_unknown_and_unsweepable_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = "problem.family = linreg\ngraph.kind = full\npolicy.kind = static\nchannel.kind = perfect\nT = 10\nsweep.policy.q = 1, 2\nsweep.seed = 3, 4\nseeds = 1\n";
    fs::write(dir.path().join("bad.sweep"), sweep).unwrap();
    let out = dcda(dir.path(), &["sweep", "bad.sweep"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("line 6") && err.contains("not a config key"), "{err}");
    assert!(err.contains("line 7") && err.contains("cannot be swept"), "{err}");
}

#[test]
fn help_exits_zero_and_bad_flags_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dcda(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(dcda(dir.path(), &["frobnicate"]).status.code(), Some(1));
}
