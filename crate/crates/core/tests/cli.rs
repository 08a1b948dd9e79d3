use std::process::Command;

use jrsp::cli::{
    main_with_args, ReportDocument, RunDocument, SweepDocument, EXIT_OK, EXIT_RESOURCE, EXIT_USAGE,
};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("jrsp").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn report(args: &[&str]) -> (i32, ReportDocument) {
    let (code, out, err) = run(args);
    let doc = serde_json::from_str(&out).unwrap_or_else(|e| panic!("{e}: {out} {err}"));
    (code, doc)
}

#[test]
fn verify_two_by_two() {
    let (code, doc) = report(&["verify", "--n", "2", "--senders", "2", "--seed", "7"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(doc.schema_version, "1");
    assert_eq!(doc.branches.len(), 16);
    assert_eq!(
        doc.summary.success_probability,
        doc.summary.total_probability
    );
    assert!((doc.summary.success_probability - 1.0).abs() < 1e-10);
    assert!(doc.summary.elapsed_seconds.is_none());
}

#[test]
fn verify_explicit_delta() {
    let (code, doc) = report(&["verify", "--n", "1", "--senders", "1", "--delta", "0,0"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(doc.branches.len(), 2);
    assert_eq!(doc.delta, vec![0.0, 0.0]);
}

#[test]
fn verify_controlled() {
    let (code, doc) = report(&[
        "verify",
        "--n",
        "2",
        "--senders",
        "2",
        "--controlled",
        "--seed",
        "7",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(doc.branches.len(), 64);
    assert!(doc.config.controlled);
}

#[test]
fn verify_output_is_byte_identical() {
    let args = [
        "verify",
        "--n",
        "3",
        "--senders",
        "2",
        "--seed",
        "12",
        "--cross-check",
    ];
    let (_, a, _) = run(&args);
    let (_, b, _) = run(&args);
    assert_eq!(a, b);
    let doc: ReportDocument = serde_json::from_str(&a).unwrap();
    assert!(doc.summary.cross_check_max_diff.unwrap() < 1e-10);
}

#[test]
fn report_round_trips() {
    let (_, out, _) = run(&[
        "verify",
        "--n",
        "2",
        "--senders",
        "3",
        "--seed",
        "1",
        "--timing",
    ]);
    let doc: ReportDocument = serde_json::from_str(&out).unwrap();
    assert!(doc.summary.elapsed_seconds.is_some());
    let again = serde_json::to_string_pretty(&doc).unwrap() + "\n";
    assert_eq!(again, out);
    assert_eq!(serde_json::from_str::<ReportDocument>(&again).unwrap(), doc);
    // angles are written as decimal strings with 17 significant digits
    let raw: serde_json::Value = serde_json::from_str(&out).unwrap();
    let angle = raw["delta"][1].as_str().unwrap();
    let mantissa = angle.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn run_sampled_and_forced() {
    let (code, out, _) = run(&["run", "--n", "2", "--senders", "2", "--seed", "1"]);
    assert_eq!(code, EXIT_OK);
    let doc: RunDocument = serde_json::from_str(&out).unwrap();
    assert!((doc.record.fidelity - 1.0).abs() < 1e-10);

    let (code, out, _) = run(&[
        "run",
        "--n",
        "1",
        "--senders",
        "2",
        "--delta",
        "0,0",
        "--force-outcomes",
        "0,0",
    ]);
    assert_eq!(code, EXIT_OK);
    let doc: RunDocument = serde_json::from_str(&out).unwrap();
    assert_eq!(doc.record.outcomes.senders, vec![0, 0]);
    assert!((doc.record.fidelity - 1.0).abs() < 1e-10);
}

#[test]
fn run_forced_three_three_uses_sigma_z_on_second_qubit() {
    let (code, out, _) = run(&[
        "run",
        "--n",
        "2",
        "--senders",
        "2",
        "--force-outcomes",
        "3,3",
        "--delta",
        "0,0.5,1.0,1.5",
    ]);
    assert_eq!(code, EXIT_OK);
    let doc: RunDocument = serde_json::from_str(&out).unwrap();
    // slot 1 gets θ = π (σz on the low-order qubit), slot 2 identity
    let angles = &doc.record.correction_angles;
    assert!((angles[0] - std::f64::consts::PI).abs() < 1e-12);
    assert!(angles[1].abs() < 1e-12);
    assert!((doc.record.branch_probability - 1.0 / 16.0).abs() < 1e-12);
}

#[test]
fn run_forced_controlled() {
    let (code, out, _) = run(&[
        "run",
        "--n",
        "2",
        "--senders",
        "2",
        "--controlled",
        "--force-outcomes",
        "1,2,-,+",
    ]);
    assert_eq!(code, EXIT_OK);
    let doc: RunDocument = serde_json::from_str(&out).unwrap();
    assert_eq!(doc.record.outcomes.controller.len(), 2);
}

#[test]
fn sweep_grid_csv() {
    let (code, out, _) = run(&["sweep", "--n", "1..4", "--senders", "1..3"]);
    assert_eq!(code, EXIT_OK);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "n");
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 12);
    let succ = headers
        .iter()
        .position(|h| h == "success_probability")
        .unwrap();
    for r in &rows {
        assert!((r[succ].parse::<f64>().unwrap() - 1.0).abs() < 1e-10);
    }

    let (_, out, _) = run(&["sweep", "--n", "1..1", "--senders", "1..1"]);
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn sweep_trials_json() {
    let (code, out, _) = run(&[
        "sweep",
        "--n",
        "2..2",
        "--senders",
        "2..2",
        "--trials",
        "5",
        "--format",
        "json",
    ]);
    assert_eq!(code, EXIT_OK);
    let doc: SweepDocument = serde_json::from_str(&out).unwrap();
    assert_eq!(doc.rows.len(), 5);
    let seeds: Vec<u64> = doc.rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![0, 1, 2, 3, 4]);
    assert!(doc
        .rows
        .iter()
        .all(|r| r.success_probability == doc.rows[0].success_probability));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["verify", "--n", "2"],
        vec!["verify", "--n", "x", "--senders", "2"],
        vec!["verify", "--n", "1..3", "--senders", "2"],
        vec!["verify", "--n", "2", "--senders", "2", "--delta", "0,1"],
        vec!["verify", "--n", "2", "--senders", "2", "--format", "csv"],
        vec!["verify", "--n", "2", "--senders", "2", "--tol", "0"],
        vec!["verify", "--n", "2", "--senders", "0"],
        vec![
            "run",
            "--n",
            "2",
            "--senders",
            "2",
            "--force-outcomes",
            "4,0",
        ],
        vec!["run", "--n", "2", "--senders", "2", "--force-outcomes", "1"],
        vec!["sweep", "--n", "1..2", "--senders", "1", "--delta", "0,0"],
        vec!["sweep", "--n", "1", "--senders", "1", "--trials", "0"],
        vec!["bogus"],
    ] {
        let (code, _, err) = run(&args);
        assert_eq!(code, EXIT_USAGE, "{args:?}: {err}");
    }
}

#[test]
fn resource_errors_exit_three() {
    let (code, _, err) = run(&["verify", "--n", "2", "--senders", "2", "--branch-cap", "8"]);
    assert_eq!(code, EXIT_RESOURCE, "{err}");
    let (code, _, _) = run(&["verify", "--n", "9", "--senders", "2"]);
    assert_eq!(code, EXIT_RESOURCE);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let (code, out, _) = run(&[
        "verify",
        "--n",
        "1",
        "--senders",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    let doc: ReportDocument =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(doc.branches.len(), 4);
}

#[test]
fn binary_honours_branch_cap_env() {
    let bin = env!("CARGO_BIN_EXE_jrsp");
    let status = Command::new(bin)
        .args(["verify", "--n", "2", "--senders", "2"])
        .env("JRSP_BRANCH_CAP", "4")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_RESOURCE));
    let ok = Command::new(bin)
        .args(["verify", "--n", "2", "--senders", "2"])
        .env_remove("JRSP_BRANCH_CAP")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    let bad = Command::new(bin).arg("verify").output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}
