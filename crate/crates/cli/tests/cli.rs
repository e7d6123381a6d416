//! Binary-level integration tests: the advertised subcommand surface, file
//! formats and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn loadsig() -> Command {
    Command::new(env!("CARGO_BIN_EXE_loadsig"))
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("loadsig-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("command runs");
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_extract_evaluate_flow() {
    let dir = work_dir("flow");
    let prefix = dir.join("house");

    run_ok(loadsig().args([
        "simulate",
        "--scenario",
        "builtin:demo",
        "--seed",
        "9",
        "--days",
        "2",
        "--out-prefix",
        prefix.to_str().unwrap(),
    ]));
    let samples = dir.join("house_samples.csv");
    let truth = dir.join("house_truth.csv");
    assert!(samples.exists() && truth.exists());

    let db_path = dir.join("db.json");
    let stdout = run_ok(loadsig().args([
        "extract",
        "--input",
        samples.to_str().unwrap(),
        "--out",
        db_path.to_str().unwrap(),
        "--cycles-dir",
        dir.join("cycles").to_str().unwrap(),
        "--events-out",
        dir.join("events.csv").to_str().unwrap(),
    ]));
    assert!(stdout.contains("Fridge"), "summary table present");
    assert!(stdout.contains("Largest cluster"));
    assert!(db_path.exists());
    assert!(dir.join("cycles").join("fridge_cycle.csv").exists());
    assert!(dir.join("events.csv").exists());

    let report_path = dir.join("report.json");
    let stdout = run_ok(loadsig().args([
        "evaluate",
        "--db",
        db_path.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]));
    assert!(stdout.contains("Precision"));
    assert!(report_path.exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["rows"].as_array().map(|r| !r.is_empty()).unwrap_or(false));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn extract_consumes_waveform_container() {
    let dir = work_dir("frames");
    let prefix = dir.join("wave");
    // A full day so extraction accepts the input; waveforms for one minute.
    run_ok(loadsig().args([
        "simulate",
        "--scenario",
        "builtin:demo",
        "--seed",
        "4",
        "--days",
        "1",
        "--out-prefix",
        prefix.to_str().unwrap(),
        "--waveform-seconds",
        "60",
        "--waveform-from",
        "600",
    ]));
    let frames = dir.join("wave_frames.bin");
    assert!(frames.exists());

    // The one-minute container is a valid recording but far too short for
    // an extraction run: data error, exit 2.
    let status = loadsig()
        .args([
            "extract",
            "--input",
            frames.to_str().unwrap(),
            "--out",
            dir.join("db.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "short recording is a data error");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn shipped_scenario_file_parses_and_runs() {
    let dir = work_dir("scenario");
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios/demo_house.json")
        .canonicalize()
        .expect("shipped scenario exists");
    run_ok(loadsig().args([
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--seed",
        "2",
        "--days",
        "1",
        "--out-prefix",
        dir.join("s").to_str().unwrap(),
    ]));
    assert!(dir.join("s_samples.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn extraction_outputs_are_reproducible() {
    let dir = work_dir("repro");
    let prefix = dir.join("r");
    run_ok(loadsig().args([
        "simulate",
        "--scenario",
        "builtin:demo",
        "--seed",
        "6",
        "--days",
        "2",
        "--out-prefix",
        prefix.to_str().unwrap(),
    ]));
    let samples = dir.join("r_samples.csv");
    for name in ["a.json", "b.json"] {
        run_ok(loadsig().args([
            "extract",
            "--input",
            samples.to_str().unwrap(),
            "--out",
            dir.join(name).to_str().unwrap(),
        ]));
    }
    let a = std::fs::read(dir.join("a.json")).unwrap();
    let b = std::fs::read(dir.join("b.json")).unwrap();
    assert_eq!(a, b, "same inputs and parameters give identical databases");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes_reflect_error_class() {
    // Usage error.
    let out = loadsig().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // Config error: unknown builtin scenario.
    let out = loadsig()
        .args(["simulate", "--scenario", "builtin:nope", "--out-prefix", "/tmp/x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // Data error: missing input file.
    let out = loadsig()
        .args(["extract", "--input", "/definitely/missing.csv", "--out", "/tmp/y.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // Benchmark success is exit zero (mismatch would be 3).
    let out = loadsig().args(["heater-bench"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
