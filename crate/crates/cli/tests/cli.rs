use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fiberpca"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn fiberpca")
}

fn strip_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| match l.rsplit_once(',') {
            Some((head, _)) => head.to_string(),
            None => l.to_string(),
        })
        .collect()
}

#[test]
fn sweep_output_is_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep",
        "--axis",
        "rho",
        "--values",
        "0.8,1",
        "--shape",
        "12x12x12",
        "--rank",
        "2x2x2",
        "--trials",
        "3",
        "--regularizer",
        "l21,l1",
        "--seed",
        "7",
    ];
    let a = run(&args, dir.path());
    let b = run(&args, dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let (sa, sb) = (
        String::from_utf8(a.stdout).unwrap(),
        String::from_utf8(b.stdout).unwrap(),
    );
    assert_eq!(sa.lines().count(), 5);
    assert!(sa.lines().next().unwrap().ends_with("mean_wall_time_seconds"));
    assert_eq!(strip_timing(&sa), strip_timing(&sb));
}

#[test]
fn trial_csv_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let go = |threads: &str, name: &str| {
        let out = run(
            &[
                "phase-grid",
                "--shape",
                "10x10x10",
                "--ranks",
                "1,2",
                "--rhos",
                "0.9",
                "--trials",
                "2",
                "--threads",
                threads,
                "--out",
                "summary.csv",
                "--trials-out",
                name,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read_to_string(dir.path().join(name)).unwrap()
    };
    let one = go("1", "t1.csv");
    let two = go("2", "t2.csv");
    assert_eq!(one.lines().count(), 5);
    assert_eq!(strip_timing(&one), strip_timing(&two));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"shape": "10x10x10", "rank": "2x2x2", "trials": 2, "regularizer": ["l1"], "seed": 3}"#,
    )
    .unwrap();
    let out = run(
        &["--config", "cfg.json", "sweep", "--axis", "gamma", "--values", "0.1"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = s.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "10x10x10");
    assert_eq!(row[5], "l1");
    assert_eq!(row[7], "2");

    let out = run(
        &[
            "--config",
            "cfg.json",
            "sweep",
            "--axis",
            "gamma",
            "--values",
            "0.1",
            "--trials",
            "1",
            "--regularizer",
            "l21",
        ],
        dir.path(),
    );
    let s = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = s.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[5], "l21");
    assert_eq!(row[7], "1");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"shpe": "10x10x10"}"#).unwrap();
    let out = run(&["--config", "cfg.json", "table1", "--scale", "0.1"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn generate_then_solve_recovers_support() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "generate", "--shape", "30x30x30", "--rank", "3x3x3", "--gamma", "0.1", "--seed", "1", "--out", "g",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("g/truth.json")).unwrap()).unwrap();
    let planted: BTreeSet<u64> = truth["outlier_support"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();

    for input in ["g/b.dtns", "g/b.csv"] {
        let out = run(&["solve", "--input", input, "--out", "s"], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let res: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("s/result.json")).unwrap()).unwrap();
        let found: BTreeSet<u64> = res["outlier_fibers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap())
            .collect();
        assert_eq!(found, planted, "{input}");
        assert!(dir.path().join("s/x_hat.dtns").exists());
        assert!(dir.path().join("s/e_hat.dtns").exists());
    }
}

#[test]
fn solve_exits_nonzero_when_not_converged() {
    let dir = tempfile::tempdir().unwrap();
    run(
        &["generate", "--shape", "12x12x12", "--rank", "2x2x2", "--out", "g"],
        dir.path(),
    );
    let out = run(&["solve", "--input", "g/b.dtns", "--max-iters", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "").unwrap();
    let out = run(&["ingest", "--input", "empty.csv"], dir.path());
    assert!(!out.status.success());
    fs::write(dir.path().join("header.csv"), "segment_id,timestamp_iso8601,speed\n").unwrap();
    let out = run(&["ingest", "--input", "header.csv"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn ingest_malformed_row_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["fixture", "--segments", "8", "--weeks", "2", "--out", "f.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let mut text = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    text.push_str("seg0000,not-a-time,50\n");
    fs::write(dir.path().join("f.csv"), text).unwrap();
    assert!(!run(&["ingest", "--input", "f.csv"], dir.path()).status.success());
    let out = run(
        &["ingest", "--input", "f.csv", "--lenient", "--lambda", "1"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped line"));
}

#[test]
fn ingest_reports_exactly_the_planted_hours() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "fixture",
            "--segments",
            "30",
            "--weeks",
            "4",
            "--seed",
            "0",
            "--out",
            "f.csv",
            "--planted",
            "p.json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let planted: Vec<(usize, usize)> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
    let ratio = planted.len() as f64 / (168.0 * 4.0);

    let out = run(
        &[
            "ingest",
            "--input",
            "f.csv",
            "--target-ratio",
            &ratio.to_string(),
            "--out",
            "r",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/report.json")).unwrap()).unwrap();
    let flagged: BTreeSet<(usize, usize)> = report["flagged_hours"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| {
            (
                h["week"].as_u64().unwrap() as usize,
                h["hour"].as_u64().unwrap() as usize,
            )
        })
        .collect();
    assert_eq!(flagged, planted.into_iter().collect());

    let fibers = fs::read_to_string(dir.path().join("r/fibers.csv")).unwrap();
    assert_eq!(fibers.lines().count(), 1 + 168 * 4);
    let report_csv = fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    assert!(report_csv.starts_with("week,hour,timestamp,segment_id,z_score"));
}
