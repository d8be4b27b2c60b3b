use std::path::Path;

use assert_cmd::Command;

fn cli(dir: &Path) -> Command {
    let mut c = Command::cargo_bin("persona-eval").unwrap();
    c.arg("--out").arg(dir);
    c
}

fn stdout(c: &mut Command) -> String {
    let out = c.output().unwrap();
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn twelve_models_plan_3600_bfi_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let models: Vec<String> = (1..=12).map(|i| format!("\"model-{i}\"")).collect();
    std::fs::write(&cfg, format!("base_url = \"http://127.0.0.1:9\"\nmodels = [{}]\n", models.join(", "))).unwrap();
    let out = stdout(cli(dir.path()).arg("--config").arg(&cfg).args([
        "run", "--instrument", "bfi", "--mode", "personality", "--targets", "all", "--temps", "0.01,0.7", "--reps", "30",
        "--dry-run",
    ]));
    assert!(out.contains(": 3600 sessions (12 models x 2 temperatures x 5 conditionings x 30 repetitions)"), "{out}");
}

#[test]
fn role_mode_expands_three_roles_per_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(cli(dir.path()).args([
        "run", "--backend", "mock", "--instrument", "mbti", "--mode", "role", "--targets", "ENFJ,INTP", "--temps", "0.7",
        "--reps", "2", "--dry-run",
    ]));
    assert!(out.contains(": 12 sessions (1 models x 1 temperatures x 6 conditionings x 2 repetitions)"), "{out}");
}

#[test]
fn mock_enfj_scores_as_enfj() {
    let dir = tempfile::tempdir().unwrap();
    stdout(cli(dir.path()).args([
        "run", "--backend", "mock", "--mock-target", "ENFJ", "--mock-epsilon", "0", "--reps", "1", "--temps", "0.01",
        "--instrument", "mbti", "--mode", "unconditioned",
    ]));
    let ledger = std::fs::read_to_string(dir.path().join("ledger_mbti_unconditioned.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 61, "header plus 60 records");
    stdout(cli(dir.path()).args(["score", "ledger_mbti_unconditioned.jsonl"]));
    let scores = read_json(&dir.path().join("ledger_mbti_unconditioned.scores.json"));
    let sessions = scores["sessions"].as_array().unwrap();
    assert_eq!(sessions.len(), 1);
    assert_eq!(sessions[0]["outcome"]["mbti_type"], "ENFJ");
}

#[test]
fn live_without_endpoint_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path()).args(["run", "--instrument", "mbti", "--models", "m"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("base_url"));
}

#[test]
fn unknown_flags_and_bad_values_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--instrument", "mbti", "--frobnicate"],
        vec!["run", "--instrument", "mbti", "--backend", "mock", "--temps", "0"],
        vec!["run", "--instrument", "bfi", "--backend", "mock", "--mode", "personality", "--targets", "ENFJ"],
        vec!["run", "--instrument", "mbti", "--backend", "mock", "--mock-epsilon", "2"],
    ] {
        cli(dir.path()).args(&args).assert().code(1);
    }
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "modles = [\"x\"]\n").unwrap();
    cli(dir.path()).arg("--config").arg(&cfg).args(["run", "--instrument", "mbti"]).assert().code(1);
}

#[test]
fn help_lists_every_run_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(cli(dir.path()).args(["run", "--help"]));
    for flag in [
        "--instrument", "--mode", "--targets", "--temps", "--reps", "--backend", "--mock-target", "--mock-epsilon", "--seed",
        "--resume", "--dry-run", "--models", "--base-url", "--workers", "--ledger", "--config", "--out",
    ] {
        assert!(out.contains(flag), "missing {flag}");
    }
}

#[test]
fn score_report_pipeline_with_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let common = ["--backend", "mock", "--instrument", "bfi", "--temps", "0.7", "--reps", "3", "--seed", "4"];
    stdout(cli(d).args(["run", "--mode", "unconditioned", "--mock-epsilon", "0.5"]).args(common));
    stdout(cli(d).args(["run", "--mode", "personality", "--targets", "Openness,Neuroticism"]).args(common));
    stdout(cli(d).args(["score", "ledger_bfi_unconditioned.jsonl"]));
    stdout(cli(d).args(["score", "ledger_bfi_personality.jsonl"]));
    let csv = std::fs::read_to_string(d.join("ledger_bfi_personality.scores.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6, "one row per valid session");

    // matrix needs MBTI data
    cli(d).args(["report", "ledger_bfi_personality.scores.json", "--matrix"]).assert().code(2);
    cli(d).args(["report", "ledger_bfi_personality.scores.json", "--pct-increase"]).assert().code(1);
    stdout(cli(d).args([
        "report",
        "ledger_bfi_personality.scores.json",
        "--baseline",
        "ledger_bfi_unconditioned.scores.json",
        "--pct-increase",
    ]));
    let pct = std::fs::read_to_string(d.join("report/pct_increase.csv")).unwrap();
    assert!(pct.lines().next().unwrap().starts_with("model,temperature,factor"));
    assert_eq!(pct.lines().count(), 3);
}

#[test]
fn mbti_report_prints_accuracy_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout(cli(d).args([
        "run", "--backend", "mock", "--instrument", "mbti", "--mode", "personality", "--targets", "INTJ,ESFP", "--temps",
        "0.01", "--reps", "2",
    ]));
    stdout(cli(d).args(["score", "ledger_mbti_personality.jsonl", "--output", "s.json"]));
    let out = stdout(cli(d).args(["report", "s.json", "--matrix", "--dir", "r"]));
    assert!(out.contains("accuracy mock @ 0.01: 1.000 ± 0.000"), "{out}");
    assert!(d.join("r/matrices/matrix_mock_0.01_personality.csv").exists());
}

#[test]
fn empty_ledger_has_no_valid_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout(cli(d).args(["run", "--backend", "mock", "--instrument", "mbti", "--reps", "1", "--temps", "0.7"]));
    let path = d.join("ledger_mbti_unconditioned.jsonl");
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    std::fs::write(&path, header + "\n").unwrap();
    let out = cli(d).args(["score", "ledger_mbti_unconditioned.jsonl"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid sessions"));
}

#[test]
fn corrupt_ledger_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout(cli(d).args(["run", "--backend", "mock", "--instrument", "mbti", "--reps", "1", "--temps", "0.7"]));
    let path = d.join("ledger_mbti_unconditioned.jsonl");
    let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[3] = "{not json".into();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = cli(d).args(["score", "ledger_mbti_unconditioned.jsonl"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |name: &str| {
        stdout(cli(d).args([
            "run", "--backend", "mock", "--instrument", "mbti", "--mode", "personality", "--targets", "ISTJ,ENFP", "--temps",
            "0.7", "--reps", "3", "--mock-epsilon", "0.4", "--seed", "11", "--ledger", name,
        ]));
        stdout(cli(d).args(["score", name, "--output", &format!("{name}.scores.json")]));
        stdout(cli(d).args(["report", &format!("{name}.scores.json"), "--dir", &format!("{name}.report")]));
    };
    run("a.jsonl");
    run("b.jsonl");
    let strip = |p: &str| -> Vec<serde_json::Value> {
        std::fs::read_to_string(d.join(p))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("timestamp");
                v
            })
            .collect()
    };
    assert_eq!(strip("a.jsonl"), strip("b.jsonl"));
    assert_eq!(
        std::fs::read(d.join("a.jsonl.scores.json")).unwrap(),
        std::fs::read(d.join("b.jsonl.scores.json")).unwrap()
    );
    for f in ["accuracy.csv", "type_frequencies.csv", "report.json", "matrices/matrix_mock_0.7_personality.csv"] {
        assert_eq!(
            std::fs::read(d.join("a.jsonl.report").join(f)).unwrap(),
            std::fs::read(d.join("b.jsonl.report").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn resume_after_fatal_endpoint_error_exits_3() {
    // port 9 (discard) is closed on loopback, so the first request fails
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "base_url = \"http://127.0.0.1:9\"\nmodels = [\"m\"]\nmax_retries = 0\n").unwrap();
    let out = cli(dir.path())
        .arg("--config")
        .arg(&cfg)
        .args(["run", "--instrument", "mbti", "--reps", "1", "--temps", "0.7", "--workers", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--resume"));
}

#[test]
fn awareness_with_echoing_mock_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(cli(dir.path()).args(["awareness", "--backend", "mock", "--instrument", "bfi"]));
    assert!(out.contains("mock: WO 1.000 ± 0.000, cosine 1.000 ± 0.000 over 5 targets"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("awareness_bfi_mock.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 + 1);
    assert!(csv.ends_with("mean ± std,1.000 ± 0.000,1.000 ± 0.000\n"));
}
