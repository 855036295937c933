use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cascade_cli::*;
use cascade_core::abstain::AccuracyModelKind;
use cascade_core::data::{
    AccuracyMetric, LabeledExample, ModelManifest, ModelOutput, PredictionLog,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/three_model")
        .join(name)
}

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn load(name: &str) -> PredictionLog {
    PredictionLog::from_jsonl_str(&fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn manifest() -> ModelManifest {
    ModelManifest::load(fixture("manifest.json")).unwrap()
}

#[test]
fn alpha_zero_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let run = cascade(&[
        "build",
        "--train-log",
        p(&fixture("train.jsonl")),
        "--manifest",
        p(&fixture("manifest.json")),
        "--alpha",
        "0",
        "--out",
        p(&out),
    ]);
    assert_eq!(run.status.code(), Some(EXIT_VALIDATION));
    assert!(String::from_utf8_lossy(&run.stderr).contains("alpha"));
    assert!(!out.exists());
}

#[test]
fn reference_only_pool_gives_one_unconditional_stage() {
    let dir = tempfile::tempdir().unwrap();
    let man = dir.path().join("m.json");
    fs::write(&man, r#"{"models": [{"id": "large", "cost": 10}]}"#).unwrap();
    let out = dir.path().join("c.json");
    let run = cascade(&[
        "build",
        "--train-log",
        p(&fixture("train.jsonl")),
        "--manifest",
        p(&man),
        "--out",
        p(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = stdout(&run);
    let rows: Vec<&str> = text
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("examples"))
        .collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].ends_with("-inf"));
    assert!(fs::read_to_string(&out)
        .unwrap()
        .contains("\"threshold\": \"-inf\""));
}

#[test]
fn unknown_reference_rejected() {
    let cfg = BuildConfig {
        reference: Some("nope".into()),
        ..BuildConfig::default()
    };
    let err = build(&load("train.jsonl"), &manifest(), &cfg).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
}

#[test]
fn failure_exit_code_is_distinct() {
    let e = CliError::GreedyFailure("x".into());
    assert_eq!(e.exit_code(), EXIT_FAILURE);
    assert_ne!(EXIT_FAILURE, EXIT_VALIDATION);
    assert_ne!(EXIT_FAILURE, 0);
}

#[test]
fn evaluate_refuses_the_train_log() {
    let args = |test: &Path, extra: &[&str]| {
        let mut v: Vec<String> = [
            "evaluate",
            "--cascade",
            p(&fixture("cascade.json")),
            "--manifest",
            p(&fixture("manifest.json")),
            "--test-log",
            p(test),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let run = |a: Vec<String>| cascade(&a.iter().map(String::as_str).collect::<Vec<_>>());

    // same content under another name
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("copy.jsonl");
    fs::copy(fixture("train.jsonl"), &copy).unwrap();
    assert_eq!(run(args(&copy, &[])).status.code(), Some(EXIT_VALIDATION));
    assert!(run(args(&copy, &["--allow-train-eval"])).status.success());

    // same path
    let train = fixture("train.jsonl");
    assert_eq!(
        run(args(
            &fixture("test.jsonl"),
            &["--train-log", p(&fixture("test.jsonl"))]
        ))
        .status
        .code(),
        Some(EXIT_VALIDATION)
    );
    assert_eq!(run(args(&train, &[])).status.code(), Some(EXIT_VALIDATION));
}

#[test]
fn evaluate_reports_missing_models() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("t.jsonl");
    fs::write(&log, "{\"example_id\":\"a\",\"label\":0,\"models\":{\"small\":{\"prediction\":0,\"scores\":[1,0,0]}}}\n").unwrap();
    let run = cascade(&[
        "evaluate",
        "--cascade",
        p(&fixture("cascade.json")),
        "--manifest",
        p(&fixture("manifest.json")),
        "--test-log",
        p(&log),
    ]);
    assert_eq!(run.status.code(), Some(EXIT_VALIDATION));
    assert!(
        String::from_utf8_lossy(&run.stderr).contains("medium")
            || String::from_utf8_lossy(&run.stderr).contains("large")
    );
}

#[test]
fn classified_fractions_cover_everything() {
    let csv = fs::read_to_string(fixture("evaluate.csv")).unwrap();
    let sum: f64 = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("overall"))
        .map(|l| l.split(',').nth(4).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-6);
}

#[test]
fn single_stage_report_has_one_row() {
    let mut m = manifest();
    m.entries.retain(|e| e.id == "large");
    let built = build(&load("train.jsonl"), &m, &BuildConfig::default()).unwrap();
    let report = evaluate(&built.file, &load("test.jsonl"), &m, AccuracyMetric::Top1).unwrap();
    assert_eq!(report.stages.len(), 1);
    let test = load("test.jsonl");
    let reference = test.model_accuracy(test.model_index("large").unwrap(), AccuracyMetric::Top1);
    assert_eq!(report.accuracy, reference);
    assert_eq!(report.mean_cost, 10.0);
}

#[test]
fn default_sweep_has_six_rows_matching_build_then_evaluate() {
    let train = load("train.jsonl");
    let test = load("test.jsonl");
    let m = manifest();
    let cfg = BuildConfig::default();
    let rows = sweep(&train, &test, &m, &cfg, &DEFAULT_ALPHA_GRID).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(sweep_csv(&rows).lines().count(), 7);
    for row in &rows {
        let built = build(
            &train,
            &m,
            &BuildConfig {
                alpha: row.alpha,
                ..cfg.clone()
            },
        )
        .unwrap();
        let report = evaluate(&built.file, &test, &m, AccuracyMetric::Top1).unwrap();
        let r = row.result.as_ref().unwrap();
        assert_eq!(r.accuracy, report.accuracy);
        assert_eq!(r.mean_cost, report.mean_cost);
        assert_eq!(r.stages, report.stages.len());
    }
}

#[test]
fn alpha_one_meets_reference_on_build_set() {
    let train = load("train.jsonl");
    let m = manifest();
    let built = build(&train, &m, &BuildConfig::default()).unwrap();
    let report = evaluate(&built.file, &train, &m, AccuracyMetric::Top1).unwrap();
    let reference = train.model_accuracy(train.model_index("large").unwrap(), AccuracyMetric::Top1);
    assert!(report.accuracy >= reference);
}

#[test]
fn sweep_cli_writes_csv() {
    let run = cascade(&[
        "sweep",
        "--train-log",
        p(&fixture("train.jsonl")),
        "--test-log",
        p(&fixture("test.jsonl")),
        "--manifest",
        p(&fixture("manifest.json")),
        "--alpha-grid",
        "1.0,0.95",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = stdout(&run);
    assert!(text.starts_with("alpha,status,accuracy,mean_cost,stages\n1,ok,"));
    assert_eq!(text.lines().count(), 3);
}

fn seventy_seven_percent_log() -> PredictionLog {
    let examples = (0..100)
        .map(|i| LabeledExample {
            example_id: format!("e{i:03}"),
            label: 0,
        })
        .collect();
    let outputs = (0..100)
        .map(|i| {
            let correct = i < 77;
            let gap = 0.5 + (i % 13) as f64 * 0.25;
            let scores = if correct {
                vec![gap, 0.0]
            } else {
                vec![0.0, gap]
            };
            ModelOutput::from_scores(scores)
        })
        .collect();
    PredictionLog::new(examples, vec!["m".into()], vec![outputs]).unwrap()
}

#[test]
fn perfect_curve_has_the_error_rate_point() {
    let log = seventy_seven_percent_log();
    let curves = abstain_curves("m", &[], &log, &log, AccuracyMetric::Top1).unwrap();
    let (name, perfect) = &curves[0];
    assert_eq!(name, "perfect");
    assert!(perfect
        .iter()
        .any(|p| (p.abstention_rate - 0.23).abs() < 1e-12 && p.accuracy == 1.0));
}

#[test]
fn curve_rows_are_distinct_confidences_plus_one() {
    let log = seventy_seven_percent_log();
    let kinds = [
        AccuracyModelKind::Raw("logit_gap".into()),
        AccuracyModelKind::Logistic,
    ];
    let curves = abstain_curves("m", &kinds, &log, &log, AccuracyMetric::Top1).unwrap();
    let names: Vec<&str> = curves.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["raw:logit_gap", "logistic", "perfect"]);
    // 13 distinct logit gaps
    assert_eq!(curves[0].1.len(), 14);
    assert_eq!(curves[2].1.len(), 3);
    let csv = curves_csv(&curves);
    assert_eq!(
        csv.lines().count(),
        1 + curves.iter().map(|(_, c)| c.len()).sum::<usize>()
    );
}

#[test]
fn curve_cli_rejects_unknown_model() {
    let run = cascade(&[
        "abstain-curve",
        "--train-log",
        p(&fixture("train.jsonl")),
        "--model",
        "nope",
    ]);
    assert_eq!(run.status.code(), Some(EXIT_VALIDATION));
}

#[test]
fn oracle_zero_trials_warns_and_passes() {
    let run = cascade(&["oracle", "--trials", "0"]);
    assert!(run.status.success());
    assert!(stdout(&run).starts_with("warning:"));
}

#[test]
fn oracle_is_deterministic() {
    let a = cascade(&["oracle", "--trials", "40", "--seed", "9"]);
    let b = cascade(&["--sequential", "oracle", "--trials", "40", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("worst GREEDY/OPT ratio"));
}
