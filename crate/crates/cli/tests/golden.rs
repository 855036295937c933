//! Byte-for-byte comparisons against the committed three-model fixture.
//! Set UPDATE_GOLDEN=1 to rewrite the expected files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/three_model")
}

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn check(expected: &Path, actual: &[u8]) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(expected, actual).unwrap();
        return;
    }
    let want = fs::read(expected).unwrap();
    assert!(
        want == actual,
        "{} differs:\n--- expected\n{}\n--- actual\n{}",
        expected.display(),
        String::from_utf8_lossy(&want),
        String::from_utf8_lossy(actual)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn build_matches_golden() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cascade.json");
    let run = cascade(&[
        "build",
        "--train-log",
        p(&f.join("train.jsonl")),
        "--manifest",
        p(&f.join("manifest.json")),
        "--out",
        p(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    check(&f.join("build_stdout.txt"), &run.stdout);
    check(&f.join("cascade.json"), &fs::read(&out).unwrap());
}

#[test]
fn evaluate_matches_golden() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("report.csv");
    let run = cascade(&[
        "evaluate",
        "--cascade",
        p(&f.join("cascade.json")),
        "--test-log",
        p(&f.join("test.jsonl")),
        "--manifest",
        p(&f.join("manifest.json")),
        "--train-log",
        p(&f.join("train.jsonl")),
        "--csv",
        p(&csv),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    check(&f.join("evaluate_stdout.txt"), &run.stdout);
    check(&f.join("evaluate.csv"), &fs::read(&csv).unwrap());
}

#[test]
fn sequential_build_is_identical() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cascade.json");
    let run = cascade(&[
        "--sequential",
        "build",
        "--train-log",
        p(&f.join("train.jsonl")),
        "--manifest",
        p(&f.join("manifest.json")),
        "--out",
        p(&out),
    ]);
    assert!(run.status.success());
    assert_eq!(
        fs::read(&out).unwrap(),
        fs::read(f.join("cascade.json")).unwrap()
    );
}

#[test]
fn fixture_is_synth_seed_one() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let run = cascade(&[
        "synth",
        "--preset",
        "fixture",
        "--seed",
        "1",
        "--out-dir",
        p(dir.path()),
    ]);
    assert!(run.status.success());
    for name in ["train.jsonl", "test.jsonl", "manifest.json"] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(f.join(name)).unwrap(),
            "{name}"
        );
    }
}
