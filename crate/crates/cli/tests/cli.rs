use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
seed = 3
horizon = 30.0
corpus_end = 2000.0

[[groups]]
name = "fast-hi"
params = { a = 3.0, b = 30.0, r = 0.05 }
count = 12
journal = "PRA"
published = [1960.0, 1965.0]
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_citebirth"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(line).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

#[test]
fn help_and_version_succeed() {
    let dir = setup();
    assert!(run(dir.path(), &["--help"]).status.success());
    let v = run(dir.path(), &["--version"]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = setup();
    let out = run(dir.path(), &["fit", "--nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = setup();
    let out = run(dir.path(), &["fit", "--input", "absent.jsonl", "--output", "fits.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("absent.jsonl"));
    assert!(!dir.path().join("fits.csv").exists());
}

#[test]
fn empty_corpus_after_filtering_fails_cleanly() {
    let dir = setup();
    let corpus = "{\"id\":\"p\",\"journal\":\"J\",\"published\":2000.0,\"citations\":[0.5,1.5],\"time_base\":\"since_publication\"}\n";
    std::fs::write(dir.path().join("tiny.jsonl"), corpus).unwrap();
    let out = run(
        dir.path(),
        &[
            "fit",
            "--input",
            "tiny.jsonl",
            "--output",
            "fits.csv",
            "--corpus-end",
            "2010",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.toml"), "sed = 4\n").unwrap();
    let out = run(dir.path(), &["--config", "bad.toml", "simulate", "--output", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flag_overrides_config_and_headers_record_it() {
    let dir = setup();
    let p = dir.path();
    assert!(run(p, &["--config", "run.toml", "simulate", "--output", "a.jsonl"])
        .status
        .success());
    assert!(run(
        p,
        &["--config", "run.toml", "simulate", "--output", "b.jsonl", "--seed", "4"]
    )
    .status
    .success());
    let a = std::fs::read_to_string(p.join("a.jsonl")).unwrap();
    let b = std::fs::read_to_string(p.join("b.jsonl")).unwrap();
    assert_ne!(a, b);
    let meta: Value = serde_json::from_str(b.lines().next().unwrap()).unwrap();
    assert_eq!(meta["_meta"]["config"]["seed"], 4);

    assert!(run(
        p,
        &["--config", "run.toml", "fit", "--input", "b.jsonl", "--output", "fits.csv"]
    )
    .status
    .success());
    let fits = std::fs::read_to_string(p.join("fits.csv")).unwrap();
    let mut lines = fits.lines();
    assert!(lines.next().unwrap().starts_with("# citebirth "));
    assert_eq!(lines.next().unwrap(), "# command: fit");
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert!(lines.next().unwrap().starts_with("paper_id,journal,a,b,r,logL"));
    assert_eq!(lines.count(), 12);
}

#[test]
fn csv_corpus_matches_jsonl_pipeline() {
    let dir = setup();
    let p = dir.path();
    for (name, format) in [("c.jsonl", "jsonl"), ("c.csv", "csv")] {
        let out = run(
            p,
            &["--config", "run.toml", "simulate", "--output", name, "--format", format],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = std::fs::read_to_string(p.join("c.csv")).unwrap();
    assert!(csv
        .lines()
        .any(|l| l.starts_with("paper_id,journal,published,citation_date")));

    let fit = |input: &str, output: &str| {
        let out = run(
            p,
            &["--config", "run.toml", "fit", "--input", input, "--output", output],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(p.join(output)).unwrap();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        rdr.records()
            .map(|r| r.unwrap()[2].parse::<f64>().unwrap())
            .collect::<Vec<f64>>()
    };
    let from_jsonl = fit("c.jsonl", "fj.csv");
    let from_csv = fit("c.csv", "fc.csv");
    assert_eq!(from_jsonl.len(), from_csv.len());
    for (x, y) in from_jsonl.iter().zip(&from_csv) {
        assert!((x - y).abs() <= 1e-4 * x.abs().max(1e-3), "{x} vs {y}");
    }
}
