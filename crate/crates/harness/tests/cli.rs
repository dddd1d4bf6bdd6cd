use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use prooftutor::corpus::load_records;
use prooftutor::{PipelineKind, Role};
use prooftutor_harness::cli::run;
use prooftutor_harness::config::{BackendChoice, HarnessConfig};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/synthetic")
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Out {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("prooftutor").chain(args.iter().copied()), &mut out, &mut err);
    Out {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const WORKED: &[&str] = &[
    "--premise",
    "((~K + L) > (M * N))",
    "--premise",
    "(K > O)",
    "--premise",
    "~O",
    "--conclusion",
    "N",
    "--intermediate",
    "~K / MT / (K > O); ~O",
    "--intermediate",
    "(~K + L) / Add / ~K",
    "--intermediate",
    "(M * N) / MP / ((~K + L) > (M * N)); (~K + L)",
];

fn classify(extra: &[&str]) -> Out {
    let mut args = vec!["classify"];
    args.extend_from_slice(WORKED);
    args.extend_from_slice(extra);
    cli(&args)
}

#[test]
fn classify_verdicts() {
    let ok = classify(&["--step", "N", "--rule", "Simp", "--parents", "(M * N)"]);
    assert_eq!((ok.code, ok.stdout.trim()), (0, "Optimal, justified"), "{}", ok.stderr);
    let wrong_rule = classify(&["--step", "N", "--rule", "MP", "--parents", "(M * N)"]);
    assert_eq!(wrong_rule.stdout.trim(), "Optimal, unjustified");
    let nonsense = classify(&["--step", "(Z * Z)", "--rule", "Conj", "--parents", "Z; Z"]);
    assert_eq!(nonsense.stdout.trim(), "Invalid");
}

#[test]
fn classify_against_a_corpus_state() {
    let out = cli(&[
        "classify", "--corpus", s(&bundled()), "--problem", "syn-01-L2", "--state", "syn-01-L2-s3", "--step", "P",
        "--rule", "Simp", "--parents", "(P * S)",
    ]);
    assert_eq!((out.code, out.stdout.trim()), (0, "Optimal, justified"), "{}", out.stderr);
}

#[test]
fn domain_and_io_errors_have_distinct_codes() {
    let bad_formula = classify(&["--step", "(N +", "--rule", "Simp", "--parents", "(M * N)"]);
    assert_eq!(bad_formula.code, 1);
    assert!(bad_formula.stderr.contains("cannot parse"));
    let bad_rule = classify(&["--step", "N", "--rule", "Magic"]);
    assert_eq!(bad_rule.code, 1);
    let usage = cli(&["classify"]);
    assert_eq!(usage.code, 1);
    let unreadable = cli(&["summarize", "--corpus", "/nonexistent/corpus"]);
    assert_eq!(unreadable.code, 2);
    assert!(unreadable.stderr.contains("/nonexistent/corpus"));
    let help = cli(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("build-kg"));
}

#[test]
fn build_kg_writes_a_graph_per_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["build-kg", "--corpus", s(&bundled()), "--out", s(dir.path())]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let rows: Vec<&str> = out.stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    for row in rows {
        let cols: Vec<&str> = row.split('\t').collect();
        assert!(dir.path().join(format!("{}.json", cols[0])).exists());
        let level: usize = cols[0].rsplit('L').next().unwrap().parse().unwrap();
        assert_eq!(cols[4].parse::<usize>().unwrap(), level, "{row}");
    }
}

#[test]
fn build_kg_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    std::fs::write(
        corpus.join("problems.json"),
        r#"{"format_version": 1, "problems": [
  {"id": "worked", "level": 4, "premises": ["((~K + L) > (M * N))", "(K > O)", "~O"], "conclusion": "N"}
]}"#,
    )
    .unwrap();
    std::fs::write(corpus.join("states.json"), r#"{"format_version": 1, "states": []}"#).unwrap();
    let out = cli(&["build-kg", "--corpus", s(&corpus), "--out", s(&dir.path().join("kg")), "--max-nodes", "10"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let row: Vec<&str> = out.stdout.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "worked");
    assert_eq!(row[3], "true");
}

#[test]
fn generate_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["generate-corpus", "--out", s(dir.path())]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.starts_with("12 problems, 60 states"));
    for file in ["problems.json", "states.json"] {
        assert_eq!(
            std::fs::read_to_string(dir.path().join(file)).unwrap(),
            std::fs::read_to_string(bundled().join(file)).unwrap()
        );
    }
    let summary = cli(&["summarize", "--corpus", s(dir.path())]);
    assert_eq!(summary.code, 0);
    let total = summary.stdout.lines().find(|l| l.starts_with("Total")).unwrap();
    assert_eq!(total.split_whitespace().nth(1), Some("60"));
}

/// Two full symbolic runs over the bundled corpus, shared by the tests below.
fn runs() -> &'static (tempfile::TempDir, PathBuf, PathBuf) {
    static RUNS: OnceLock<(tempfile::TempDir, PathBuf, PathBuf)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        for (path, conc) in [(&a, "4"), (&b, "1")] {
            let out = cli(&["run", "--corpus", s(&bundled()), "--out", s(path), "--concurrency", conc]);
            assert_eq!(out.code, 0, "{}", out.stderr);
            assert!(out.stdout.starts_with("180 records (60 states x 3 kinds)"), "{}", out.stdout);
        }
        (dir, a, b)
    })
}

#[test]
fn run_is_deterministic() {
    let (_, a, b) = runs();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    let records = load_records(a).unwrap();
    assert_eq!(records.len(), 180);
    assert_eq!(records[0].pipeline, PipelineKind::Tutor);
    assert_eq!(records[2].pipeline, PipelineKind::Judge);
    assert_eq!(records[0].backend_ids[&Role::Student], "symbolic-v1");
}

#[test]
fn report_from_records() {
    let (dir, a, _) = runs();
    let out = cli(&["report", "--records", s(a)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let mut lines = out.stdout.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "symbolic-v1");
    assert_eq!(row.len(), header.len());
    let uic = header.iter().position(|h| *h == "UIC").unwrap();
    assert!(!row[uic].is_empty());
    assert!(out.stdout.contains("Model,Pipeline,Complexity,N,Post"));

    let json_path = dir.path().join("report.json");
    let out = cli(&["report", "--records", s(a), "--format", "json", "--out", s(&json_path)]);
    assert_eq!(out.code, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(v["rows"][0]["states"], 60);

    // A Tutor-only slice has nothing to compare the Judge against.
    let text = std::fs::read_to_string(a).unwrap();
    let tutor_only: String = text.lines().step_by(3).map(|l| format!("{l}\n")).collect();
    let path = dir.path().join("tutor.jsonl");
    std::fs::write(&path, tutor_only).unwrap();
    let out = cli(&["report", "--records", s(&path)]);
    let row: Vec<&str> = out.stdout.lines().nth(1).unwrap().split(',').collect();
    assert!(row[uic].is_empty() && row[uic + 1].is_empty(), "{row:?}");
}

#[test]
fn missing_credentials_fail_before_any_state() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("remote.toml");
    std::fs::write(
        &config,
        r#"
[backend]
kind = "remote"

[backend.endpoint]
base_url = "http://127.0.0.1:9/v1"
model = "m"
api_key_env = "PROOFTUTOR_TEST_MISSING_KEY"
"#,
    )
    .unwrap();
    let records = dir.path().join("r.jsonl");
    let out = cli(&["run", "--config", s(&config), "--corpus", s(&bundled()), "--out", s(&records)]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("PROOFTUTOR_TEST_MISSING_KEY"), "{}", out.stderr);
    assert!(!records.exists());
}

#[test]
fn config_files_parse() {
    let dir = tempfile::tempdir().unwrap();
    let toml_path = dir.path().join("c.toml");
    std::fs::write(
        &toml_path,
        "concurrency = 2\nsession_ttl_secs = 60\n[bounds]\nmax_nodes = 1000\nmax_intermediates = 4\n[complexity]\nnegation = 0.5\nconjunction = 1.0\ndisjunction = 1.0\nimplication = 1.5\nbiconditional = 2.0\nalpha = 2.0\n",
    )
    .unwrap();
    let c = HarnessConfig::load(&toml_path).unwrap();
    assert_eq!(c.concurrency, 2);
    assert_eq!(c.bounds.max_nodes, 1000);
    assert_eq!(c.complexity.alpha, 2.0);
    assert_eq!(c.backend.kind, BackendChoice::Symbolic);

    let json_path = dir.path().join("c.json");
    std::fs::write(&json_path, r#"{"backend": {"kind": "remote", "seed": 3}}"#).unwrap();
    let c = HarnessConfig::load(&json_path).unwrap();
    assert_eq!(c.backend.kind, BackendChoice::Remote);
    assert_eq!(c.session_ttl_secs, 7200);

    std::fs::write(&json_path, r#"{"complexity": {"negation": 0.5, "conjunction": 1, "disjunction": 1, "implication": 1.5, "biconditional": 2, "alpha": 0.5}}"#).unwrap();
    assert!(HarnessConfig::load(&json_path).unwrap_err().contains("alpha"));
}
