mod common;

use common::*;
use serde_json::Value;

#[test]
fn run_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let report = dir.path().join("report.json");
    let fx = figure2();
    let o = run(&[
        "run",
        "--workflow", s(&fx.join("workflow_mock.toml")),
        "--input", s(&fx.join("articles.csv")),
        "--output", s(&out),
        "--report", s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fx.join("expected_output.csv")).unwrap());
    assert_eq!(
        std::fs::read_to_string(&report).unwrap(),
        std::fs::read_to_string(fx.join("expected_report.json")).unwrap()
    );
    assert!(o.stdout.is_empty());
}

#[test]
fn jsonl_output_by_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.data");
    let fx = figure2();
    let o = run(&[
        "run", "--workflow", s(&fx.join("workflow_mock.toml")), "--input", s(&fx.join("articles.csv")),
        "--output", s(&out), "--format", "jsonl",
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 6);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["round-B_Carol_output"].is_null());
}

#[test]
fn permanent_failure_is_partial_success() {
    let dir = figure2_copy();
    let script_path = dir.path().join("mock_script.json");
    let mut script: Value = serde_json::from_str(&std::fs::read_to_string(&script_path).unwrap()).unwrap();
    script["agents"]["Carol"]["failures"] = serde_json::json!({"4": {"response": "I cannot decide."}});
    std::fs::write(&script_path, script.to_string()).unwrap();
    let out = dir.path().join("out.csv");
    let report = dir.path().join("report.json");
    let o = run(&[
        "run", "--workflow", s(&dir.path().join("workflow_mock.toml")),
        "--input", s(&dir.path().join("articles.csv")), "--output", s(&out), "--report", s(&report),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_violation"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let failures = r["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["agent"], "Carol");
    assert_eq!(failures[0]["row"], 4);
    assert_eq!(failures[0]["round_id"], "B");
    let table = roundtable::io::read_dataset(&out, roundtable::Format::Csv).unwrap().table;
    assert_eq!(table.cell(4, "round-B_Carol_evaluation"), Some(None));
    assert_eq!(table.cell(5, "round-B_Carol_evaluation"), Some(Some("5")));
}

#[test]
fn validate_reports_config_problems() {
    let fx = figure2();
    assert_eq!(code(&run(&["validate", "--workflow", s(&fx.join("workflow.toml"))])), 0);
    assert_eq!(
        code(&run(&["validate", "--workflow", s(&fx.join("workflow.toml")), "--input", s(&fx.join("articles.csv"))])),
        0
    );

    let dir = figure2_copy();
    let cfg = dir.path().join("workflow.toml");
    let text = std::fs::read_to_string(&cfg).unwrap();
    std::fs::write(&cfg, text.replace("round-A_Alice_evaluation != round-A_Bob_evaluation", "a ==")).unwrap();
    let o = run(&["validate", "--workflow", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("position 5"), "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&cfg, text.replacen("provider = \"mini\"", "provider = \"nope\"", 1)).unwrap();
    let o = run(&["validate", "--workflow", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown provider `nope`"));

    let csv = dir.path().join("no_abstract.csv");
    std::fs::write(&csv, "title\nX\n").unwrap();
    let o = run(&["validate", "--workflow", s(&fx.join("workflow.toml")), "--input", s(&csv)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`abstract`"));
}

#[test]
fn missing_credential_is_a_config_error() {
    let fx = figure2();
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--workflow", s(&fx.join("workflow.toml")), "--input", s(&fx.join("articles.csv"))])
        .args(["--output", s(&dir.path().join("o.csv"))])
        .env_remove("OPENAI_API_KEY")
        .env_remove("GEMINI_API_KEY")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("OPENAI_API_KEY"));
}

#[test]
fn secrets_never_leak() {
    const SECRET: &str = "sk-test-0123456789-DO-NOT-PRINT";
    let dir = figure2_copy();
    let cfg = dir.path().join("workflow.toml");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("model = \"gpt-4o-mini\"", "model = \"gpt-4o-mini\"\nbase_url = \"http://127.0.0.1:9/v1\"\nmax_retries = 0\ntimeout_secs = 2")
        .replace("base_url = \"https://generativelanguage.googleapis.com/v1beta/openai\"", "base_url = \"http://127.0.0.1:9/v1\"\nmax_retries = 0\ntimeout_secs = 2")
        .replace("model = \"gpt-4o\"\n", "model = \"gpt-4o\"\nbase_url = \"http://127.0.0.1:9/v1\"\nmax_retries = 0\ntimeout_secs = 2\n");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out.csv");
    let report = dir.path().join("report.json");
    let o = bin()
        .args(["-vv", "run", "--workflow", s(&cfg), "--input", s(&dir.path().join("articles.csv"))])
        .args(["--output", s(&out), "--report", s(&report)])
        .env("OPENAI_API_KEY", SECRET)
        .env("GEMINI_API_KEY", SECRET)
        .env("RUST_LOG", "trace")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let mut haystack = String::from_utf8_lossy(&o.stdout).into_owned();
    haystack += &String::from_utf8_lossy(&o.stderr);
    haystack += &std::fs::read_to_string(&report).unwrap();
    haystack += &std::fs::read_to_string(&out).unwrap();
    assert!(haystack.contains("transport_error"));
    assert!(!haystack.contains(SECRET));
    assert!(!haystack.contains("DO-NOT-PRINT"));
}

#[test]
fn consensus_command() {
    let fx = figure2();
    let dir = tempfile::tempdir().unwrap();
    let run_out = dir.path().join("run.csv");
    assert_eq!(
        code(&run(&["run", "--workflow", s(&fx.join("workflow_mock.toml")), "--input", s(&fx.join("articles.csv")), "--output", s(&run_out)])),
        0
    );
    let out = dir.path().join("final.csv");
    let o = run(&[
        "consensus", "--input", s(&run_out), "--output", s(&out),
        "--junior", "round-A_Alice_evaluation", "--junior", "round-A_Bob_evaluation",
        "--senior", "round-B_Carol_evaluation", "--out-col", "final_score",
    ]);
    // Row 3 has two neutral junior scores and no senior review.
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
    let t = roundtable::io::read_dataset(&out, roundtable::Format::Csv).unwrap().table;
    let finals: Vec<Option<&str>> = t.column_cells("final_score").unwrap();
    assert_eq!(finals, vec![Some("5.0"), Some("4.0"), Some("1.0"), None, Some("1.0"), Some("5.0")]);

    let out2 = dir.path().join("final2.csv");
    let o = run(&["consensus", "--input", s(&run_out), "--output", s(&out2), "--workflow", s(&fx.join("workflow_mock.toml"))]);
    assert_eq!(code(&o), 3);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn eval_command_outputs() {
    let input = fixtures().join("metrics").join("scored.csv");
    let dir = tempfile::tempdir().unwrap();
    let roc = dir.path().join("roc.csv");
    let o = run(&[
        "eval", "--input", s(&input), "--score-col", "final_score", "--label-col", "label",
        "--thresholds", "1.5,3.0,4.5", "--roc-out", s(&roc), "--dataset", "Fixture",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Sensitive (T = 1.5)"), "{text}");
    assert!(text.contains("0.7031"), "{text}");
    let roc = std::fs::read_to_string(&roc).unwrap();
    assert!(roc.starts_with("fpr,tpr\n0,0\n"), "{roc}");
    assert!(roc.trim_end().ends_with("1,1"));
}

#[test]
fn exit_codes_for_bad_usage() {
    assert_eq!(code(&run(&["bogus"])), 1);
    let o = run(&["--version"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
    let o = run(&["eval", "--input", "/nonexistent.csv", "--score-col", "s", "--label-col", "l"]);
    assert_eq!(code(&o), 2);
    let o = run(&["eval", "--input", "/nonexistent.csv", "--score-col", "s", "--label-col", "l", "--thresholds", "7"]);
    assert_eq!(code(&o), 1);
}
