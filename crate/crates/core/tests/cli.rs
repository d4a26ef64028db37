use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_patentforge"))
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn project_args<'a>(claims: &'a str, drawings: &'a str) -> Vec<&'a str> {
    vec!["--claims", claims, "--drawings", drawings]
}

#[test]
fn claims_parse_text_and_json() {
    let claims = fixture("project/claims.txt");
    let text = stdout(&run(&["claims", "parse", claims.to_str().unwrap()]));
    assert!(text.contains("[1-0] a memory storing data"));
    assert!(text.contains("claim 2 (depends on 1)"));
    let json: Value = serde_json::from_str(&stdout(&run(&["claims", "parse", claims.to_str().unwrap(), "--json"]))).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);
    assert_eq!(json[1]["features"].as_array().unwrap().len(), 2);
}

#[test]
fn malformed_claims_exit_nonzero_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1. A thing.\n1. Another thing.\n").unwrap();
    let o = run(&["claims", "parse", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error:") && err.contains("line 2"), "{err}");
}

#[test]
fn drawings_and_score() {
    let text = stdout(&run(&["drawings", "ingest", fixture("project/drawings.json").to_str().unwrap()]));
    assert!(text.contains("FIG. 1"));
    assert!(text.contains("network interface 108"));
    let score: Value = serde_json::from_str(&stdout(&run(&[
        "score",
        "--feature",
        "a memory storing data",
        "--component",
        "memory",
    ])))
    .unwrap();
    assert_eq!(score["cosine"], 0.5);
    let c = score["combined"].as_f64().unwrap();
    let mean = (score["cosine"].as_f64().unwrap() + score["bleu1"].as_f64().unwrap() + score["bleu2"].as_f64().unwrap()) / 3.0;
    assert!((c - mean).abs() < 1e-12);
}

#[test]
fn map_suggest_and_eval() {
    let (c, d) = (fixture("project/claims.txt"), fixture("project/drawings.json"));
    let mut args = vec!["map", "suggest"];
    args.extend(project_args(c.to_str().unwrap(), d.to_str().unwrap()));
    let set: Value = serde_json::from_str(&stdout(&run(&args))).unwrap();
    let entries = set["entries"].as_array().unwrap();
    assert!(entries.iter().any(|e| e["feature_id"] == "1-0" && e["component_ref"] == "1:104"));

    let gold = fixture("project/gold.json");
    let mut args = vec!["map", "eval", "--gold", gold.to_str().unwrap()];
    args.extend(project_args(c.to_str().unwrap(), d.to_str().unwrap()));
    let eval: Value = serde_json::from_str(&stdout(&run(&args))).unwrap();
    let p5 = eval["precision_at_5"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p5));
}

#[test]
fn pipeline_with_gold_mappings() {
    let (c, d, g) = (fixture("project/claims.txt"), fixture("project/drawings.json"), fixture("project/gold.json"));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec.txt");
    let mut args = vec!["pipeline", "run", "--gold", g.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(project_args(c.to_str().unwrap(), d.to_str().unwrap()));
    stdout(&run(&args));
    let text = std::fs::read_to_string(&out).unwrap();
    for needle in ["FIG. 1", "memory 104", "processor 106", "network interface 108"] {
        assert!(text.contains(needle), "{needle} missing: {text}");
    }
    assert!(!text.contains('<'));
}

#[test]
fn clean_strips_markup() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("raw.txt");
    std::fs::write(&f, "<fig 1> shows the <com> memory <num> 104 </num></com>.").unwrap();
    let text = stdout(&run(&["clean", f.to_str().unwrap()]));
    assert!(text.contains("FIG. 1 shows the memory 104"), "{text}");
}

#[test]
fn dataset_build_writes_jsonl_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out/tuples.jsonl");
    let o = run(&[
        "dataset",
        "build",
        "--in",
        fixture("patents").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--parallelism",
        "2",
    ]);
    stdout(&o);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 10);
    assert!(dir.path().join("out/tuples.stats.json").exists());
}
