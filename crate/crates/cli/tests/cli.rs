use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsvlts"))
        .args(args)
        .env_remove("RSVLTS_GROUNDER_URL")
        .output()
        .unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let o = run(&["decompose", "--frobnicate", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "convert",
        "--task",
        "geoloc",
        "--input",
        "/no/such/file.jsonl",
        "--output",
        &s(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn convert_then_evaluate_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("det.jsonl");
    let o = run(&[
        "convert",
        "--task",
        "detection",
        "--input",
        &fixture("scenes.jsonl"),
        "--output",
        &s(&out),
        "--category",
        "planes",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    assert!(text.contains("\"id\":\"s1:detection:plane\""));

    let o = run(&["evaluate", "--gt", &s(&out), "--pred", &s(&out), "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["parse_failures"], 0);
    assert_eq!(v["tasks"]["detection"]["metrics"]["f1"], 1.0);
}

#[test]
fn validate_reports_bad_lines_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("geo.jsonl");
    assert!(run(&[
        "convert",
        "--task",
        "geoloc",
        "--input",
        &fixture("geoloc.jsonl"),
        "--output",
        &s(&good)
    ])
    .status
    .success());
    let o = run(&["validate", &s(&good)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("3 records, 0 errors"));

    let mut text = std::fs::read_to_string(&good).unwrap();
    text.push_str("{\"schema\":\"rsvlts/1\",\"id\":\"bad\",\"tag\":\"detection\",\"images\":[\"a.png\"],\"prompt\":\"p\",\"answer\":\"{(1, 2)}\",\"space\":{\"mode\":\"pixel\",\"bins\":1000,\"image_w\":10,\"image_h\":10}}\n");
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, text).unwrap();
    let o = run(&["validate", &s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("line 4"), "{}", stdout(&o));
}

#[test]
fn resolve_prints_trace() {
    let o = run(&[
        "resolve",
        "--scene",
        &fixture("scene_graph.json"),
        "detect all planes on the east bank of the river",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["ids"], serde_json::json!([2, 3]));
    assert_eq!(v["trace"][1]["in_count"], 3);
    assert_eq!(v["trace"][1]["out_count"], 2);
}

#[test]
fn resolve_without_grounder_is_an_error() {
    let o = run(&["resolve", "detect all planes"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn emit_prompts_for_seg_records() {
    let dir = tempfile::tempdir().unwrap();
    let seg = dir.path().join("seg.jsonl");
    let prompts = dir.path().join("prompts.jsonl");
    let o = run(&[
        "convert",
        "--task",
        "seg",
        "--input",
        &fixture("scenes.jsonl"),
        "--output",
        &s(&seg),
        "--category",
        "storage tank",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run(&[
        "emit-prompts",
        "--input",
        &s(&seg),
        "--output",
        &s(&prompts)
    ])
    .status
    .success());
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&prompts)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["targets"].as_array().unwrap().len(), 2);
    assert_eq!(
        lines[0]["targets"][0]["labels"],
        serde_json::json!([1, 1, 1])
    );
}

#[test]
fn selfcheck_quick_passes() {
    let o = run(&["selfcheck", "--quick"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
