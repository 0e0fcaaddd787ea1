use std::path::PathBuf;

use rsvlts::eval::{evaluate, DEFAULT_IOU_THRESHOLD};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/eval10")
        .join(name)
}

fn close(got: Option<f64>, want: f64) {
    let got = got.expect("metric present");
    assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
}

#[test]
fn hand_scored_fixture() {
    let r = evaluate(
        &fixture("gt.jsonl"),
        &fixture("pred.jsonl"),
        DEFAULT_IOU_THRESHOLD,
    )
    .unwrap();
    assert_eq!(r.samples, 10);
    assert_eq!(r.parse_failures, 1);

    // d1 exact hit; d2 one 10px box shifted by 2 (80 / 120) plus a stray
    // box and a miss; d3 garbled text scored as an empty answer.
    let det = &r.tasks["detection"];
    assert_eq!(
        (det.counts["tp"], det.counts["fp"], det.counts["fn"]),
        (2, 1, 1)
    );
    assert_eq!(det.parse_failures, 1);
    close(det.metrics["precision"], 2.0 / 3.0);
    close(det.metrics["recall"], 2.0 / 3.0);
    close(det.metrics["f1"], 2.0 / 3.0);
    close(det.metrics["mean_iou"], (1.0 + 80.0 / 120.0) / 2.0);

    // 50 of 100 box pixels, then an identical box.
    close(r.tasks["seg"].metrics["mean_iou"], (0.5 + 1.0) / 2.0);

    // Two 4x4 squares offset by two columns share 8 pixels.
    let ch = &r.tasks["change"];
    assert_eq!(
        (ch.counts["tp_px"], ch.counts["fp_px"], ch.counts["fn_px"]),
        (8, 8, 8)
    );
    close(ch.metrics["precision"], 0.5);
    close(ch.metrics["recall"], 0.5);
    close(ch.metrics["f1"], 0.5);

    // A quarter of a great circle, then the same point under another name.
    let quarter = 6371.0 * std::f64::consts::FRAC_PI_2;
    let geo = &r.tasks["geoloc"];
    close(geo.metrics["mean_km"], quarter / 2.0);
    close(geo.metrics["median_km"], quarter / 2.0);
    close(geo.metrics["city_match"], 0.5);
    assert!((quarter - 10007.543).abs() < 1e-3);

    let id = &r.tasks["identify"];
    close(id.metrics["exact_match"], 0.0);
    close(id.metrics["normalized_match"], 1.0);
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    let gt = std::fs::read_to_string(fixture("gt.jsonl")).unwrap();
    let lines: Vec<String> = gt
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            serde_json::json!({"id": v["id"], "answer": v["answer"]}).to_string()
        })
        .collect();
    std::fs::write(&pred, lines.join("\n")).unwrap();
    let r = evaluate(&fixture("gt.jsonl"), &pred, DEFAULT_IOU_THRESHOLD).unwrap();
    assert_eq!(r.parse_failures, 0);
    for (task, t) in &r.tasks {
        for (k, v) in &t.metrics {
            let want = if k.ends_with("_km") { 0.0 } else { 1.0 };
            assert_eq!(*v, Some(want), "{task}.{k}");
        }
    }
}

#[test]
fn id_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    std::fs::write(
        &pred,
        "{\"id\": \"d1\", \"answer\": \"{}\"}\n{\"id\": \"zz\", \"answer\": \"{}\"}\n",
    )
    .unwrap();
    let err = evaluate(&fixture("gt.jsonl"), &pred, DEFAULT_IOU_THRESHOLD)
        .unwrap_err()
        .to_string();
    assert!(err.contains("missing") && err.contains("zz"), "{err}");
}
