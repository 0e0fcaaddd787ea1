use std::path::{Path, PathBuf};

use rsvlts::augment::{augment_corpus, rec_to_region_captions, TemplateChoice};
use rsvlts::convert::*;
use rsvlts::eval::{evaluate, evaluate_records, DEFAULT_IOU_THRESHOLD};
use rsvlts::geom::{rasterize_union, BinaryMask};
use rsvlts::selfcheck::{records::mixed_corpus, rng};
use rsvlts::textcodec::{serialize_answer, AnswerPayload, TaskTag};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn pixel_opts() -> ConvertOptions {
    ConvertOptions {
        mode: rsvlts::textcodec::CoordMode::Pixel,
        ..ConvertOptions::default()
    }
}

#[test]
fn fixture_scenes_convert_per_category() {
    let scenes = read_scenes(&fixture("scenes.jsonl")).unwrap();
    assert_eq!(scenes.len(), 2);
    let recs = convert_scenes(
        &scenes,
        TaskTag::Detection,
        None,
        &ConvertOptions::default(),
    )
    .unwrap();
    let ids: Vec<&str> = recs.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(
        ids,
        [
            "s1:detection:plane",
            "s1:detection:pond",
            "s1:detection:storage tank",
            "s2:detection:pond",
            "s2:detection:ship",
            "s2:detection:storage tank"
        ]
    );
    let counts: Vec<Option<usize>> = recs.iter().map(|r| r.answer.object_count()).collect();
    assert_eq!(
        counts,
        [Some(2), Some(1), Some(1), Some(1), Some(2), Some(2)]
    );

    let none = convert_detection(&scenes[0], "ship", &ConvertOptions::default()).unwrap();
    assert_eq!(none.answer, AnswerPayload::RboxList(vec![]));
}

#[test]
fn embedded_text_is_the_serialized_answer() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = read_scenes(&fixture("scenes.jsonl")).unwrap();
    let mut recs = convert_scenes(
        &scenes,
        TaskTag::Detection,
        None,
        &ConvertOptions::default(),
    )
    .unwrap();
    recs.extend(
        convert_scenes(
            &scenes,
            TaskTag::Seg,
            Some("pond"),
            &ConvertOptions::default(),
        )
        .unwrap(),
    );
    let path = dir.path().join("r.jsonl");
    write_records(&path, &recs).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    for (line, r) in text.lines().zip(&recs) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(
            v["answer"].as_str().unwrap(),
            serialize_answer(&r.answer, &r.space).unwrap()
        );
    }
    assert_eq!(read_records(&path).unwrap(), recs);
}

#[test]
fn change_blobs_become_polygons_covering_the_mask() {
    let samples = read_change_samples(&fixture("change.jsonl")).unwrap();
    let c1 = convert_change(&samples[0], &pixel_opts()).unwrap();
    let AnswerPayload::PolyList(polys) = &c1.answer else {
        panic!("{:?}", c1.answer)
    };
    assert_eq!(polys.len(), 2);
    let m = &samples[0].mask;
    let back = rasterize_union(polys, m.width(), m.height());
    let inter = back
        .bits()
        .iter()
        .zip(m.bits())
        .filter(|(a, b)| **a && **b)
        .count();
    let union = back
        .bits()
        .iter()
        .zip(m.bits())
        .filter(|(a, b)| **a || **b)
        .count();
    assert!(inter as f64 / union as f64 >= 0.95);
    assert_eq!(c1.prompt, "Locate the new buildings.");

    let empty = convert_change(&samples[2], &pixel_opts()).unwrap();
    assert_eq!(empty.answer, AnswerPayload::PolyList(vec![]));
}

#[test]
fn single_pixel_noise_is_dropped() {
    let mut mask = BinaryMask::new(32, 32);
    mask.set(5, 5, true);
    mask.set(20, 9, true);
    let s = ChangeSample {
        id: "n".into(),
        image_a: "a".into(),
        image_b: "b".into(),
        mask,
        caption: None,
    };
    assert_eq!(
        convert_change(&s, &pixel_opts()).unwrap().answer,
        AnswerPayload::PolyList(vec![])
    );
}

#[test]
fn geoloc_fixture_records() {
    let recs: Vec<_> = read_geoloc_samples(&fixture("geoloc.jsonl"))
        .unwrap()
        .iter()
        .map(|g| convert_geoloc(g, &ConvertOptions::default()).unwrap())
        .collect();
    assert_eq!(
        recs[2].answer_text().unwrap(),
        "[San Jose, (37.3382, -121.8863)]"
    );
    let bad = GeolocSample {
        id: "x".into(),
        image: "x.png".into(),
        city: "Nowhere".into(),
        lat: 95.0,
        lon: 0.0,
    };
    assert!(convert_geoloc(&bad, &ConvertOptions::default()).is_err());
}

#[test]
fn empty_prompt_list_gives_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    write_lines(&path, &emit_segmenter_prompts(&[]).unwrap()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"");
}

fn single_object(n: usize) -> Vec<InstructionRecord> {
    let scenes = read_scenes(&fixture("scenes.jsonl")).unwrap();
    let base = convert_detection(&scenes[0], "pond", &ConvertOptions::default()).unwrap();
    (0..n)
        .map(|k| InstructionRecord {
            id: format!("pond{k}"),
            ..base.clone()
        })
        .collect()
}

#[test]
fn augment_ratio_extremes() {
    let recs = single_object(12);
    assert_eq!(augment_corpus(&recs, 0.0, 7), recs);
    let all = augment_corpus(&recs, 1.0, 7);
    assert_eq!(all.len(), 24);
    assert!(all[12..].iter().all(|r| r.tag == TaskTag::Identify));
}

#[test]
fn augment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let recs = read_records(&{
        let p = dir.path().join("in.jsonl");
        let scenes = read_scenes(&fixture("scenes.jsonl")).unwrap();
        write_records(
            &p,
            &convert_scenes(
                &scenes,
                TaskTag::Detection,
                None,
                &ConvertOptions::default(),
            )
            .unwrap(),
        )
        .unwrap();
        p
    })
    .unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_records(&a, &augment_corpus(&recs, 0.5, 7)).unwrap();
    write_records(&b, &augment_corpus(&recs, 0.5, 7)).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn caption_phrase_appears_in_reverse_prompt() {
    let r = &single_object(1)[0];
    let cap = &rec_to_region_captions(r, TemplateChoice::Canonical).unwrap()[0];
    let AnswerPayload::Caption(phrase) = &cap.answer else {
        panic!()
    };
    let back = rsvlts::augment::region_caption_to_rec(cap).unwrap();
    assert!(
        back.prompt.contains(&phrase.to_lowercase()),
        "{} / {phrase}",
        back.prompt
    );
}

fn write_preds(
    path: &Path,
    recs: &[InstructionRecord],
    answer: impl Fn(&InstructionRecord) -> String,
) {
    let lines: Vec<String> = recs
        .iter()
        .map(|r| serde_json::json!({"id": r.id, "answer": answer(r)}).to_string())
        .collect();
    write_lines(path, &lines).unwrap();
}

#[test]
fn garbled_predictions_all_count_as_failures() {
    let dir = tempfile::tempdir().unwrap();
    let recs: Vec<_> = mixed_corpus(&mut rng(9), 50)
        .into_iter()
        .filter(|r| !matches!(r.answer, AnswerPayload::Caption(_)))
        .collect();
    let (gt, pred) = (dir.path().join("gt.jsonl"), dir.path().join("pred.jsonl"));
    write_records(&gt, &recs).unwrap();
    write_preds(&pred, &recs, |_| "sorry, no idea".into());
    let r = evaluate(&gt, &pred, DEFAULT_IOU_THRESHOLD).unwrap();
    assert_eq!(r.parse_failures, recs.len());
    let gt_boxes: usize = recs
        .iter()
        .filter(|r| r.tag == TaskTag::Detection)
        .filter_map(|r| r.answer.object_count())
        .sum();
    let det = &r.tasks["detection"];
    assert_eq!(
        (det.counts["tp"], det.counts["fp"], det.counts["fn"]),
        (0, 0, gt_boxes as u64)
    );
    assert_eq!(r.tasks["geoloc"].metrics["mean_km"], None);
    assert_eq!(
        r.tasks["geoloc"].counts["unscored"],
        r.tasks["geoloc"].samples as u64
    );
}

#[test]
fn prediction_order_within_a_sample_does_not_matter() {
    let recs: Vec<_> = mixed_corpus(&mut rng(10), 140)
        .into_iter()
        .filter(|r| {
            matches!(
                r.tag,
                TaskTag::Detection | TaskTag::Grounding | TaskTag::Seg | TaskTag::Change
            )
        })
        .collect();
    // Each sample is scored against the answer of the next sample with the
    // same tag, so matches are partial.
    let other = |k: usize| {
        recs.iter()
            .cycle()
            .skip(k + 1)
            .find(|o| o.tag == recs[k].tag)
            .unwrap()
    };
    let render = |r: &InstructionRecord, parts: Vec<AnswerPayload>| -> String {
        let texts: Vec<String> = parts
            .iter()
            .map(|p| serialize_answer(p, &r.space).unwrap())
            .collect();
        if texts.is_empty() {
            "{}".into()
        } else {
            texts.join("; ")
        }
    };
    let forward: Vec<String> = (0..recs.len())
        .map(|k| render(&recs[k], other(k).answer.split_objects()))
        .collect();
    let reversed: Vec<String> = (0..recs.len())
        .map(|k| {
            let mut parts = other(k).answer.split_objects();
            parts.reverse();
            render(&recs[k], parts)
        })
        .collect();
    let a: Vec<(&InstructionRecord, &str)> = recs
        .iter()
        .zip(&forward)
        .map(|(r, t)| (r, t.as_str()))
        .collect();
    let b: Vec<(&InstructionRecord, &str)> = recs
        .iter()
        .zip(&reversed)
        .map(|(r, t)| (r, t.as_str()))
        .collect();
    assert_eq!(evaluate_records(&a, 0.5), evaluate_records(&b, 0.5));
}
