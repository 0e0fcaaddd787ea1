//! Random instruction records of every task, plus the corpus-level checks
//! built on them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::augment::{rec_to_region_captions, region_caption_to_rec, TemplateChoice};
use crate::convert::{render_template, templates, InstructionRecord};
use crate::eval::{evaluate_records, match_boxes, DEFAULT_IOU_THRESHOLD};
use crate::geom::{
    rbb_from_params, rotated_iou, BoxParams, HorizontalBox, Point, Polygon, RotatedBox,
};
use crate::textcodec::{
    parse_answer, parse_point_set, serialize_answer, serialize_point_set, AnswerPayload,
    CoordSpace, SegTarget, TaskTag,
};

use super::geometry::random_polygon;
use super::resolution::{COLORS, OBJECT_CATEGORIES, REGION_CATEGORIES};
use super::CheckOutcome;

const CITIES: &[&str] = &[
    "Hangzhou", "Wuhan", "Paris", "Nairobi", "Lima", "Oslo", "San Jose",
];

fn bin_box(rng: &mut impl Rng) -> RotatedBox {
    loop {
        let p = BoxParams {
            cx: rng.gen_range(60.0..940.0),
            cy: rng.gen_range(60.0..940.0),
            w: rng.gen_range(8.0..80.0),
            h: rng.gen_range(8.0..80.0),
            theta: rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
        };
        let b = rbb_from_params(&p).expect("valid params");
        if let Ok(q) =
            RotatedBox::from_quad(b.corners().map(|c| Point::new(c.x.floor(), c.y.floor())))
        {
            return q;
        }
    }
}

fn bin_polygon(rng: &mut impl Rng) -> Polygon {
    loop {
        let p = random_polygon(rng, 1000.0);
        let v: Vec<Point> = p
            .vertices()
            .iter()
            .map(|q| Point::new(q.x.floor().clamp(0.0, 999.0), q.y.floor().clamp(0.0, 999.0)))
            .collect();
        if let Ok(p) = Polygon::new(v) {
            return p;
        }
    }
}

fn seg_target(rng: &mut impl Rng) -> SegTarget {
    let x0 = rng.gen_range(0..900) as f64;
    let y0 = rng.gen_range(0..900) as f64;
    let (x1, y1) = (
        x0 + rng.gen_range(1..99) as f64,
        y0 + rng.gen_range(1..99) as f64,
    );
    let points = (0..rng.gen_range(1..=4))
        .map(|_| {
            Point::new(
                rng.gen_range(x0 as u32..=x1 as u32) as f64,
                rng.gen_range(y0 as u32..=y1 as u32) as f64,
            )
        })
        .collect();
    SegTarget {
        hbb: HorizontalBox::new(Point::new(x0, y0), Point::new(x1, y1)).expect("ordered"),
        points,
    }
}

/// A localizing prompt with a random category and modifiers.
pub fn random_localizing_prompt(rng: &mut impl Rng, tag: TaskTag) -> String {
    let cat = OBJECT_CATEGORIES.choose(rng).unwrap();
    match rng.gen_range(0..4) {
        0 => render_template(templates(tag).choose(rng).unwrap(), cat),
        1 => format!("What's the location of the largest {cat} in this image?"),
        2 => format!(
            "find all {} {}",
            COLORS.choose(rng).unwrap(),
            crate::condparse::pluralize(cat)
        ),
        _ => format!(
            "detect all {} north of the {}",
            crate::condparse::pluralize(cat),
            REGION_CATEGORIES.choose(rng).unwrap()
        ),
    }
}

/// A valid record of `tag` in a normalized 1000-bin space (geoloc and text
/// tasks use a pixel space). Localizing answers have 1 to 4 objects unless
/// `allow_empty` lets them be empty.
pub fn random_record(
    rng: &mut impl Rng,
    tag: TaskTag,
    id: String,
    allow_empty: bool,
) -> InstructionRecord {
    let space = CoordSpace::normalized(rng.gen_range(256..4096), rng.gen_range(256..4096));
    let lo = usize::from(!allow_empty);
    let n = rng.gen_range(lo..=4);
    let (answer, space, images, prompt) = match tag {
        TaskTag::Detection | TaskTag::Grounding => (
            AnswerPayload::RboxList((0..n).map(|_| bin_box(rng)).collect()),
            space,
            1,
            random_localizing_prompt(rng, tag),
        ),
        TaskTag::Seg => (
            AnswerPayload::SegPrompt((0..n).map(|_| seg_target(rng)).collect()),
            space,
            1,
            random_localizing_prompt(rng, tag),
        ),
        TaskTag::Change => (
            AnswerPayload::PolyList((0..n).map(|_| bin_polygon(rng)).collect()),
            space,
            2,
            templates(TaskTag::Change).choose(rng).unwrap().to_string(),
        ),
        TaskTag::Geoloc => (
            AnswerPayload::GeoLoc {
                city: CITIES.choose(rng).unwrap().to_string(),
                lat: (rng.gen_range(-90.0..=90.0f64) * 1e4).round() / 1e4,
                lon: (rng.gen_range(-180.0..=180.0f64) * 1e4).round() / 1e4,
            },
            CoordSpace::pixel(1, 1),
            1,
            templates(TaskTag::Geoloc).choose(rng).unwrap().to_string(),
        ),
        TaskTag::Caption | TaskTag::Identify => (
            AnswerPayload::Caption(format!(
                "A {} {}",
                COLORS.choose(rng).unwrap(),
                OBJECT_CATEGORIES.choose(rng).unwrap()
            )),
            CoordSpace::pixel(512, 512),
            1,
            "Could you describe the object at {(1, 2), (3, 4)}?".to_string(),
        ),
    };
    InstructionRecord {
        id,
        tag,
        images: (0..images).map(|k| format!("img/{k}.png")).collect(),
        prompt,
        answer,
        space,
        meta: BTreeMap::new(),
    }
}

/// A corpus cycling through every task tag.
pub fn mixed_corpus(rng: &mut impl Rng, n: usize) -> Vec<InstructionRecord> {
    (0..n)
        .map(|k| {
            let tag = TaskTag::ALL[k % TaskTag::ALL.len()];
            random_record(rng, tag, format!("r{k:05}"), true)
        })
        .collect()
}

/// Serialize, parse, serialize again: point sets (integral and real),
/// box lists, polygon lists, seg targets and geolocations in rotation. Both
/// the value and the text must survive unchanged.
pub fn check_codec_roundtrip(rng: &mut impl Rng, n: usize) -> CheckOutcome {
    let mut bad = Vec::new();
    let space = CoordSpace::normalized(1024, 1024);
    for k in 0..n {
        let (text, again) = match k % 5 {
            0 => {
                let pts: Vec<Point> = (0..rng.gen_range(0..10))
                    .map(|_| {
                        if rng.gen_bool(0.5) {
                            Point::new(
                                rng.gen_range(-99_999..100_000) as f64,
                                rng.gen_range(-99_999..100_000) as f64,
                            )
                        } else {
                            Point::new(rng.gen_range(-1e7..1e7), rng.gen_range(-1e-3..1e-3))
                        }
                    })
                    .collect();
                let text = serialize_point_set(&pts).expect("finite");
                let back = parse_point_set(&text);
                let again = match back {
                    Ok(b) if b == pts => serialize_point_set(&b).ok(),
                    _ => None,
                };
                (text, again)
            }
            kind => {
                let tag = [
                    TaskTag::Detection,
                    TaskTag::Change,
                    TaskTag::Seg,
                    TaskTag::Geoloc,
                ][kind - 1];
                let r = random_record(rng, tag, String::new(), true);
                let space = if tag == TaskTag::Geoloc {
                    r.space
                } else {
                    space
                };
                let answer = match r.answer {
                    AnswerPayload::GeoLoc { city, .. } => AnswerPayload::GeoLoc {
                        city,
                        lat: rng.gen_range(-90.0..=90.0),
                        lon: rng.gen_range(-180.0..=180.0),
                    },
                    a => a,
                };
                let text = serialize_answer(&answer, &space).expect("valid payload");
                let again = match parse_answer(&text, tag, &space) {
                    Ok(b) if b == answer => serialize_answer(&b, &space).ok(),
                    _ => None,
                };
                (text, again)
            }
        };
        if again.as_deref() != Some(text.as_str()) {
            bad.push(text);
        }
    }
    CheckOutcome::new(
        "codec_roundtrip",
        bad.is_empty(),
        format!(
            "{n} payloads, {} mismatches{}",
            bad.len(),
            bad.first()
                .map(|b| format!("; first: {b}"))
                .unwrap_or_default()
        ),
    )
}

/// Scores a corpus against itself; every rate must be exactly 1.
pub fn check_self_evaluation(rng: &mut impl Rng, n: usize) -> CheckOutcome {
    let corpus = mixed_corpus(rng, n);
    let texts: Vec<String> = corpus
        .iter()
        .map(|r| serialize_answer(&r.answer, &r.space).expect("valid record"))
        .collect();
    let pairs: Vec<(&InstructionRecord, &str)> = corpus
        .iter()
        .zip(&texts)
        .map(|(r, t)| (r, t.as_str()))
        .collect();
    let report = evaluate_records(&pairs, DEFAULT_IOU_THRESHOLD);
    let mut bad = Vec::new();
    for (task, t) in &report.tasks {
        for (k, v) in &t.metrics {
            let want = if k.ends_with("_km") { 0.0 } else { 1.0 };
            if v.is_some_and(|v| v != want) || (v.is_none() && k != "mean_iou") {
                bad.push(format!("{task}.{k}={v:?}"));
            }
        }
    }
    CheckOutcome::new(
        "self_evaluation",
        bad.is_empty() && report.parse_failures == 0 && report.samples == n,
        format!(
            "{} samples over {} tasks, {} parse failures{}",
            report.samples,
            report.tasks.len(),
            report.parse_failures,
            if bad.is_empty() {
                String::new()
            } else {
                format!("; off: {}", bad.join(", "))
            }
        ),
    )
}

/// Localizing records through caption and back; every object must come back
/// with exactly its original payload.
pub fn check_involution(rng: &mut impl Rng, n: usize) -> CheckOutcome {
    let tags = [
        TaskTag::Detection,
        TaskTag::Grounding,
        TaskTag::Seg,
        TaskTag::Change,
    ];
    let (mut objects, mut bad) = (0, Vec::new());
    for k in 0..n {
        let r = random_record(rng, tags[k % tags.len()], format!("inv{k}"), false);
        let caps = match rec_to_region_captions(&r, TemplateChoice::Seeded(k as u64)) {
            Ok(c) => c,
            Err(e) => {
                bad.push(e.to_string());
                continue;
            }
        };
        let want_tag = if r.tag == TaskTag::Detection {
            TaskTag::Grounding
        } else {
            r.tag
        };
        for (cap, want) in caps.iter().zip(r.answer.split_objects()) {
            objects += 1;
            match region_caption_to_rec(cap) {
                Ok(back)
                    if back.answer == want && back.tag == want_tag && back.images == r.images => {}
                Ok(back) => bad.push(format!(
                    "{}: {:?} came back as {:?} {:?}; text {}",
                    cap.id, want, back.tag, back.answer, cap.prompt
                )),
                Err(e) => bad.push(e.to_string()),
            }
        }
    }
    CheckOutcome::new(
        "augmentation_involution",
        bad.is_empty(),
        format!(
            "{n} records, {objects} objects, {} mismatches{}",
            bad.len(),
            bad.first()
                .map(|b| format!("; first: {b}"))
                .unwrap_or_default()
        ),
    )
}

/// Exhaustive matching at small n: the matching whose IoUs, sorted in
/// descending order, are lexicographically largest.
pub fn best_first_matching(gt: &[RotatedBox], pred: &[RotatedBox], thresh: f64) -> Vec<f64> {
    fn go(
        i: usize,
        iou: &[Vec<f64>],
        used: &mut Vec<bool>,
        cur: &mut Vec<f64>,
        best: &mut Vec<f64>,
        thresh: f64,
    ) {
        if i == iou.len() {
            let mut s = cur.clone();
            s.sort_by(|a, b| b.total_cmp(a));
            let better = s
                .iter()
                .zip(best.iter())
                .find(|(a, b)| a != b)
                .map(|(a, b)| a > b)
                .unwrap_or(s.len() > best.len());
            if better {
                *best = s;
            }
            return;
        }
        go(i + 1, iou, used, cur, best, thresh);
        for j in 0..used.len() {
            if !used[j] && iou[i][j] >= thresh && iou[i][j] > 0.0 {
                used[j] = true;
                cur.push(iou[i][j]);
                go(i + 1, iou, used, cur, best, thresh);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let iou: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| pred.iter().map(|p| rotated_iou(g, p)).collect())
        .collect();
    let mut best = Vec::new();
    go(
        0,
        &iou,
        &mut vec![false; pred.len()],
        &mut Vec::new(),
        &mut best,
        thresh,
    );
    best
}

/// Greedy matching against the exhaustive oracle on random sets of up to
/// five boxes per side, drawn to overlap often.
pub fn check_matching(rng: &mut impl Rng, trials: usize) -> CheckOutcome {
    let mut bad = 0;
    let mut first = None;
    for t in 0..trials {
        let gt: Vec<RotatedBox> = (0..rng.gen_range(0..=5))
            .map(|_| {
                rbb_from_params(&BoxParams {
                    cx: rng.gen_range(0.0..60.0),
                    cy: rng.gen_range(0.0..60.0),
                    w: rng.gen_range(10.0..30.0),
                    h: rng.gen_range(10.0..30.0),
                    theta: rng.gen_range(-1.5..1.5),
                })
                .unwrap()
            })
            .collect();
        let pred: Vec<RotatedBox> = (0..rng.gen_range(0..=5))
            .map(|k| {
                let base = gt.get(k).and_then(|b| crate::geom::rbb_to_params(b).ok());
                let p = match base {
                    Some(b) if rng.gen_bool(0.7) => BoxParams {
                        cx: b.cx + rng.gen_range(-4.0..4.0),
                        cy: b.cy + rng.gen_range(-4.0..4.0),
                        ..b
                    },
                    _ => BoxParams {
                        cx: rng.gen_range(0.0..60.0),
                        cy: rng.gen_range(0.0..60.0),
                        w: rng.gen_range(10.0..30.0),
                        h: rng.gen_range(10.0..30.0),
                        theta: rng.gen_range(-1.5..1.5),
                    },
                };
                rbb_from_params(&p).unwrap()
            })
            .collect();
        let m = match_boxes(&gt, &pred, DEFAULT_IOU_THRESHOLD);
        let mut greedy: Vec<f64> = m.pairs.iter().map(|p| p.2).collect();
        greedy.sort_by(|a, b| b.total_cmp(a));
        let oracle = best_first_matching(&gt, &pred, DEFAULT_IOU_THRESHOLD);
        if greedy != oracle {
            bad += 1;
            first.get_or_insert(format!("trial {t}: greedy {greedy:?} vs oracle {oracle:?}"));
        }
    }
    CheckOutcome::new(
        "greedy_matching",
        bad == 0,
        format!(
            "{trials} trials, {bad} disagreements{}",
            first.map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}
