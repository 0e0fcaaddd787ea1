//! Scoring predictions against ground-truth records.
//!
//! Predictions are JSON lines carrying at least `id` and `answer` (the
//! serialized answer text); full record lines work too. Each answer is parsed
//! leniently with the ground truth's tag and space. Text that does not parse
//! counts as a parse failure and is scored as an empty prediction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convert::{read_records, ConvertError, InstructionRecord};
use crate::geom::{
    haversine_km, rasterize_union, rotated_iou, BinaryMask, HorizontalBox, LatLon, Polygon,
    RotatedBox,
};
use crate::textcodec::{parse_answer, AnswerPayload, TaskTag};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Convert(#[from] ConvertError),
    #[error("prediction ids do not match ground truth: {0}")]
    IdMismatch(String),
}

impl EvalError {
    pub fn is_io(&self) -> bool {
        matches!(self, EvalError::Convert(e) if e.is_io())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(gt index, pred index, iou)` in the order they were taken.
    pub pairs: Vec<(usize, usize, f64)>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy one-to-one matching by descending rotated IoU; pairs below
/// `thresh` stay unmatched. Ties go to the lower gt, then pred index.
pub fn match_boxes(gt: &[RotatedBox], pred: &[RotatedBox], thresh: f64) -> Matching {
    let mut cand = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            let iou = rotated_iou(g, p);
            if iou >= thresh && iou > 0.0 {
                cand.push((i, j, iou));
            }
        }
    }
    cand.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let (mut gu, mut pu) = (vec![false; gt.len()], vec![false; pred.len()]);
    let mut pairs = Vec::new();
    for (i, j, iou) in cand {
        if !gu[i] && !pu[j] {
            gu[i] = true;
            pu[j] = true;
            pairs.push((i, j, iou));
        }
    }
    let tp = pairs.len();
    Matching {
        pairs,
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PixelScores {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PixelScores {
    /// 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 1 when there was nothing to find.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, o: PixelScores) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn compare_masks(gt: &BinaryMask, pred: &BinaryMask) -> PixelScores {
    let mut s = PixelScores::default();
    for (g, p) in gt.bits().iter().zip(pred.bits()) {
        match (g, p) {
            (true, true) => s.tp += 1,
            (false, true) => s.fp += 1,
            (true, false) => s.fn_ += 1,
            _ => {}
        }
    }
    s
}

/// Pixel counts after rasterizing both polygon unions on a `w`x`h` canvas.
pub fn score_change(gt: &[Polygon], pred: &[Polygon], w: usize, h: usize) -> PixelScores {
    compare_masks(&rasterize_union(gt, w, h), &rasterize_union(pred, w, h))
}

/// Great-circle error in km and whether the trimmed city names agree
/// ignoring case.
pub fn score_geoloc(
    gt: (&str, f64, f64),
    pred: (&str, f64, f64),
) -> Result<(f64, bool), crate::geom::GeomError> {
    let a = LatLon::new(gt.1, gt.2)?;
    let b = LatLon::new(pred.1, pred.2)?;
    Ok((
        haversine_km(a, b)?,
        gt.0.trim().to_lowercase() == pred.0.trim().to_lowercase(),
    ))
}

fn box_mask(boxes: &[HorizontalBox], w: usize, h: usize) -> BinaryMask {
    let mut m = BinaryMask::new(w, h);
    for b in boxes {
        let (a, c) = (b.min(), b.max());
        let x0 = a.x.floor().max(0.0) as usize;
        let y0 = a.y.floor().max(0.0) as usize;
        let x1 = (c.x.floor().max(-1.0) + 1.0).min(w as f64) as usize;
        let y1 = (c.y.floor().max(-1.0) + 1.0).min(h as f64) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Normalized caption text: lowercase, punctuation removed, whitespace
/// collapsed and a leading article dropped.
pub fn normalize_caption(s: &str) -> String {
    let cleaned: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let mut words: Vec<&str> = cleaned.split_whitespace().collect();
    if matches!(words.first(), Some(&("a" | "an" | "the"))) {
        words.remove(0);
    }
    words.join(" ")
}

enum SampleScore {
    Boxes { m: Matching, iou_sum: f64 },
    Mask(PixelScores),
    Pixels(PixelScores),
    Geo { km: Option<f64>, city: bool },
    Text { exact: bool, normalized: bool },
}

fn empty_like(tag: TaskTag) -> AnswerPayload {
    match tag {
        TaskTag::Detection | TaskTag::Grounding => AnswerPayload::RboxList(vec![]),
        TaskTag::Seg => AnswerPayload::SegPrompt(vec![]),
        TaskTag::Change => AnswerPayload::PolyList(vec![]),
        TaskTag::Geoloc => AnswerPayload::GeoLoc {
            city: String::new(),
            lat: f64::NAN,
            lon: f64::NAN,
        },
        TaskTag::Caption | TaskTag::Identify => AnswerPayload::Caption(String::new()),
    }
}

fn score(gt: &InstructionRecord, pred: &AnswerPayload, thresh: f64) -> SampleScore {
    let (w, h) = gt.space.canvas();
    match (&gt.answer, pred) {
        (AnswerPayload::RboxList(g), AnswerPayload::RboxList(p)) => {
            let m = match_boxes(g, p, thresh);
            let iou_sum = m.pairs.iter().map(|x| x.2).sum();
            SampleScore::Boxes { m, iou_sum }
        }
        (AnswerPayload::SegPrompt(g), AnswerPayload::SegPrompt(p)) => {
            let g: Vec<_> = g.iter().map(|t| t.hbb).collect();
            let p: Vec<_> = p.iter().map(|t| t.hbb).collect();
            SampleScore::Mask(compare_masks(&box_mask(&g, w, h), &box_mask(&p, w, h)))
        }
        (AnswerPayload::PolyList(g), AnswerPayload::PolyList(p)) => {
            SampleScore::Pixels(score_change(g, p, w, h))
        }
        (
            AnswerPayload::GeoLoc { city, lat, lon },
            AnswerPayload::GeoLoc {
                city: pc,
                lat: plat,
                lon: plon,
            },
        ) => match score_geoloc((city, *lat, *lon), (pc, *plat, *plon)) {
            Ok((km, c)) => SampleScore::Geo {
                km: Some(km),
                city: c,
            },
            Err(_) => SampleScore::Geo {
                km: None,
                city: false,
            },
        },
        (AnswerPayload::Caption(g), AnswerPayload::Caption(p)) => SampleScore::Text {
            exact: g.trim() == p.trim(),
            normalized: normalize_caption(g) == normalize_caption(p),
        },
        _ => unreachable!("prediction is parsed with the ground-truth tag"),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TaskReport {
    pub samples: usize,
    pub parse_failures: usize,
    pub counts: BTreeMap<String, u64>,
    /// Rates and errors; `null` when undefined (no scorable samples).
    pub metrics: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    pub parse_failures: usize,
    pub iou_threshold: f64,
    pub tasks: BTreeMap<String, TaskReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table, one row per task.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8}  metrics",
            "task", "samples", "failed"
        );
        for (task, r) in &self.tasks {
            let metrics: Vec<String> = r
                .metrics
                .iter()
                .map(|(k, v)| match v {
                    Some(v) => format!("{k}={v:.4}"),
                    None => format!("{k}=n/a"),
                })
                .collect();
            let _ = writeln!(
                out,
                "{task:<10} {:>8} {:>8}  {}",
                r.samples,
                r.parse_failures,
                metrics.join(" ")
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8}",
            "total", self.samples, self.parse_failures
        );
        out
    }
}

#[derive(Default)]
struct Acc {
    samples: usize,
    parse_failures: usize,
    tp: u64,
    fp: u64,
    fn_: u64,
    iou_sum: f64,
    px: PixelScores,
    mask_iou_sum: f64,
    kms: Vec<f64>,
    unscored: u64,
    city: u64,
    exact: u64,
    normalized: u64,
}

fn finish(tag: TaskTag, a: Acc) -> TaskReport {
    let mut counts = BTreeMap::new();
    let mut metrics = BTreeMap::new();
    let n = a.samples as f64;
    match tag {
        TaskTag::Detection | TaskTag::Grounding => {
            let (p, r) = (ratio(a.tp, a.tp + a.fp), ratio(a.tp, a.tp + a.fn_));
            counts.extend([
                ("tp".into(), a.tp),
                ("fp".into(), a.fp),
                ("fn".into(), a.fn_),
            ]);
            metrics.insert("precision".into(), Some(p));
            metrics.insert("recall".into(), Some(r));
            metrics.insert("f1".into(), Some(f1(p, r)));
            metrics.insert(
                "mean_iou".into(),
                (a.tp > 0).then(|| a.iou_sum / a.tp as f64),
            );
        }
        TaskTag::Seg => {
            metrics.insert("mean_iou".into(), Some(a.mask_iou_sum / n));
        }
        TaskTag::Change => {
            counts.extend([
                ("tp_px".into(), a.px.tp),
                ("fp_px".into(), a.px.fp),
                ("fn_px".into(), a.px.fn_),
            ]);
            metrics.insert("precision".into(), Some(a.px.precision()));
            metrics.insert("recall".into(), Some(a.px.recall()));
            metrics.insert("f1".into(), Some(a.px.f1()));
        }
        TaskTag::Geoloc => {
            let mut kms = a.kms.clone();
            kms.sort_by(f64::total_cmp);
            let median = match kms.len() {
                0 => None,
                k if k % 2 == 1 => Some(kms[k / 2]),
                k => Some((kms[k / 2 - 1] + kms[k / 2]) / 2.0),
            };
            counts.extend([
                ("scored".into(), kms.len() as u64),
                ("unscored".into(), a.unscored),
            ]);
            metrics.insert(
                "mean_km".into(),
                (!kms.is_empty()).then(|| kms.iter().sum::<f64>() / kms.len() as f64),
            );
            metrics.insert("median_km".into(), median);
            metrics.insert("city_match".into(), Some(a.city as f64 / n));
        }
        TaskTag::Caption | TaskTag::Identify => {
            metrics.insert("exact_match".into(), Some(a.exact as f64 / n));
            metrics.insert("normalized_match".into(), Some(a.normalized as f64 / n));
        }
    }
    TaskReport {
        samples: a.samples,
        parse_failures: a.parse_failures,
        counts,
        metrics,
    }
}

/// Scores `(gt, pred answer text)` pairs. Order of pairs only affects
/// float summation order, which is fixed by the input.
pub fn evaluate_records(pairs: &[(&InstructionRecord, &str)], thresh: f64) -> EvalReport {
    let scored: Vec<(TaskTag, bool, SampleScore)> = pairs
        .par_iter()
        .map(|(gt, text)| {
            let (pred, failed) = match parse_answer(text, gt.tag, &gt.space) {
                Ok(AnswerPayload::GeoLoc { lat, lon, .. }) if LatLon::new(lat, lon).is_err() => {
                    (empty_like(gt.tag), true)
                }
                Ok(p) => (p, false),
                Err(_) => (empty_like(gt.tag), true),
            };
            (gt.tag, failed, score(gt, &pred, thresh))
        })
        .collect();

    let mut accs: BTreeMap<TaskTag, Acc> = BTreeMap::new();
    for (tag, failed, s) in scored {
        let a = accs.entry(tag).or_default();
        a.samples += 1;
        a.parse_failures += usize::from(failed);
        match s {
            SampleScore::Boxes { m, iou_sum } => {
                a.tp += m.tp as u64;
                a.fp += m.fp as u64;
                a.fn_ += m.fn_ as u64;
                a.iou_sum += iou_sum;
            }
            SampleScore::Mask(px) => {
                let union = px.tp + px.fp + px.fn_;
                a.mask_iou_sum += if union == 0 {
                    1.0
                } else {
                    px.tp as f64 / union as f64
                };
            }
            SampleScore::Pixels(px) => a.px.add(px),
            SampleScore::Geo { km, city } => {
                match km {
                    Some(k) => a.kms.push(k),
                    None => a.unscored += 1,
                }
                a.city += u64::from(city);
            }
            SampleScore::Text { exact, normalized } => {
                a.exact += u64::from(exact);
                a.normalized += u64::from(normalized);
            }
        }
    }
    let mut report = EvalReport {
        iou_threshold: thresh,
        ..Default::default()
    };
    for (tag, a) in accs {
        report.samples += a.samples;
        report.parse_failures += a.parse_failures;
        report.tasks.insert(tag.token().to_string(), finish(tag, a));
    }
    report
}

#[derive(Deserialize)]
struct PredLine {
    id: String,
    answer: String,
}

/// Reads `{id, answer}` lines; other fields are ignored.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, String>, ConvertError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConvertError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for (k, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let fail = |message: String| ConvertError::Line {
            path: path.to_path_buf(),
            line: k + 1,
            message,
        };
        let p: PredLine = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        if out.insert(p.id.clone(), p.answer).is_some() {
            return Err(fail(format!("duplicate id {}", p.id)));
        }
    }
    Ok(out)
}

fn list(ids: &BTreeSet<&str>) -> String {
    let shown: Vec<&str> = ids.iter().take(20).copied().collect();
    let more = ids.len().saturating_sub(shown.len());
    if more > 0 {
        format!("{} (and {more} more)", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

/// Scores a prediction file against a ground-truth record file.
pub fn evaluate(gt_path: &Path, pred_path: &Path, thresh: f64) -> Result<EvalReport, EvalError> {
    let gt = read_records(gt_path)?;
    let pred = read_predictions(pred_path)?;
    let gt_ids: BTreeSet<&str> = gt.iter().map(|r| r.id.as_str()).collect();
    let pred_ids: BTreeSet<&str> = pred.keys().map(String::as_str).collect();
    let missing: BTreeSet<&str> = gt_ids.difference(&pred_ids).copied().collect();
    let extra: BTreeSet<&str> = pred_ids.difference(&gt_ids).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = Vec::new();
        if !missing.is_empty() {
            msg.push(format!("missing from predictions: {}", list(&missing)));
        }
        if !extra.is_empty() {
            msg.push(format!("not in ground truth: {}", list(&extra)));
        }
        return Err(EvalError::IdMismatch(msg.join("; ")));
    }
    let pairs: Vec<(&InstructionRecord, &str)> =
        gt.iter().map(|r| (r, pred[&r.id].as_str())).collect();
    Ok(evaluate_records(&pairs, thresh))
}
