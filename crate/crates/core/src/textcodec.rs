//! Text wire format for task tags, point sets and task answers.
//!
//! ```text
//! instruction := "[" tag "] " prompt
//! point-set   := "{" [ point { ", " point } ] "}"
//! point       := "(" number ", " number ")"
//! rbox-list   := point-set { "; " point-set }          4 points per set
//! seg-prompt  := target { "; " target } | "{}"
//! target      := "box " point-set " points " point-set  box = 2 points
//! poly-list   := point-set { "; " point-set }          first point repeated last
//! geoloc      := "[" city ", (" number ", " number ")]"
//! caption     := any single-line text
//! ```
//!
//! Integral numbers are written without a fractional part; others use the
//! shortest representation that parses back to the same `f64`. An empty
//! answer for a localizing task is `{}`.
//!
//! Parsing is lenient: surrounding prose, extra whitespace and trailing commas
//! inside a set are accepted, since model replies are noisy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geom::{GeomError, HorizontalBox, Point, Polygon, RotatedBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskTag {
    Detection,
    Grounding,
    Seg,
    Change,
    Geoloc,
    Caption,
    /// Region captioning: describe the object at the given coordinates.
    Identify,
}

impl TaskTag {
    pub const ALL: [TaskTag; 7] = [
        TaskTag::Detection,
        TaskTag::Grounding,
        TaskTag::Seg,
        TaskTag::Change,
        TaskTag::Geoloc,
        TaskTag::Caption,
        TaskTag::Identify,
    ];

    pub fn token(self) -> &'static str {
        match self {
            TaskTag::Detection => "detection",
            TaskTag::Grounding => "grounding",
            TaskTag::Seg => "seg",
            TaskTag::Change => "change",
            TaskTag::Geoloc => "geoloc",
            TaskTag::Caption => "caption",
            TaskTag::Identify => "identify",
        }
    }

    pub fn from_token(s: &str) -> Option<TaskTag> {
        TaskTag::ALL.into_iter().find(|t| t.token() == s)
    }

    /// The answer variant records with this tag carry.
    pub fn payload_kind(self) -> PayloadKind {
        match self {
            TaskTag::Detection | TaskTag::Grounding => PayloadKind::RboxList,
            TaskTag::Seg => PayloadKind::SegPrompt,
            TaskTag::Change => PayloadKind::PolyList,
            TaskTag::Geoloc => PayloadKind::GeoLoc,
            TaskTag::Caption | TaskTag::Identify => PayloadKind::Caption,
        }
    }
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for TaskTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskTag::from_token(s).ok_or_else(|| {
            let names: Vec<_> = TaskTag::ALL.iter().map(|t| t.token()).collect();
            format!(
                "unknown task tag {s:?}; expected one of {}",
                names.join(", ")
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordMode {
    Pixel,
    #[default]
    Normalized,
}

pub const DEFAULT_BINS: u32 = 1000;

/// How answer coordinates relate to image pixels.
///
/// In normalized mode pixel `p` maps to bin `floor(p * bins / extent)`,
/// clamped to `[0, bins - 1]`, and bin `b` maps back to the bin centre
/// `(b + 0.5) * extent / bins`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordSpace {
    pub mode: CoordMode,
    pub bins: u32,
    pub image_w: u32,
    pub image_h: u32,
}

impl CoordSpace {
    pub fn normalized(image_w: u32, image_h: u32) -> Self {
        Self {
            mode: CoordMode::Normalized,
            bins: DEFAULT_BINS,
            image_w,
            image_h,
        }
    }

    pub fn pixel(image_w: u32, image_h: u32) -> Self {
        Self {
            mode: CoordMode::Pixel,
            bins: DEFAULT_BINS,
            image_w,
            image_h,
        }
    }

    pub fn with_bins(mut self, bins: u32) -> Self {
        self.bins = bins;
        self
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.bins < 2 {
            return Err(CodecError::Space(format!(
                "bins must be >= 2, got {}",
                self.bins
            )));
        }
        if self.mode == CoordMode::Normalized && (self.image_w == 0 || self.image_h == 0) {
            return Err(CodecError::Space(
                "normalized space needs positive image dimensions".into(),
            ));
        }
        Ok(())
    }

    /// Canvas on which answers in this space are rasterized for scoring.
    pub fn canvas(&self) -> (usize, usize) {
        match self.mode {
            CoordMode::Pixel => (self.image_w as usize, self.image_h as usize),
            CoordMode::Normalized => (self.bins as usize, self.bins as usize),
        }
    }

    pub fn normalize_point(&self, p: Point) -> Point {
        match self.mode {
            CoordMode::Pixel => p,
            CoordMode::Normalized => {
                let b = self.bins as f64;
                let q = |v: f64, extent: u32| (v * b / extent as f64).floor().clamp(0.0, b - 1.0);
                Point::new(q(p.x, self.image_w), q(p.y, self.image_h))
            }
        }
    }

    pub fn denormalize_point(&self, p: Point) -> Point {
        match self.mode {
            CoordMode::Pixel => p,
            CoordMode::Normalized => {
                let b = self.bins as f64;
                Point::new(
                    (p.x + 0.5) * self.image_w as f64 / b,
                    (p.y + 0.5) * self.image_h as f64 / b,
                )
            }
        }
    }
}

pub fn normalize(points: &[Point], space: &CoordSpace) -> Vec<Point> {
    points.iter().map(|&p| space.normalize_point(p)).collect()
}

pub fn denormalize(points: &[Point], space: &CoordSpace) -> Vec<Point> {
    points.iter().map(|&p| space.denormalize_point(p)).collect()
}

/// Box plus foreground keypoints for one segmentation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegTarget {
    pub hbb: HorizontalBox,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PayloadKind {
    RboxList,
    SegPrompt,
    PolyList,
    GeoLoc,
    Caption,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnswerPayload {
    RboxList(Vec<RotatedBox>),
    SegPrompt(Vec<SegTarget>),
    PolyList(Vec<Polygon>),
    GeoLoc { city: String, lat: f64, lon: f64 },
    Caption(String),
}

impl AnswerPayload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            AnswerPayload::RboxList(_) => PayloadKind::RboxList,
            AnswerPayload::SegPrompt(_) => PayloadKind::SegPrompt,
            AnswerPayload::PolyList(_) => PayloadKind::PolyList,
            AnswerPayload::GeoLoc { .. } => PayloadKind::GeoLoc,
            AnswerPayload::Caption(_) => PayloadKind::Caption,
        }
    }

    /// Number of localized objects; `None` for non-localizing payloads.
    pub fn object_count(&self) -> Option<usize> {
        match self {
            AnswerPayload::RboxList(v) => Some(v.len()),
            AnswerPayload::SegPrompt(v) => Some(v.len()),
            AnswerPayload::PolyList(v) => Some(v.len()),
            _ => None,
        }
    }

    /// Splits a localizing payload into one single-object payload per object.
    pub fn split_objects(&self) -> Vec<AnswerPayload> {
        match self {
            AnswerPayload::RboxList(v) => v
                .iter()
                .map(|b| AnswerPayload::RboxList(vec![*b]))
                .collect(),
            AnswerPayload::SegPrompt(v) => v
                .iter()
                .map(|t| AnswerPayload::SegPrompt(vec![t.clone()]))
                .collect(),
            AnswerPayload::PolyList(v) => v
                .iter()
                .map(|p| AnswerPayload::PolyList(vec![p.clone()]))
                .collect(),
            other => vec![other.clone()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parse failure at byte {position}: {message} (in {text:?})")]
pub struct ParseFailure {
    pub message: String,
    pub position: usize,
    pub text: String,
}

impl ParseFailure {
    pub fn new(message: impl Into<String>, position: usize, text: &str) -> Self {
        Self {
            message: message.into(),
            position,
            text: text.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error(transparent)]
    Parse(#[from] ParseFailure),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("task tag `{tag}` expects a {expected:?} answer, got {got:?}")]
    TagMismatch {
        tag: TaskTag,
        expected: PayloadKind,
        got: PayloadKind,
    },
    #[error("coordinate space: {0}")]
    Space(String),
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn write_point_set(points: &[Point], out: &mut String) -> Result<(), CodecError> {
    out.push('{');
    for (i, p) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(CodecError::NonFinite);
        }
        if i > 0 {
            out.push_str(", ");
        }
        out.push('(');
        out.push_str(&fmt_num(p.x));
        out.push_str(", ");
        out.push_str(&fmt_num(p.y));
        out.push(')');
    }
    out.push('}');
    Ok(())
}

/// `{(x1, y1), (x2, y2), ...}`; the empty list is `{}`.
pub fn serialize_point_set(points: &[Point]) -> Result<String, CodecError> {
    let mut s = String::new();
    write_point_set(points, &mut s)?;
    Ok(s)
}

/// A balanced `{...}` group found in free text.
#[derive(Debug, Clone)]
struct Group {
    start: usize,
    points: Result<Vec<Point>, ParseFailure>,
}

/// Finds every top-level balanced brace group in `text`, in order.
fn scan_groups(text: &str) -> Vec<Group> {
    let bytes = text.as_bytes();
    let mut groups = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        let mut depth = 0usize;
        let mut end = None;
        for (j, &c) in bytes.iter().enumerate().skip(i) {
            match c {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(j) => {
                groups.push(Group {
                    start: i,
                    points: parse_group_body(text, i + 1, j),
                });
                i = j + 1;
            }
            None => break,
        }
    }
    groups
}

/// Parses the inside of one brace group, `text[from..to]`.
fn parse_group_body(text: &str, from: usize, to: usize) -> Result<Vec<Point>, ParseFailure> {
    let body = &text.as_bytes()[from..to];
    let fail = |msg: &str, at: usize| ParseFailure::new(msg, from + at, text);
    let mut coords: Vec<f64> = Vec::new();
    let mut in_paren: Option<(usize, usize)> = None; // (open position, numbers so far)
    let mut saw_paren = false;
    let mut i = 0;
    while i < body.len() {
        let c = body[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' | b',' => i += 1,
            b'(' => {
                if in_paren.is_some() {
                    return Err(fail("nested parenthesis", i));
                }
                saw_paren = true;
                in_paren = Some((i, 0));
                i += 1;
            }
            b')' => match in_paren.take() {
                Some((at, n)) if n != 2 => {
                    return Err(fail(&format!("point has {n} coordinates, expected 2"), at));
                }
                Some(_) => i += 1,
                None => return Err(fail("unbalanced ')'", i)),
            },
            b'0'..=b'9' | b'-' | b'+' | b'.' => {
                let start = i;
                while i < body.len()
                    && matches!(body[i], b'0'..=b'9' | b'-' | b'+' | b'.' | b'e' | b'E')
                {
                    i += 1;
                }
                let tok = std::str::from_utf8(&body[start..i]).unwrap();
                let v: f64 = tok
                    .parse()
                    .map_err(|_| fail(&format!("bad number {tok:?}"), start))?;
                if !v.is_finite() {
                    return Err(fail(&format!("non-finite number {tok:?}"), start));
                }
                if let Some((_, n)) = in_paren.as_mut() {
                    *n += 1;
                } else if saw_paren {
                    return Err(fail("number outside a point", start));
                }
                coords.push(v);
            }
            _ => return Err(fail(&format!("unexpected character {:?}", c as char), i)),
        }
    }
    if let Some((at, _)) = in_paren {
        return Err(fail("unclosed '('", at));
    }
    if !coords.len().is_multiple_of(2) {
        return Err(fail(&format!("odd coordinate count {}", coords.len()), 0));
    }
    Ok(coords
        .chunks_exact(2)
        .map(|c| Point::new(c[0], c[1]))
        .collect())
}

/// Extracts the first well-formed point set from `text`.
pub fn parse_point_set(text: &str) -> Result<Vec<Point>, ParseFailure> {
    let groups = scan_groups(text);
    let mut first_err = None;
    for g in groups {
        match g.points {
            Ok(p) => return Ok(p),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or_else(|| ParseFailure::new("no balanced point-set group", 0, text)))
}

fn check_space(points: &[Point], space: &CoordSpace) -> Result<(), CodecError> {
    if space.mode == CoordMode::Pixel {
        return Ok(());
    }
    let hi = (space.bins - 1) as f64;
    for p in points {
        for v in [p.x, p.y] {
            if v.fract() != 0.0 || !(0.0..=hi).contains(&v) {
                return Err(CodecError::Space(format!(
                    "{v} is not a bin index in [0, {hi}]"
                )));
            }
        }
    }
    Ok(())
}

/// Serializes an answer. In normalized spaces every coordinate must already be
/// an integral bin index.
pub fn serialize_answer(payload: &AnswerPayload, space: &CoordSpace) -> Result<String, CodecError> {
    let mut out = String::new();
    match payload {
        AnswerPayload::RboxList(boxes) => {
            if boxes.is_empty() {
                out.push_str("{}");
            }
            for (i, b) in boxes.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                check_space(b.corners(), space)?;
                write_point_set(b.corners(), &mut out)?;
            }
        }
        AnswerPayload::SegPrompt(targets) => {
            if targets.is_empty() {
                out.push_str("{}");
            }
            for (i, t) in targets.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                let corners = [t.hbb.min(), t.hbb.max()];
                check_space(&corners, space)?;
                check_space(&t.points, space)?;
                out.push_str("box ");
                write_point_set(&corners, &mut out)?;
                out.push_str(" points ");
                write_point_set(&t.points, &mut out)?;
            }
        }
        AnswerPayload::PolyList(polys) => {
            if polys.is_empty() {
                out.push_str("{}");
            }
            for (i, p) in polys.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                check_space(p.vertices(), space)?;
                let mut closed = p.vertices().to_vec();
                closed.push(closed[0]);
                write_point_set(&closed, &mut out)?;
            }
        }
        AnswerPayload::GeoLoc { city, lat, lon } => {
            if !lat.is_finite() || !lon.is_finite() {
                return Err(CodecError::NonFinite);
            }
            out.push('[');
            out.push_str(&single_line(city));
            out.push_str(", (");
            out.push_str(&fmt_num(*lat));
            out.push_str(", ");
            out.push_str(&fmt_num(*lon));
            out.push_str(")]");
        }
        AnswerPayload::Caption(text) => out.push_str(&single_line(text)),
    }
    Ok(out)
}

fn single_line(s: &str) -> String {
    s.trim().replace(['\n', '\r'], " ")
}

fn geom_failure(e: GeomError, at: usize, text: &str) -> CodecError {
    ParseFailure::new(e.to_string(), at, text).into()
}

/// Parses the answer text expected for `tag`.
pub fn parse_answer(
    text: &str,
    tag: TaskTag,
    space: &CoordSpace,
) -> Result<AnswerPayload, CodecError> {
    let _ = space;
    let kind = tag.payload_kind();
    match kind {
        PayloadKind::Caption => return Ok(AnswerPayload::Caption(single_line(text))),
        PayloadKind::GeoLoc => return parse_geoloc(text),
        _ => {}
    }
    let groups = scan_groups(text);
    if groups.is_empty() {
        return Err(ParseFailure::new("no balanced point-set group", 0, text).into());
    }
    let mut sets = Vec::with_capacity(groups.len());
    for g in groups {
        sets.push((g.start, g.points?));
    }
    let empty = sets.len() == 1 && sets[0].1.is_empty();
    match kind {
        PayloadKind::RboxList => {
            if empty {
                return Ok(AnswerPayload::RboxList(Vec::new()));
            }
            let mut boxes = Vec::new();
            for (at, pts) in sets {
                let corners: [Point; 4] = pts.try_into().map_err(|v: Vec<Point>| {
                    ParseFailure::new(format!("box has {} points, expected 4", v.len()), at, text)
                })?;
                boxes.push(RotatedBox::from_quad(corners).map_err(|e| geom_failure(e, at, text))?);
            }
            Ok(AnswerPayload::RboxList(boxes))
        }
        PayloadKind::SegPrompt => {
            if empty {
                return Ok(AnswerPayload::SegPrompt(Vec::new()));
            }
            if sets.len() % 2 != 0 {
                return Err(ParseFailure::new(
                    "segmentation targets need a box and a point set each",
                    sets[0].0,
                    text,
                )
                .into());
            }
            let mut targets = Vec::new();
            for pair in sets.chunks_exact(2) {
                let (at, ref bx) = pair[0];
                if bx.len() != 2 {
                    return Err(ParseFailure::new(
                        format!("box has {} points, expected 2", bx.len()),
                        at,
                        text,
                    )
                    .into());
                }
                let hbb =
                    HorizontalBox::new(bx[0], bx[1]).map_err(|e| geom_failure(e, at, text))?;
                targets.push(SegTarget {
                    hbb,
                    points: pair[1].1.clone(),
                });
            }
            Ok(AnswerPayload::SegPrompt(targets))
        }
        PayloadKind::PolyList => {
            if empty {
                return Ok(AnswerPayload::PolyList(Vec::new()));
            }
            let mut polys = Vec::new();
            for (at, mut pts) in sets {
                if pts.len() >= 4 && pts.first() == pts.last() {
                    pts.pop();
                }
                polys.push(Polygon::new(pts).map_err(|e| geom_failure(e, at, text))?);
            }
            Ok(AnswerPayload::PolyList(polys))
        }
        PayloadKind::GeoLoc | PayloadKind::Caption => unreachable!(),
    }
}

fn parse_geoloc(text: &str) -> Result<AnswerPayload, CodecError> {
    let fail = |m: &str, at: usize| -> CodecError { ParseFailure::new(m, at, text).into() };
    let open = text.find('[').ok_or_else(|| fail("missing '['", 0))?;
    let close = text
        .rfind(']')
        .filter(|&c| c > open)
        .ok_or_else(|| fail("missing ']'", open))?;
    let inner = &text[open + 1..close];
    let lp = inner
        .rfind('(')
        .ok_or_else(|| fail("missing '(' before coordinates", open))?;
    let rp = inner[lp..]
        .find(')')
        .map(|k| lp + k)
        .ok_or_else(|| fail("missing ')'", open + 1 + lp))?;
    let city = inner[..lp].trim().trim_end_matches(',').trim();
    if city.is_empty() {
        return Err(fail("empty city name", open + 1));
    }
    let nums: Vec<&str> = inner[lp + 1..rp].split(',').map(str::trim).collect();
    if nums.len() != 2 {
        return Err(fail("expected (latitude, longitude)", open + 1 + lp));
    }
    let num = |s: &str| -> Result<f64, CodecError> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| fail(&format!("bad number {s:?}"), open + 1 + lp))
    };
    Ok(AnswerPayload::GeoLoc {
        city: city.to_string(),
        lat: num(nums[0])?,
        lon: num(nums[1])?,
    })
}

/// Checks that `payload` is the variant `tag` expects.
pub fn check_tag(tag: TaskTag, payload: &AnswerPayload) -> Result<(), CodecError> {
    if tag.payload_kind() == payload.kind() {
        Ok(())
    } else {
        Err(CodecError::TagMismatch {
            tag,
            expected: tag.payload_kind(),
            got: payload.kind(),
        })
    }
}

/// Prefixes `prompt` with `[tag] `, unless it already carries that tag.
pub fn build_instruction(tag: TaskTag, prompt: &str) -> String {
    let body = match split_instruction(prompt) {
        (Some(t), rest) if t == tag => rest,
        _ => prompt.to_string(),
    };
    format!("[{}] {}", tag.token(), body)
}

/// Splits a leading `[tag]` off an instruction. Unknown bracket tokens are not
/// tags; the text then comes back unchanged.
pub fn split_instruction(text: &str) -> (Option<TaskTag>, String) {
    let t = text.trim_start();
    if let Some(rest) = t.strip_prefix('[') {
        if let Some(k) = rest.find(']') {
            if let Some(tag) = TaskTag::from_token(rest[..k].trim()) {
                return (Some(tag), rest[k + 1..].trim().to_string());
            }
        }
    }
    (None, text.to_string())
}
