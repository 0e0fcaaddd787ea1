//! Raw annotations to instruction records.
//!
//! Records are stored as JSON Lines, one object per line:
//!
//! ```text
//! {"schema":"rsvlts/1","id":"p1:detection:plane","tag":"detection","images":["p1.png"],
//!  "instruction":"[detection] detect all planes","prompt":"detect all planes",
//!  "answer":"{(10, 20), (30, 20), (30, 40), (10, 40)}",
//!  "space":{"mode":"normalized","bins":1000,"image_w":640,"image_h":480},"meta":{"category":"plane"}}
//! ```
//!
//! `answer` holds the serialized answer text, so a model's output file can
//! use the same shape. `instruction` is `prompt` with the task tag in front.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condparse::singularize;
use crate::geom::{
    mask_to_hbb, rbb_from_params, sample_keypoints, trace_mask_to_polygons, BinaryMask, BoxParams,
    GeomError, HorizontalBox, LatLon, Point, Polygon, RotatedBox,
};
use crate::textcodec::{
    build_instruction, check_tag, parse_answer, serialize_answer, AnswerPayload, CodecError,
    CoordMode, CoordSpace, SegTarget, TaskTag, DEFAULT_BINS,
};

pub const SCHEMA: &str = "rsvlts/1";

#[derive(Debug, thiserror::Error)]
pub enum ConvertError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("record {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("object {object} in scene {scene} has no mask")]
    MissingMask { scene: String, object: String },
    #[error("object {object} in scene {scene}: {source}")]
    Geometry {
        scene: String,
        object: String,
        #[source]
        source: GeomError,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl ConvertError {
    pub fn is_io(&self) -> bool {
        matches!(self, ConvertError::Io { .. })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ConvertError + '_ {
    move |source| ConvertError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One training or evaluation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct InstructionRecord {
    pub id: String,
    pub tag: TaskTag,
    pub images: Vec<String>,
    /// Instruction text without the task tag.
    pub prompt: String,
    pub answer: AnswerPayload,
    pub space: CoordSpace,
    pub meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    schema: String,
    id: String,
    tag: TaskTag,
    images: Vec<String>,
    #[serde(default)]
    instruction: Option<String>,
    prompt: String,
    answer: String,
    space: CoordSpace,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

impl InstructionRecord {
    /// The model-facing text: task tag followed by the prompt.
    pub fn instruction(&self) -> String {
        build_instruction(self.tag, &self.prompt)
    }

    pub fn answer_text(&self) -> Result<String, CodecError> {
        serialize_answer(&self.answer, &self.space)
    }

    /// Checks image count, answer variant, coordinate space and, for
    /// segmentation, that keypoints sit inside their boxes.
    pub fn validate(&self) -> Result<(), ConvertError> {
        let bad = |message: String| ConvertError::Invalid {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(bad("empty id".into()));
        }
        let want = if self.tag == TaskTag::Change { 2 } else { 1 };
        if self.images.len() != want {
            return Err(bad(format!(
                "tag {} needs {want} image(s), got {}",
                self.tag,
                self.images.len()
            )));
        }
        if self.prompt.trim().is_empty() {
            return Err(bad("empty prompt".into()));
        }
        check_tag(self.tag, &self.answer).map_err(|e| bad(e.to_string()))?;
        self.space.validate().map_err(|e| bad(e.to_string()))?;
        self.answer_text().map_err(|e| bad(e.to_string()))?;
        if let AnswerPayload::SegPrompt(targets) = &self.answer {
            for (k, t) in targets.iter().enumerate() {
                if !t.points.iter().all(|p| t.hbb.contains(*p)) {
                    return Err(bad(format!("target {k} has a keypoint outside its box")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> Result<String, ConvertError> {
        let line = RecordLine {
            schema: SCHEMA.into(),
            id: self.id.clone(),
            tag: self.tag,
            images: self.images.clone(),
            instruction: Some(self.instruction()),
            prompt: self.prompt.clone(),
            answer: self.answer_text()?,
            space: self.space,
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string(&line).expect("record serializes"))
    }

    pub fn from_json_line(text: &str) -> Result<Self, String> {
        let line: RecordLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if line.schema != SCHEMA {
            return Err(format!(
                "unsupported schema {:?}, expected {SCHEMA:?}",
                line.schema
            ));
        }
        let answer =
            parse_answer(&line.answer, line.tag, &line.space).map_err(|e| e.to_string())?;
        let rec = InstructionRecord {
            id: line.id,
            tag: line.tag,
            images: line.images,
            prompt: line.prompt,
            answer,
            space: line.space,
            meta: line.meta,
        };
        if let Some(ins) = line.instruction {
            if ins != rec.instruction() {
                return Err(format!("instruction {ins:?} does not match tag and prompt"));
            }
        }
        Ok(rec)
    }
}

fn jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>, ConvertError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| (k + 1, l.to_string()))
        .collect())
}

/// Reads and validates a record file; the first bad line is an error.
pub fn read_records(path: &Path) -> Result<Vec<InstructionRecord>, ConvertError> {
    jsonl_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let rec =
                InstructionRecord::from_json_line(&text).map_err(|message| ConvertError::Line {
                    path: path.to_path_buf(),
                    line,
                    message,
                })?;
            rec.validate().map_err(|e| ConvertError::Line {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            Ok(rec)
        })
        .collect()
}

/// Writes lines with a trailing newline each; an empty list gives an empty file.
pub fn write_lines(path: &Path, lines: &[String]) -> Result<(), ConvertError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_records(path: &Path, records: &[InstructionRecord]) -> Result<(), ConvertError> {
    let lines = records
        .iter()
        .map(|r| r.to_json_line())
        .collect::<Result<Vec<_>, _>>()?;
    write_lines(path, &lines)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FileValidation {
    pub records: usize,
    pub errors: Vec<String>,
}

/// Validates every line of a record file, collecting all problems.
pub fn validate_file(path: &Path) -> Result<FileValidation, ConvertError> {
    let mut out = FileValidation::default();
    let mut ids = BTreeSet::new();
    for (line, text) in jsonl_lines(path)? {
        out.records += 1;
        match InstructionRecord::from_json_line(&text) {
            Err(e) => out.errors.push(format!("line {line}: {e}")),
            Ok(rec) => {
                if let Err(e) = rec.validate() {
                    out.errors.push(format!("line {line}: {e}"));
                }
                if !ids.insert(rec.id.clone()) {
                    out.errors
                        .push(format!("line {line}: duplicate id {}", rec.id));
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- templates

const DETECTION_TEMPLATES: &[&str] = &[
    "detect all {plural}",
    "find all {plural} in the image",
    "locate every {category} in this image",
    "give the rotated boxes of all {plural}",
    "where are the {plural}?",
    "mark all {plural}",
];

const SEG_TEMPLATES: &[&str] = &[
    "segment all {plural}",
    "segment every {category} in this image",
    "give the masks of all {plural}",
    "outline all {plural}",
    "segment the {plural} in the image",
];

const CHANGE_TEMPLATES: &[&str] = &[
    "outline the changed regions between the two images",
    "find the areas that changed between the two images",
    "mark every region that differs between the two images",
    "where did the scene change?",
    "give the polygons of all changed areas",
];

const GEOLOC_TEMPLATES: &[&str] = &[
    "where was this image taken?",
    "give the city and coordinates of this image",
    "which city is shown in this image, and where exactly?",
    "locate this scene on the globe",
    "identify the city and the latitude and longitude of this image",
];

pub fn templates(tag: TaskTag) -> &'static [&'static str] {
    match tag {
        TaskTag::Detection | TaskTag::Grounding => DETECTION_TEMPLATES,
        TaskTag::Seg => SEG_TEMPLATES,
        TaskTag::Change => CHANGE_TEMPLATES,
        TaskTag::Geoloc => GEOLOC_TEMPLATES,
        TaskTag::Caption | TaskTag::Identify => &["describe the image"],
    }
}

/// 64-bit FNV-1a over the seed bytes followed by `key`.
pub fn seeded_hash(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(key.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Picks a template by hashing the record id, so reruns agree.
pub fn pick_template<'a>(bank: &'a [&'a str], seed: u64, id: &str) -> &'a str {
    bank[(seeded_hash(seed, id) % bank.len() as u64) as usize]
}

pub fn render_template(template: &str, category: &str) -> String {
    template
        .replace("{plural}", &crate::condparse::pluralize(category))
        .replace("{category}", category)
}

// ---------------------------------------------------------------- inputs

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub category: String,
    pub rbb: Option<RotatedBox>,
    /// Full-image instance mask.
    pub mask: Option<BinaryMask>,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub id: String,
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
}

impl SceneAnnotation {
    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("image dimensions must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(&o.id) {
                return Err(format!("duplicate object id {}", o.id));
            }
            if o.rbb.is_none() && o.mask.is_none() {
                return Err(format!("object {} has neither a box nor a mask", o.id));
            }
            if let Some(m) = &o.mask {
                if (m.width(), m.height()) != (self.width as usize, self.height as usize) {
                    return Err(format!(
                        "object {} mask is {}x{}, image is {}x{}",
                        o.id,
                        m.width(),
                        m.height(),
                        self.width,
                        self.height
                    ));
                }
            }
        }
        Ok(())
    }

    /// Distinct normalized categories, sorted.
    pub fn categories(&self) -> BTreeSet<String> {
        self.objects
            .iter()
            .map(|o| normalize_category(&o.category))
            .collect()
    }
}

pub fn normalize_category(c: &str) -> String {
    singularize(&c.trim().to_lowercase().replace(['_', '-'], " "))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectLine {
    #[serde(default)]
    id: Option<String>,
    category: String,
    #[serde(default)]
    rbb: Option<[[f64; 2]; 4]>,
    #[serde(default)]
    params: Option<BoxParams>,
    #[serde(default)]
    mask: Option<String>,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneLine {
    #[serde(default)]
    id: Option<String>,
    image: String,
    width: u32,
    height: u32,
    #[serde(default)]
    objects: Vec<ObjectLine>,
}

fn read_mask(path: &Path) -> Result<BinaryMask, String> {
    let data = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    BinaryMask::from_pnm(&data).map_err(|e| format!("{}: {e}", path.display()))
}

fn scene_from_line(line: SceneLine, base: &Path) -> Result<SceneAnnotation, String> {
    let id = line.id.unwrap_or_else(|| {
        Path::new(&line.image)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| line.image.clone())
    });
    let mut objects = Vec::with_capacity(line.objects.len());
    for (k, o) in line.objects.into_iter().enumerate() {
        let oid = o.id.unwrap_or_else(|| k.to_string());
        let rbb = match (o.rbb, o.params) {
            (Some(_), Some(_)) => {
                return Err(format!("object {oid}: give either rbb or params, not both"))
            }
            (Some(c), None) => Some(
                RotatedBox::from_quad(c.map(|[x, y]| Point::new(x, y)))
                    .map_err(|e| format!("object {oid}: {e}"))?,
            ),
            (None, Some(p)) => Some(rbb_from_params(&p).map_err(|e| format!("object {oid}: {e}"))?),
            (None, None) => None,
        };
        let mask = o
            .mask
            .map(|m| read_mask(&base.join(m)))
            .transpose()
            .map_err(|e| format!("object {oid}: {e}"))?;
        objects.push(SceneObject {
            id: oid,
            category: o.category,
            rbb,
            mask,
            attributes: o.attributes,
        });
    }
    let scene = SceneAnnotation {
        id,
        image: line.image,
        width: line.width,
        height: line.height,
        objects,
    };
    scene.validate()?;
    Ok(scene)
}

/// Reads scene annotations; mask paths are relative to the file's directory.
pub fn read_scenes(path: &Path) -> Result<Vec<SceneAnnotation>, ConvertError> {
    let base = path.parent().unwrap_or(Path::new("."));
    jsonl_lines(path)?
        .into_par_iter()
        .map(|(line, text)| {
            let fail = |message| ConvertError::Line {
                path: path.to_path_buf(),
                line,
                message,
            };
            let parsed: SceneLine = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
            scene_from_line(parsed, base).map_err(fail)
        })
        .collect()
}

/// A bitemporal pair with its change mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeSample {
    pub id: String,
    pub image_a: String,
    pub image_b: String,
    pub mask: BinaryMask,
    pub caption: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChangeLine {
    id: String,
    image_a: String,
    image_b: String,
    mask: String,
    #[serde(default)]
    caption: Option<String>,
}

pub fn read_change_samples(path: &Path) -> Result<Vec<ChangeSample>, ConvertError> {
    let base = path.parent().unwrap_or(Path::new("."));
    jsonl_lines(path)?
        .into_par_iter()
        .map(|(line, text)| {
            let fail = |message| ConvertError::Line {
                path: path.to_path_buf(),
                line,
                message,
            };
            let l: ChangeLine = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
            let mask = read_mask(&base.join(&l.mask)).map_err(fail)?;
            Ok(ChangeSample {
                id: l.id,
                image_a: l.image_a,
                image_b: l.image_b,
                mask,
                caption: l.caption,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeolocSample {
    pub id: String,
    pub image: String,
    pub city: String,
    pub lat: f64,
    pub lon: f64,
}

pub fn read_geoloc_samples(path: &Path) -> Result<Vec<GeolocSample>, ConvertError> {
    jsonl_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| ConvertError::Line {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------- converters

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvertOptions {
    pub mode: CoordMode,
    pub bins: u32,
    pub n_keypoints: usize,
    /// Douglas-Peucker tolerance for change polygons, in pixels.
    pub eps: f64,
    pub seed: u64,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            mode: CoordMode::Normalized,
            bins: DEFAULT_BINS,
            n_keypoints: 3,
            eps: 1.0,
            seed: 0,
        }
    }
}

impl ConvertOptions {
    pub fn space(&self, w: u32, h: u32) -> CoordSpace {
        CoordSpace {
            mode: self.mode,
            bins: self.bins,
            image_w: w,
            image_h: h,
        }
    }
}

fn hbb_corners(b: &HorizontalBox) -> [Point; 4] {
    let (a, c) = (b.min(), b.max());
    [
        a,
        Point::new(c.x + 1.0, a.y),
        Point::new(c.x + 1.0, c.y + 1.0),
        Point::new(a.x, c.y + 1.0),
    ]
}

fn record(
    id: String,
    tag: TaskTag,
    images: Vec<String>,
    prompt: String,
    answer: AnswerPayload,
    space: CoordSpace,
) -> InstructionRecord {
    InstructionRecord {
        id,
        tag,
        images,
        prompt,
        answer,
        space,
        meta: BTreeMap::new(),
    }
}

fn matching<'a>(
    sa: &'a SceneAnnotation,
    category: &str,
) -> impl Iterator<Item = &'a SceneObject> + 'a {
    let want = normalize_category(category);
    sa.objects
        .iter()
        .filter(move |o| normalize_category(&o.category) == want)
}

/// Boxes of every object of `category`; objects with only a mask get the
/// mask's axis-aligned pixel extent.
pub fn convert_detection(
    sa: &SceneAnnotation,
    category: &str,
    opts: &ConvertOptions,
) -> Result<InstructionRecord, ConvertError> {
    let category = normalize_category(category);
    let space = opts.space(sa.width, sa.height);
    let mut boxes = Vec::new();
    for o in matching(sa, &category) {
        let geo = |source| ConvertError::Geometry {
            scene: sa.id.clone(),
            object: o.id.clone(),
            source,
        };
        let corners = match (&o.rbb, &o.mask) {
            (Some(b), _) => *b.corners(),
            (None, Some(m)) => hbb_corners(&mask_to_hbb(m).map_err(geo)?),
            (None, None) => unreachable!("validated scene"),
        };
        boxes.push(RotatedBox::from_quad(corners.map(|p| space.normalize_point(p))).map_err(geo)?);
    }
    let id = format!("{}:detection:{category}", sa.id);
    let prompt = render_template(
        pick_template(DETECTION_TEMPLATES, opts.seed, &id),
        &category,
    );
    let mut r = record(
        id,
        TaskTag::Detection,
        vec![sa.image.clone()],
        prompt,
        AnswerPayload::RboxList(boxes),
        space,
    );
    r.meta.insert("category".into(), category);
    r.meta.insert("scene".into(), sa.id.clone());
    Ok(r)
}

/// Box and keypoint prompts for every object of `category`.
pub fn convert_segmentation(
    sa: &SceneAnnotation,
    category: &str,
    opts: &ConvertOptions,
) -> Result<InstructionRecord, ConvertError> {
    let category = normalize_category(category);
    let space = opts.space(sa.width, sa.height);
    let mut targets = Vec::new();
    for o in matching(sa, &category) {
        let geo = |source| ConvertError::Geometry {
            scene: sa.id.clone(),
            object: o.id.clone(),
            source,
        };
        let mask = o.mask.as_ref().ok_or_else(|| ConvertError::MissingMask {
            scene: sa.id.clone(),
            object: o.id.clone(),
        })?;
        let hbb = mask_to_hbb(mask).map_err(geo)?;
        let points = sample_keypoints(mask, opts.n_keypoints).map_err(geo)?;
        let hbb = HorizontalBox::new(
            space.normalize_point(hbb.min()),
            space.normalize_point(hbb.max()),
        )
        .map_err(geo)?;
        targets.push(SegTarget {
            hbb,
            points: points
                .into_iter()
                .map(|p| space.normalize_point(p))
                .collect(),
        });
    }
    let id = format!("{}:seg:{category}", sa.id);
    let prompt = render_template(pick_template(SEG_TEMPLATES, opts.seed, &id), &category);
    let mut r = record(
        id,
        TaskTag::Seg,
        vec![sa.image.clone()],
        prompt,
        AnswerPayload::SegPrompt(targets),
        space,
    );
    r.meta.insert("category".into(), category);
    r.meta.insert("scene".into(), sa.id.clone());
    Ok(r)
}

/// Moves a pixel polygon into `space`, dropping it if it collapses.
fn polygon_into(poly: &Polygon, space: &CoordSpace) -> Option<Polygon> {
    let mut v: Vec<Point> = Vec::with_capacity(poly.len());
    for p in poly.vertices() {
        let q = space.normalize_point(*p);
        if v.last() != Some(&q) {
            v.push(q);
        }
    }
    while v.len() > 1 && v.first() == v.last() {
        v.pop();
    }
    Polygon::new(v).ok()
}

/// Change polygons traced from the change mask.
pub fn convert_change(
    sample: &ChangeSample,
    opts: &ConvertOptions,
) -> Result<InstructionRecord, ConvertError> {
    let (w, h) = (sample.mask.width() as u32, sample.mask.height() as u32);
    let space = opts.space(w, h);
    let polys: Vec<Polygon> = trace_mask_to_polygons(&sample.mask, opts.eps)
        .iter()
        .filter_map(|p| polygon_into(p, &space))
        .collect();
    let prompt = match sample.caption.as_deref().map(str::trim) {
        Some(c) if !c.is_empty() => c.to_string(),
        _ => pick_template(CHANGE_TEMPLATES, opts.seed, &sample.id).to_string(),
    };
    Ok(record(
        sample.id.clone(),
        TaskTag::Change,
        vec![sample.image_a.clone(), sample.image_b.clone()],
        prompt,
        AnswerPayload::PolyList(polys),
        space,
    ))
}

pub fn convert_geoloc(
    sample: &GeolocSample,
    opts: &ConvertOptions,
) -> Result<InstructionRecord, ConvertError> {
    LatLon::new(sample.lat, sample.lon).map_err(|e| ConvertError::Invalid {
        id: sample.id.clone(),
        message: e.to_string(),
    })?;
    let prompt = pick_template(GEOLOC_TEMPLATES, opts.seed, &sample.id).to_string();
    Ok(record(
        sample.id.clone(),
        TaskTag::Geoloc,
        vec![sample.image.clone()],
        prompt,
        AnswerPayload::GeoLoc {
            city: sample.city.trim().to_string(),
            lat: sample.lat,
            lon: sample.lon,
        },
        CoordSpace::pixel(1, 1),
    ))
}

/// Converts scenes in parallel, one record per (scene, category). Without a
/// category every category present in a scene is emitted in sorted order.
pub fn convert_scenes(
    scenes: &[SceneAnnotation],
    tag: TaskTag,
    category: Option<&str>,
    opts: &ConvertOptions,
) -> Result<Vec<InstructionRecord>, ConvertError> {
    let per_scene: Vec<Vec<InstructionRecord>> = scenes
        .par_iter()
        .map(|sa| {
            let cats: Vec<String> = match category {
                Some(c) => vec![normalize_category(c)],
                None => sa.categories().into_iter().collect(),
            };
            cats.iter()
                .map(|c| match tag {
                    TaskTag::Detection => convert_detection(sa, c, opts),
                    TaskTag::Seg => convert_segmentation(sa, c, opts),
                    other => Err(ConvertError::Invalid {
                        id: sa.id.clone(),
                        message: format!(
                            "scene annotations convert to detection or seg, not {other}"
                        ),
                    }),
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}

// ---------------------------------------------------------------- segmenter prompts

#[derive(Serialize)]
struct PromptTarget {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    points: Vec<[f64; 2]>,
    labels: Vec<u8>,
}

#[derive(Serialize)]
struct PromptLine<'a> {
    image: &'a str,
    targets: Vec<PromptTarget>,
}

/// One JSON line per seg record with pixel-space box and point prompts.
pub fn emit_segmenter_prompts(records: &[InstructionRecord]) -> Result<Vec<String>, ConvertError> {
    records
        .iter()
        .map(|r| {
            let AnswerPayload::SegPrompt(targets) = &r.answer else {
                return Err(ConvertError::Invalid {
                    id: r.id.clone(),
                    message: format!("expected a seg record, got {}", r.tag),
                });
            };
            let targets = targets
                .iter()
                .map(|t| {
                    let (a, b) = (
                        r.space.denormalize_point(t.hbb.min()),
                        r.space.denormalize_point(t.hbb.max()),
                    );
                    let points: Vec<[f64; 2]> = t
                        .points
                        .iter()
                        .map(|p| {
                            let q = r.space.denormalize_point(*p);
                            [q.x, q.y]
                        })
                        .collect();
                    PromptTarget {
                        bbox: [a.x, a.y, b.x, b.y],
                        labels: vec![1; points.len()],
                        points,
                    }
                })
                .collect();
            Ok(serde_json::to_string(&PromptLine {
                image: &r.images[0],
                targets,
            })
            .expect("prompt serializes"))
        })
        .collect()
}
