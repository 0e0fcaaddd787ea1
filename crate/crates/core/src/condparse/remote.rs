//! HTTP client for a grounding model.
//!
//! Each step POSTs `{"image_path", "instruction", "candidates"}` where a
//! candidate is the flat `[x1, y1, ..., x4, y4]` corner list in the model's
//! coordinate space, and expects `{"text": "<answer>"}` back. The answer text
//! is parsed as a box list; unparseable text counts as an empty answer.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::grounder::{Candidate, CandidateSet, GroundError, Grounder};
use super::{SpatialRelation, SubInstruction, SuperlativeMetric};
use crate::geom::{rotated_iou, RotatedBox};
use crate::textcodec::{parse_answer, AnswerPayload, CoordSpace, TaskTag};

/// Environment variable holding the grounder endpoint.
pub const GROUNDER_URL_ENV: &str = "RSVLTS_GROUNDER_URL";

/// A returned box selects the input candidate it overlaps at least this much.
const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    pub image_path: String,
    pub space: CoordSpace,
    pub timeout: Duration,
    pub max_attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, image_path: impl Into<String>, space: CoordSpace) -> Self {
        Self {
            url: url.into(),
            image_path: image_path.into(),
            space,
            timeout: Duration::from_secs(30),
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    image_path: &'a str,
    instruction: &'a str,
    candidates: Vec<[f64; 8]>,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
}

pub struct RemoteGrounder {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    retries: AtomicUsize,
    parse_failures: AtomicUsize,
}

impl RemoteGrounder {
    pub fn new(cfg: RemoteConfig) -> Result<Self, GroundError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GroundError::Other(format!("building HTTP client: {e}")))?;
        Ok(Self {
            cfg,
            client,
            retries: AtomicUsize::new(0),
            parse_failures: AtomicUsize::new(0),
        })
    }

    /// Retries performed so far, over all calls.
    pub fn retries(&self) -> usize {
        self.retries.load(Ordering::Relaxed)
    }

    /// Replies whose text did not parse as a box list.
    pub fn parse_failures(&self) -> usize {
        self.parse_failures.load(Ordering::Relaxed)
    }

    fn to_model(&self, b: &RotatedBox) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (k, p) in b.corners().iter().enumerate() {
            let q = self.cfg.space.normalize_point(*p);
            out[2 * k] = q.x;
            out[2 * k + 1] = q.y;
        }
        out
    }

    fn match_candidate(&self, b: &RotatedBox) -> Option<RotatedBox> {
        RotatedBox::from_quad(b.corners().map(|p| self.cfg.space.denormalize_point(p))).ok()
    }

    fn post(&self, instruction: &str, candidates: &[Candidate]) -> Result<String, GroundError> {
        let body = Request {
            image_path: &self.cfg.image_path,
            instruction,
            candidates: candidates.iter().map(|c| self.to_model(&c.rbb)).collect(),
        };
        let attempts = self.cfg.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                self.retries.fetch_add(1, Ordering::Relaxed);
                std::thread::sleep(self.cfg.backoff * 2u32.pow(attempt - 2));
            }
            match self.client.post(&self.cfg.url).json(&body).send() {
                Ok(resp) if resp.status().is_server_error() => {
                    last = format!("HTTP {}", resp.status())
                }
                Ok(resp) if !resp.status().is_success() => {
                    return Err(GroundError::Other(format!(
                        "{} answered HTTP {}",
                        self.cfg.url,
                        resp.status()
                    )));
                }
                Ok(resp) => match resp.text() {
                    Ok(text) => return Ok(text),
                    Err(e) => last = e.to_string(),
                },
                Err(e) => last = e.to_string(),
            }
            log::debug!("grounder attempt {attempt}/{attempts} failed: {last}");
        }
        Err(GroundError::Transport {
            attempts,
            message: last,
        })
    }

    /// Sends one query and returns the boxes of the answer, in pixels.
    fn ask(
        &self,
        instruction: &str,
        candidates: &[Candidate],
    ) -> Result<Vec<RotatedBox>, GroundError> {
        let raw = self.post(instruction, candidates)?;
        let text = match serde_json::from_str::<Reply>(&raw) {
            Ok(r) => r.text,
            Err(e) => {
                self.parse_failures.fetch_add(1, Ordering::Relaxed);
                log::warn!("grounder reply is not {{\"text\": ...}} JSON ({e}); treating as empty");
                return Ok(Vec::new());
            }
        };
        match parse_answer(&text, TaskTag::Grounding, &self.cfg.space) {
            Ok(AnswerPayload::RboxList(boxes)) => Ok(boxes
                .iter()
                .filter_map(|b| self.match_candidate(b))
                .collect()),
            Ok(_) => Ok(Vec::new()),
            Err(e) => {
                self.parse_failures.fetch_add(1, Ordering::Relaxed);
                log::warn!(
                    "unparseable grounder answer for {instruction:?}: {e}; treating as empty"
                );
                Ok(Vec::new())
            }
        }
    }

    /// Keeps the input candidates matched by some returned box.
    fn filter(
        &self,
        set: &CandidateSet,
        step: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        let boxes = self.ask(&step.instruction_text(), &set.items)?;
        let mut keep = vec![false; set.len()];
        for b in &boxes {
            let best = set
                .items
                .iter()
                .enumerate()
                .map(|(k, c)| (rotated_iou(b, &c.rbb), k))
                .filter(|(iou, _)| *iou >= MATCH_IOU)
                .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
            if let Some((_, k)) = best {
                keep[k] = true;
            }
        }
        let mut k = 0;
        Ok(set.retain_where(|_| {
            k += 1;
            keep[k - 1]
        }))
    }

    fn seed(&self, instruction: &str) -> Result<CandidateSet, GroundError> {
        let boxes = self.ask(instruction, &[])?;
        Ok(CandidateSet::new(
            boxes
                .into_iter()
                .zip(0u32..)
                .map(|(rbb, id)| Candidate { id, rbb })
                .collect(),
        ))
    }
}

impl Grounder for RemoteGrounder {
    fn ground_category(&self, _: &str, step: &SubInstruction) -> Result<CandidateSet, GroundError> {
        self.seed(&step.instruction_text())
    }

    fn filter_spatial(
        &self,
        set: &CandidateSet,
        _: SpatialRelation,
        _: &str,
        step: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        self.filter(set, step)
    }

    fn filter_attribute(
        &self,
        set: &CandidateSet,
        _: &str,
        _: &str,
        step: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        self.filter(set, step)
    }

    fn rank_superlative(
        &self,
        set: &CandidateSet,
        _: SuperlativeMetric,
        _: Option<&str>,
        step: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        let mut out = self.filter(set, step)?;
        out.items.truncate(1);
        Ok(out)
    }

    fn ground_free_text(&self, text: &str) -> Result<CandidateSet, GroundError> {
        self.seed(text)
    }
}
