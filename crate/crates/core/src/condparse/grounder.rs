//! Grounder interface and the iterative resolver.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{Condition, ConditionChain, SpatialRelation, SubInstruction, SuperlativeMetric};
use crate::geom::RotatedBox;
use crate::textcodec::AnswerPayload;

/// A box with an id that is stable for the lifetime of one resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub id: u32,
    pub rbb: RotatedBox,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CandidateSet {
    pub items: Vec<Candidate>,
    /// Steps that produced this set, in order.
    pub provenance: Vec<String>,
}

impl CandidateSet {
    pub fn new(items: Vec<Candidate>) -> Self {
        Self {
            items,
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<u32> {
        self.items.iter().map(|c| c.id).collect()
    }

    /// Keeps the items for which `keep` holds, preserving order.
    pub fn retain_where(&self, mut keep: impl FnMut(&Candidate) -> bool) -> CandidateSet {
        CandidateSet {
            items: self.items.iter().filter(|c| keep(c)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GroundError {
    #[error("unsupported {what}; supported: {}", supported.join(", "))]
    Unsupported {
        what: String,
        supported: Vec<String>,
    },
    #[error("grounder transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("grounder: {0}")]
    Other(String),
}

/// Something that can answer one condition at a time.
pub trait Grounder {
    fn ground_category(
        &self,
        category: &str,
        step: &SubInstruction,
    ) -> Result<CandidateSet, GroundError>;

    fn filter_spatial(
        &self,
        set: &CandidateSet,
        relation: SpatialRelation,
        reference: &str,
        step: &SubInstruction,
    ) -> Result<CandidateSet, GroundError>;

    fn filter_attribute(
        &self,
        set: &CandidateSet,
        key: &str,
        value: &str,
        step: &SubInstruction,
    ) -> Result<CandidateSet, GroundError>;

    fn rank_superlative(
        &self,
        set: &CandidateSet,
        metric: SuperlativeMetric,
        arg: Option<&str>,
        step: &SubInstruction,
    ) -> Result<CandidateSet, GroundError>;

    /// Answers an instruction the parser could not decompose.
    fn ground_free_text(&self, text: &str) -> Result<CandidateSet, GroundError> {
        Err(GroundError::Unsupported {
            what: format!("free-text query {text:?}"),
            supported: vec!["parsed instructions".into()],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub index: usize,
    pub step: String,
    pub instruction: String,
    /// `None` for the first step, which has no input set.
    pub in_count: Option<usize>,
    pub out_count: usize,
    /// Set when an earlier step already emptied the candidate set.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    pub ids: Vec<u32>,
    #[serde(skip)]
    pub answer: AnswerPayload,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error("step {step} ({condition}): {source}")]
    Ground {
        step: usize,
        condition: String,
        #[source]
        source: GroundError,
    },
    #[error(
        "step {step} ({condition}) returned {got} candidates from {had}, or ids outside its input"
    )]
    NotMonotone {
        step: usize,
        condition: String,
        had: usize,
        got: usize,
    },
}

/// Runs a chain against a grounder, narrowing the candidate set step by step.
///
/// Each filter step must return a subset of its input; a violation is an
/// error naming the step. Once the set is empty the remaining steps are
/// recorded as skipped.
pub fn resolve(
    chain: &ConditionChain,
    grounder: &dyn Grounder,
) -> Result<Resolution, ResolveError> {
    let mut trace = Vec::with_capacity(chain.len());
    let mut current = CandidateSet::default();
    for (index, step) in chain.steps().iter().enumerate() {
        let label = step.condition.to_string();
        let wrap = |source| ResolveError::Ground {
            step: index,
            condition: label.clone(),
            source,
        };
        if index > 0 && current.is_empty() {
            trace.push(TraceStep {
                index,
                step: label,
                instruction: step.instruction_text(),
                in_count: Some(0),
                out_count: 0,
                skipped: true,
            });
            continue;
        }
        let mut next = match &step.condition {
            Condition::SelectCategory { category } => {
                grounder.ground_category(category, step).map_err(wrap)?
            }
            Condition::SpatialRelation {
                relation,
                reference,
            } => grounder
                .filter_spatial(&current, *relation, reference, step)
                .map_err(wrap)?,
            Condition::Attribute { key, value } => grounder
                .filter_attribute(&current, key, value, step)
                .map_err(wrap)?,
            Condition::Superlative { metric, arg } => grounder
                .rank_superlative(&current, *metric, arg.as_deref(), step)
                .map_err(wrap)?,
        };
        if index > 0 {
            let had = current.ids();
            let superlative_too_many =
                matches!(step.condition, Condition::Superlative { .. }) && next.len() > 1;
            if next.len() > current.len()
                || superlative_too_many
                || !next.items.iter().all(|c| had.contains(&c.id))
            {
                return Err(ResolveError::NotMonotone {
                    step: index,
                    condition: label,
                    had: current.len(),
                    got: next.len(),
                });
            }
        }
        next.provenance = current.provenance.clone();
        next.provenance.push(label.clone());
        trace.push(TraceStep {
            index,
            step: label,
            instruction: step.instruction_text(),
            in_count: (index > 0).then_some(current.len()),
            out_count: next.len(),
            skipped: false,
        });
        current = next;
    }
    Ok(finish(current, trace))
}

/// Resolves an unparsed instruction with a single free-text query.
pub fn resolve_opaque(text: &str, grounder: &dyn Grounder) -> Result<Resolution, ResolveError> {
    let set = grounder
        .ground_free_text(text)
        .map_err(|source| ResolveError::Ground {
            step: 0,
            condition: "free_text".into(),
            source,
        })?;
    let trace = vec![TraceStep {
        index: 0,
        step: "free_text".into(),
        instruction: text.to_string(),
        in_count: None,
        out_count: set.len(),
        skipped: false,
    }];
    Ok(finish(set, trace))
}

fn finish(set: CandidateSet, trace: Vec<TraceStep>) -> Resolution {
    let ids = set.items.iter().map(|c| c.id).collect();
    let answer = AnswerPayload::RboxList(set.items.into_iter().map(|c| c.rbb).collect());
    Resolution { ids, answer, trace }
}
