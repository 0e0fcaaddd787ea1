//! Multi-condition instruction decomposition and iterative resolution.
//!
//! An instruction such as "detect all planes on the east bank of the river"
//! becomes a [`ConditionChain`]: first select every plane, then keep those
//! east of the river. [`resolve`] runs the chain step by step against a
//! [`Grounder`], feeding each step the survivors of the previous one.

mod grounder;
mod lexicon;
mod oracle;
mod parser;
mod remote;

pub use grounder::{
    resolve, resolve_opaque, Candidate, CandidateSet, GroundError, Grounder, Resolution,
    ResolveError, TraceStep,
};
pub use lexicon::{pluralize, singularize};
pub use oracle::{Entity, OracleGrounder, SceneError, SceneGraph};
pub use parser::{parse_conditions, parse_or_passthrough, CondError, ParsedInstruction};
pub use remote::{RemoteConfig, RemoteGrounder, GROUNDER_URL_ENV};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialRelation {
    EastOf,
    WestOf,
    NorthOf,
    SouthOf,
    LeftOf,
    RightOf,
    Above,
    Below,
    Near,
}

impl SpatialRelation {
    pub const ALL: [SpatialRelation; 9] = [
        SpatialRelation::EastOf,
        SpatialRelation::WestOf,
        SpatialRelation::NorthOf,
        SpatialRelation::SouthOf,
        SpatialRelation::LeftOf,
        SpatialRelation::RightOf,
        SpatialRelation::Above,
        SpatialRelation::Below,
        SpatialRelation::Near,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpatialRelation::EastOf => "east_of",
            SpatialRelation::WestOf => "west_of",
            SpatialRelation::NorthOf => "north_of",
            SpatialRelation::SouthOf => "south_of",
            SpatialRelation::LeftOf => "left_of",
            SpatialRelation::RightOf => "right_of",
            SpatialRelation::Above => "above",
            SpatialRelation::Below => "below",
            SpatialRelation::Near => "near",
        }
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpatialRelation {
    type Err = GroundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpatialRelation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| GroundError::Unsupported {
                what: format!("spatial relation {s:?}"),
                supported: SpatialRelation::ALL
                    .iter()
                    .map(|r| r.name().to_string())
                    .collect(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuperlativeMetric {
    Largest,
    Smallest,
    /// Closest centre to the reference given as the superlative's argument.
    Nearest,
}

impl SuperlativeMetric {
    pub const ALL: [SuperlativeMetric; 3] = [
        SuperlativeMetric::Largest,
        SuperlativeMetric::Smallest,
        SuperlativeMetric::Nearest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuperlativeMetric::Largest => "largest",
            SuperlativeMetric::Smallest => "smallest",
            SuperlativeMetric::Nearest => "nearest",
        }
    }
}

impl FromStr for SuperlativeMetric {
    type Err = GroundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SuperlativeMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GroundError::Unsupported {
                what: format!("superlative {s:?}"),
                supported: SuperlativeMetric::ALL
                    .iter()
                    .map(|m| m.name().to_string())
                    .collect(),
            })
    }
}

/// One condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    SelectCategory {
        category: String,
    },
    SpatialRelation {
        relation: SpatialRelation,
        reference: String,
    },
    Attribute {
        key: String,
        value: String,
    },
    Superlative {
        metric: SuperlativeMetric,
        arg: Option<String>,
    },
}

impl Condition {
    fn rank(&self) -> u8 {
        match self {
            Condition::SelectCategory { .. } => 0,
            Condition::Attribute { .. } => 1,
            Condition::SpatialRelation { .. } => 2,
            Condition::Superlative { .. } => 3,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::SelectCategory { category } => write!(f, "select_category({category})"),
            Condition::SpatialRelation {
                relation,
                reference,
            } => write!(f, "spatial_relation({relation}, {reference})"),
            Condition::Attribute { key, value } => write!(f, "attribute({key}, {value})"),
            Condition::Superlative { metric, arg: None } => {
                write!(f, "superlative({})", metric.name())
            }
            Condition::Superlative {
                metric,
                arg: Some(a),
            } => write!(f, "superlative({}, {a})", metric.name()),
        }
    }
}

/// A single-condition step plus the clause it was read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubInstruction {
    #[serde(flatten)]
    pub condition: Condition,
    pub raw_text: String,
}

impl SubInstruction {
    pub fn new(condition: Condition, raw_text: impl Into<String>) -> Self {
        Self {
            condition,
            raw_text: raw_text.into(),
        }
    }

    /// Stand-alone instruction text for this step, phrased for a grounding
    /// model that also receives the current candidates.
    pub fn instruction_text(&self) -> String {
        match &self.condition {
            Condition::SelectCategory { category } => format!("detect all {}", pluralize(category)),
            Condition::Attribute { value, .. } => format!("select the {value} ones"),
            Condition::SpatialRelation { .. } => {
                format!("select the ones {}", self.raw_text.to_lowercase())
            }
            Condition::Superlative {
                metric: SuperlativeMetric::Nearest,
                arg,
            } => {
                format!(
                    "select the one nearest to the {}",
                    arg.as_deref().unwrap_or("reference")
                )
            }
            Condition::Superlative { metric, .. } => format!("select the {} one", metric.name()),
        }
    }
}

/// Ordered steps; the first always selects a category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ChainRepr", into = "ChainRepr")]
pub struct ConditionChain {
    steps: Vec<SubInstruction>,
}

#[derive(Serialize, Deserialize)]
struct ChainRepr {
    steps: Vec<SubInstruction>,
}

impl ConditionChain {
    /// Builds a chain, putting steps in execution order: category, then
    /// attributes, spatial relations and superlatives, each group keeping its
    /// given order.
    pub fn new(mut steps: Vec<SubInstruction>) -> Result<Self, CondError> {
        steps.sort_by_key(|s| s.condition.rank());
        match steps.first().map(|s| &s.condition) {
            Some(Condition::SelectCategory { .. }) => {}
            _ => {
                return Err(CondError::Invalid(
                    "chain must start with exactly one select_category step".into(),
                ))
            }
        }
        if steps.iter().filter(|s| s.condition.rank() == 0).count() != 1 {
            return Err(CondError::Invalid(
                "chain must start with exactly one select_category step".into(),
            ));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[SubInstruction] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn category(&self) -> &str {
        match &self.steps[0].condition {
            Condition::SelectCategory { category } => category,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn conditions(&self) -> impl Iterator<Item = &Condition> {
        self.steps.iter().map(|s| &s.condition)
    }
}

impl TryFrom<ChainRepr> for ConditionChain {
    type Error = CondError;

    fn try_from(r: ChainRepr) -> Result<Self, Self::Error> {
        ConditionChain::new(r.steps)
    }
}

impl From<ConditionChain> for ChainRepr {
    fn from(c: ConditionChain) -> Self {
        ChainRepr { steps: c.steps }
    }
}

impl fmt::Display for ConditionChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", s.condition)?;
        }
        f.write_str("]")
    }
}
