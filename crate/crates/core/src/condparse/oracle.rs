//! Ground-truth scenes and a grounder that answers from them exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grounder::{Candidate, CandidateSet, GroundError, Grounder};
use super::{singularize, SpatialRelation, SubInstruction, SuperlativeMetric};
use crate::geom::{point_in_polygon, Point, RotatedBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: u32,
    pub category: String,
    pub rbb: RotatedBox,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    /// Name under which this entity can serve as a spatial reference,
    /// in addition to its category ("river", "runway").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl Entity {
    pub fn matches_category(&self, category: &str) -> bool {
        singularize(&self.category.to_lowercase()) == category
    }

    /// Whether this entity is named by a reference phrase.
    pub fn matches_reference(&self, reference: &str) -> bool {
        self.matches_category(reference)
            || self
                .role
                .as_deref()
                .is_some_and(|r| singularize(&r.to_lowercase()) == reference)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("scene has a zero dimension")]
    EmptyCanvas,
    #[error("duplicate entity id {0}")]
    DuplicateId(u32),
    #[error("entity {0} lies outside the {1}x{2} image")]
    OutOfBounds(u32, u32, u32),
    #[error("reading scene: {0}")]
    Io(String),
}

/// Entities of one image with exact boxes and attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub width: u32,
    pub height: u32,
    pub entities: Vec<Entity>,
}

impl SceneGraph {
    /// Checks ids are unique and every box lies within the image.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::EmptyCanvas);
        }
        let mut seen = BTreeSet::new();
        for e in &self.entities {
            if !seen.insert(e.id) {
                return Err(SceneError::DuplicateId(e.id));
            }
            let inside = e.rbb.corners().iter().all(|p| {
                (0.0..=self.width as f64).contains(&p.x)
                    && (0.0..=self.height as f64).contains(&p.y)
            });
            if !inside {
                return Err(SceneError::OutOfBounds(e.id, self.width, self.height));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SceneError::Io(format!("{}: {e}", path.display())))?;
        let scene: SceneGraph = serde_json::from_str(&text)
            .map_err(|e| SceneError::Io(format!("{}: {e}", path.display())))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn entity(&self, id: u32) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }
}

/// Distance from `p` to the box outline, zero inside.
pub(crate) fn point_box_distance(p: Point, b: &RotatedBox) -> f64 {
    let poly = b.polygon();
    if point_in_polygon(p, &poly) {
        return 0.0;
    }
    poly.edges()
        .map(|(a, c)| {
            let ab = c - a;
            let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            p.dist(Point::new(a.x + t * ab.x, a.y + t * ab.y))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Answers every condition exactly from a [`SceneGraph`].
///
/// A candidate is never its own reference. Spatial predicates compare the
/// candidate's centre against the extent of all reference boxes; `near`
/// holds within `near_px` of any reference box.
pub struct OracleGrounder<'a> {
    scene: &'a SceneGraph,
    pub near_px: f64,
}

impl<'a> OracleGrounder<'a> {
    /// `near` defaults to a tenth of the longer image side.
    pub fn new(scene: &'a SceneGraph) -> Self {
        Self {
            scene,
            near_px: 0.1 * scene.width.max(scene.height) as f64,
        }
    }

    fn entity(&self, c: &Candidate) -> Result<&Entity, GroundError> {
        self.scene
            .entity(c.id)
            .ok_or_else(|| GroundError::Other(format!("candidate {} is not in the scene", c.id)))
    }

    fn references(&self, reference: &str, exclude: u32) -> Vec<&Entity> {
        self.scene
            .entities
            .iter()
            .filter(|e| e.id != exclude && e.matches_reference(reference))
            .collect()
    }

    fn holds(&self, e: &Entity, relation: SpatialRelation, reference: &str) -> bool {
        let refs = self.references(reference, e.id);
        if refs.is_empty() {
            return false;
        }
        let c = e.rbb.center();
        if relation == SpatialRelation::Near {
            return refs
                .iter()
                .any(|r| point_box_distance(c, &r.rbb) <= self.near_px);
        }
        let pts = refs.iter().flat_map(|r| r.rbb.corners().iter().copied());
        let (mut x0, mut y0, mut x1, mut y1) = (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for p in pts {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        match relation {
            SpatialRelation::EastOf | SpatialRelation::RightOf => c.x > x1,
            SpatialRelation::WestOf | SpatialRelation::LeftOf => c.x < x0,
            SpatialRelation::NorthOf | SpatialRelation::Above => c.y < y0,
            SpatialRelation::SouthOf | SpatialRelation::Below => c.y > y1,
            SpatialRelation::Near => unreachable!(),
        }
    }
}

impl Grounder for OracleGrounder<'_> {
    fn ground_category(
        &self,
        category: &str,
        _: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        Ok(CandidateSet::new(
            self.scene
                .entities
                .iter()
                .filter(|e| e.matches_category(category))
                .map(|e| Candidate {
                    id: e.id,
                    rbb: e.rbb,
                })
                .collect(),
        ))
    }

    fn filter_spatial(
        &self,
        set: &CandidateSet,
        relation: SpatialRelation,
        reference: &str,
        _: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        let mut keep = BTreeSet::new();
        for c in &set.items {
            if self.holds(self.entity(c)?, relation, reference) {
                keep.insert(c.id);
            }
        }
        Ok(set.retain_where(|c| keep.contains(&c.id)))
    }

    fn filter_attribute(
        &self,
        set: &CandidateSet,
        key: &str,
        value: &str,
        _: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        let mut keep = BTreeSet::new();
        for c in &set.items {
            if self
                .entity(c)?
                .attributes
                .get(key)
                .is_some_and(|v| v.eq_ignore_ascii_case(value))
            {
                keep.insert(c.id);
            }
        }
        Ok(set.retain_where(|c| keep.contains(&c.id)))
    }

    fn rank_superlative(
        &self,
        set: &CandidateSet,
        metric: SuperlativeMetric,
        arg: Option<&str>,
        _: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        let mut best: Option<(f64, u32)> = None;
        for c in &set.items {
            let e = self.entity(c)?;
            let score = match metric {
                SuperlativeMetric::Largest => -e.rbb.area(),
                SuperlativeMetric::Smallest => e.rbb.area(),
                SuperlativeMetric::Nearest => {
                    let reference =
                        arg.ok_or_else(|| GroundError::Other("nearest needs a reference".into()))?;
                    let d = self
                        .references(reference, e.id)
                        .iter()
                        .map(|r| point_box_distance(e.rbb.center(), &r.rbb))
                        .fold(f64::INFINITY, f64::min);
                    if d.is_infinite() {
                        continue;
                    }
                    d
                }
            };
            if best.is_none_or(|(s, id)| score < s || (score == s && c.id < id)) {
                best = Some((score, c.id));
            }
        }
        Ok(set.retain_where(|c| best.is_some_and(|(_, id)| id == c.id)))
    }
}
