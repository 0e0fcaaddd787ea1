//! Random scenes, grammar-generated instructions and a one-shot conjunction
//! reference for the iterative resolver.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::condparse::{
    parse_conditions, pluralize, resolve, singularize, Condition, Entity, OracleGrounder,
    ResolveError, SceneGraph, SpatialRelation, SuperlativeMetric,
};
use crate::geom::{rbb_from_params, BoxParams, Point, RotatedBox};

use super::CheckOutcome;

pub const OBJECT_CATEGORIES: &[&str] = &[
    "plane",
    "ship",
    "vehicle",
    "storage tank",
    "tennis court",
    "bridge",
    "pond",
];
pub const REGION_CATEGORIES: &[&str] = &["river", "road", "runway", "lake", "harbor"];
pub const COLORS: &[&str] = &["red", "white", "gray", "blue"];
pub const SIZES: &[&str] = &["large", "small"];

const CANVAS: f64 = 1000.0;

fn fits(b: &RotatedBox) -> bool {
    b.corners()
        .iter()
        .all(|p| (0.0..=CANVAS).contains(&p.x) && (0.0..=CANVAS).contains(&p.y))
}

fn region(rng: &mut impl Rng, id: u32, category: &str) -> Entity {
    let rbb = loop {
        let p = match category {
            "river" | "road" | "runway" if rng.gen_bool(0.5) => BoxParams {
                cx: rng.gen_range(150.0..850.0),
                cy: 500.0,
                w: rng.gen_range(30.0..90.0),
                h: CANVAS,
                theta: 0.0,
            },
            "river" | "road" | "runway" => BoxParams {
                cx: 500.0,
                cy: rng.gen_range(150.0..850.0),
                w: CANVAS,
                h: rng.gen_range(30.0..90.0),
                theta: 0.0,
            },
            _ => BoxParams {
                cx: rng.gen_range(150.0..850.0),
                cy: rng.gen_range(150.0..850.0),
                w: rng.gen_range(80.0..250.0),
                h: rng.gen_range(80.0..250.0),
                theta: rng.gen_range(-0.5..0.5),
            },
        };
        let b = rbb_from_params(&p).expect("valid params");
        if fits(&b) {
            break b;
        }
    };
    Entity {
        id,
        category: category.into(),
        rbb,
        attributes: BTreeMap::new(),
        role: None,
    }
}

/// A 1000x1000 scene with one or two reference regions and 5 to 25 objects.
pub fn random_scene(rng: &mut impl Rng) -> SceneGraph {
    let mut entities = Vec::new();
    let mut regions = REGION_CATEGORIES.to_vec();
    regions.shuffle(rng);
    for (k, cat) in regions.iter().take(rng.gen_range(1..=2)).enumerate() {
        entities.push(region(rng, 100 + k as u32, cat));
    }
    for id in 0..rng.gen_range(5..=25u32) {
        let rbb = loop {
            let p = BoxParams {
                cx: rng.gen_range(0.0..CANVAS),
                cy: rng.gen_range(0.0..CANVAS),
                w: rng.gen_range(10.0..80.0),
                h: rng.gen_range(10.0..80.0),
                theta: rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
            };
            let b = rbb_from_params(&p).expect("valid params");
            if fits(&b) {
                break b;
            }
        };
        let mut attributes = BTreeMap::new();
        if rng.gen_bool(0.8) {
            attributes.insert("color".to_string(), COLORS.choose(rng).unwrap().to_string());
        }
        attributes.insert("size".to_string(), SIZES.choose(rng).unwrap().to_string());
        let category = OBJECT_CATEGORIES.choose(rng).unwrap().to_string();
        entities.push(Entity {
            id,
            category,
            rbb,
            attributes,
            role: None,
        });
    }
    SceneGraph {
        width: CANVAS as u32,
        height: CANVAS as u32,
        entities,
    }
}

fn spatial_phrase(rng: &mut impl Rng, rel: SpatialRelation, r: &str) -> String {
    let dir = |rel| match rel {
        SpatialRelation::EastOf => "east",
        SpatialRelation::WestOf => "west",
        SpatialRelation::NorthOf => "north",
        SpatialRelation::SouthOf => "south",
        SpatialRelation::LeftOf => "left",
        _ => "right",
    };
    let forms: &[&str] = match rel {
        SpatialRelation::EastOf
        | SpatialRelation::WestOf
        | SpatialRelation::NorthOf
        | SpatialRelation::SouthOf => &[
            "on the {d} side of the {r}",
            "{d} of the {r}",
            "to the {d} of the {r}",
            "on the {d} bank of the {r}",
        ],
        SpatialRelation::LeftOf | SpatialRelation::RightOf => &[
            "to the {d} of the {r}",
            "on the {d} side of the {r}",
            "{d} of the {r}",
        ],
        SpatialRelation::Above => &["above the {r}", "over the {r}"],
        SpatialRelation::Below => &["below the {r}", "under the {r}", "beneath the {r}"],
        SpatialRelation::Near => &[
            "near the {r}",
            "next to the {r}",
            "close to the {r}",
            "beside the {r}",
        ],
    };
    let d = if matches!(
        rel,
        SpatialRelation::Above | SpatialRelation::Below | SpatialRelation::Near
    ) {
        ""
    } else {
        dir(rel)
    };
    forms
        .choose(rng)
        .unwrap()
        .replace("{d}", d)
        .replace("{r}", r)
}

/// An instruction drawn from the grammar plus the conditions it encodes.
pub fn random_instruction(rng: &mut impl Rng, scene: &SceneGraph) -> (String, Vec<Condition>) {
    let present: Vec<&str> = scene.entities.iter().map(|e| e.category.as_str()).collect();
    let category = if rng.gen_bool(0.85) {
        let objects: Vec<&str> = present
            .iter()
            .copied()
            .filter(|c| OBJECT_CATEGORIES.contains(c))
            .collect();
        objects.choose(rng).copied().unwrap_or("plane")
    } else {
        OBJECT_CATEGORIES.choose(rng).unwrap()
    };
    let reference = |rng: &mut dyn rand::RngCore| -> String {
        if rng.gen_bool(0.8) {
            let regions: Vec<&str> = present
                .iter()
                .copied()
                .filter(|c| REGION_CATEGORIES.contains(c))
                .collect();
            regions.choose(rng).copied().unwrap_or("river").to_string()
        } else if rng.gen_bool(0.5) {
            OBJECT_CATEGORIES.choose(rng).unwrap().to_string()
        } else {
            REGION_CATEGORIES.choose(rng).unwrap().to_string()
        }
    };

    let mut conds = vec![Condition::SelectCategory {
        category: category.to_string(),
    }];
    let size = rng.gen_bool(0.3).then(|| *SIZES.choose(rng).unwrap());
    let color = rng.gen_bool(0.4).then(|| *COLORS.choose(rng).unwrap());
    for (key, v) in [("size", size), ("color", color)] {
        if let Some(v) = v {
            conds.push(Condition::Attribute {
                key: key.into(),
                value: v.into(),
            });
        }
    }
    let mut clauses = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let relation = *SpatialRelation::ALL.choose(rng).unwrap();
        let r = reference(rng);
        clauses.push(spatial_phrase(rng, relation, &r));
        conds.push(Condition::SpatialRelation {
            relation,
            reference: r,
        });
    }
    let sup = rng
        .gen_bool(0.35)
        .then(|| *SuperlativeMetric::ALL.choose(rng).unwrap());

    let adjectives: Vec<&str> = [size, color].into_iter().flatten().collect();
    let mut text = match sup {
        Some(m) => {
            let frame = [
                "find the",
                "locate the",
                "where is the",
                "what's the location of the",
                "show me the",
            ]
            .choose(rng)
            .unwrap();
            let word = match m {
                SuperlativeMetric::Largest => ["largest", "biggest"].choose(rng).unwrap(),
                SuperlativeMetric::Smallest => "smallest",
                SuperlativeMetric::Nearest => ["nearest", "closest"].choose(rng).unwrap(),
            };
            [*frame, word]
                .into_iter()
                .chain(adjectives.iter().copied())
                .chain([category])
                .collect::<Vec<_>>()
                .join(" ")
        }
        None => {
            let frame = [
                "detect all",
                "find all",
                "locate all",
                "segment all",
                "show me the",
                "where are the",
                "what are the locations of the",
            ]
            .choose(rng)
            .unwrap();
            let plural = pluralize(category);
            [*frame]
                .into_iter()
                .chain(adjectives.iter().copied())
                .chain([plural.as_str()])
                .collect::<Vec<_>>()
                .join(" ")
        }
    };
    if !clauses.is_empty() {
        text.push(' ');
        text.push_str(&clauses.join(" and "));
    }
    if let Some(metric) = sup {
        let arg = (metric == SuperlativeMetric::Nearest).then(|| reference(rng));
        if let Some(a) = &arg {
            text.push_str(&format!(" to the {a}"));
        }
        conds.push(Condition::Superlative { metric, arg });
    }
    if rng.gen_bool(0.3) {
        text.push_str(" in this image");
    }
    if text.starts_with("wh") {
        text.push('?');
    }
    (text, conds)
}

fn centre(b: &RotatedBox) -> Point {
    let c = b.corners();
    Point::new(
        c.iter().map(|p| p.x).sum::<f64>() / 4.0,
        c.iter().map(|p| p.y).sum::<f64>() / 4.0,
    )
}

/// Distance from `p` to a rectangle, measured in the rectangle's own frame.
fn rect_distance(p: Point, b: &RotatedBox) -> f64 {
    let c = b.corners();
    let (u, v) = ((c[1] - c[0]), (c[3] - c[0]));
    let (lu, lv) = (u.dot(u).sqrt(), v.dot(v).sqrt());
    let d = p - c[0];
    let (s, t) = (d.dot(u) / lu, d.dot(v) / lv);
    let dx = (-s).max(s - lu).max(0.0);
    let dy = (-t).max(t - lv).max(0.0);
    dx.hypot(dy)
}

fn names(e: &Entity, r: &str) -> bool {
    singularize(&e.category.to_lowercase()) == r
        || e.role
            .as_deref()
            .is_some_and(|x| singularize(&x.to_lowercase()) == r)
}

fn holds(scene: &SceneGraph, e: &Entity, c: &Condition, near_px: f64) -> bool {
    match c {
        Condition::SelectCategory { category } => {
            singularize(&e.category.to_lowercase()) == *category
        }
        Condition::Attribute { key, value } => e
            .attributes
            .get(key)
            .is_some_and(|v| v.eq_ignore_ascii_case(value)),
        Condition::SpatialRelation {
            relation,
            reference,
        } => {
            let refs: Vec<&Entity> = scene
                .entities
                .iter()
                .filter(|r| r.id != e.id && names(r, reference))
                .collect();
            if refs.is_empty() {
                return false;
            }
            let p = centre(&e.rbb);
            let xs = refs
                .iter()
                .flat_map(|r| r.rbb.corners().iter().map(|q| q.x));
            let ys = refs
                .iter()
                .flat_map(|r| r.rbb.corners().iter().map(|q| q.y));
            let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                (a.min(x), b.max(x))
            });
            let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
                (a.min(y), b.max(y))
            });
            match relation {
                SpatialRelation::EastOf | SpatialRelation::RightOf => p.x > x1,
                SpatialRelation::WestOf | SpatialRelation::LeftOf => p.x < x0,
                SpatialRelation::NorthOf | SpatialRelation::Above => p.y < y0,
                SpatialRelation::SouthOf | SpatialRelation::Below => p.y > y1,
                SpatialRelation::Near => refs.iter().any(|r| rect_distance(p, &r.rbb) <= near_px),
            }
        }
        Condition::Superlative { .. } => true,
    }
}

/// One-shot evaluation: every entity satisfying all filters, then each
/// superlative picks its single best survivor (lowest id on ties).
pub fn brute_force(scene: &SceneGraph, conds: &[Condition], near_px: f64) -> BTreeSet<u32> {
    let mut alive: Vec<&Entity> = scene
        .entities
        .iter()
        .filter(|e| conds.iter().all(|c| holds(scene, e, c, near_px)))
        .collect();
    for c in conds {
        let Condition::Superlative { metric, arg } = c else {
            continue;
        };
        let score = |e: &Entity| -> Option<f64> {
            let c = e.rbb.corners();
            let area = c[0].dist(c[1]) * c[1].dist(c[2]);
            match metric {
                SuperlativeMetric::Largest => Some(-area),
                SuperlativeMetric::Smallest => Some(area),
                SuperlativeMetric::Nearest => scene
                    .entities
                    .iter()
                    .filter(|r| r.id != e.id && names(r, arg.as_deref().unwrap_or("")))
                    .map(|r| rect_distance(centre(&e.rbb), &r.rbb))
                    .min_by(f64::total_cmp),
            }
        };
        let best = alive
            .iter()
            .filter_map(|e| score(e).map(|s| (s, e.id)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        alive.retain(|e| best.is_some_and(|(_, id)| id == e.id));
    }
    alive.iter().map(|e| e.id).collect()
}

fn sorted(conds: impl IntoIterator<Item = Condition>) -> Vec<String> {
    let mut v: Vec<String> = conds.into_iter().map(|c| c.to_string()).collect();
    v.sort();
    v
}

/// Generates `scenes` scenes with one grammar instruction each and compares
/// the parsed, iteratively resolved answer with the brute-force conjunction
/// of the generating conditions.
pub fn check_resolution(rng: &mut impl Rng, scenes: usize) -> CheckOutcome {
    let (mut parse_mismatch, mut answer_mismatch, mut monotone, mut nonempty) = (0, 0, 0, 0);
    let mut first = None;
    for _ in 0..scenes {
        let scene = random_scene(rng);
        let (text, conds) = random_instruction(rng, &scene);
        let grounder = OracleGrounder::new(&scene);
        let chain = match parse_conditions(&text) {
            Ok(c) => c,
            Err(e) => {
                parse_mismatch += 1;
                first.get_or_insert(format!("{text:?}: {e}"));
                continue;
            }
        };
        if sorted(chain.conditions().cloned()) != sorted(conds.clone()) {
            parse_mismatch += 1;
            first.get_or_insert(format!("{text:?} parsed as {chain}"));
        }
        let want = brute_force(&scene, &conds, grounder.near_px);
        match resolve(&chain, &grounder) {
            Ok(r) => {
                let got: BTreeSet<u32> = r.ids.iter().copied().collect();
                if got != want {
                    answer_mismatch += 1;
                    first.get_or_insert(format!("{text:?}: got {got:?}, want {want:?}"));
                }
                nonempty += usize::from(!got.is_empty());
            }
            Err(ResolveError::NotMonotone { .. }) => monotone += 1,
            Err(e) => {
                answer_mismatch += 1;
                first.get_or_insert(format!("{text:?}: {e}"));
            }
        }
    }
    CheckOutcome::new(
        "resolution_equivalence",
        parse_mismatch + answer_mismatch + monotone == 0,
        format!(
            "{scenes} scenes: {parse_mismatch} parse mismatches, {answer_mismatch} answer mismatches, \
             {monotone} monotonicity violations, {nonempty} non-empty answers{}",
            first.map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}
