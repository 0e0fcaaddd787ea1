//! Closed vocabularies for the instruction grammar.

use super::{SpatialRelation, SuperlativeMetric};

const IRREGULAR: &[(&str, &str)] = &[
    ("person", "people"),
    ("bus", "buses"),
    ("child", "children"),
    ("man", "men"),
    ("woman", "women"),
    ("sheep", "sheep"),
    ("aircraft", "aircraft"),
    ("boat", "boats"),
    ("tennis", "tennis"),
    ("glass", "glasses"),
];

/// Singular form of the last word of a noun phrase.
pub fn singularize(phrase: &str) -> String {
    let (head, last) = split_last(phrase);
    let s = if let Some((sing, _)) = IRREGULAR.iter().find(|(_, pl)| *pl == last) {
        sing.to_string()
    } else if IRREGULAR.iter().any(|(sing, _)| *sing == last) {
        last.to_string()
    } else if let Some(stem) = last.strip_suffix("ies").filter(|s| s.len() > 1) {
        format!("{stem}y")
    } else if ["sses", "shes", "ches", "xes", "zes"]
        .iter()
        .any(|suf| last.ends_with(suf))
    {
        last[..last.len() - 2].to_string()
    } else if last.ends_with("ss") || last.ends_with("us") || last.ends_with("is") {
        last.to_string()
    } else if let Some(stem) = last.strip_suffix('s').filter(|s| !s.is_empty()) {
        stem.to_string()
    } else {
        last.to_string()
    };
    join(head, &s)
}

/// Plural form of the last word of a noun phrase.
pub fn pluralize(phrase: &str) -> String {
    let (head, last) = split_last(phrase);
    let p = if let Some((_, pl)) = IRREGULAR.iter().find(|(sing, _)| *sing == last) {
        pl.to_string()
    } else if last.ends_with('y')
        && !last.ends_with("ay")
        && !last.ends_with("ey")
        && !last.ends_with("oy")
    {
        format!("{}ies", &last[..last.len() - 1])
    } else if ["s", "sh", "ch", "x", "z"]
        .iter()
        .any(|suf| last.ends_with(suf))
    {
        format!("{last}es")
    } else {
        format!("{last}s")
    };
    join(head, &p)
}

fn split_last(phrase: &str) -> (&str, &str) {
    let phrase = phrase.trim();
    match phrase.rfind(' ') {
        Some(k) => (&phrase[..k], &phrase[k + 1..]),
        None => ("", phrase),
    }
}

fn join(head: &str, last: &str) -> String {
    if head.is_empty() {
        last.to_string()
    } else {
        format!("{head} {last}")
    }
}

/// Words that may precede the category without carrying a condition: task
/// verbs, question frames and determiners.
pub(crate) const LEAD_WORDS: &[&str] = &[
    "detect",
    "find",
    "locate",
    "segment",
    "show",
    "mark",
    "identify",
    "outline",
    "select",
    "get",
    "give",
    "highlight",
    "count",
    "list",
    "please",
    "can",
    "could",
    "would",
    "you",
    "me",
    "us",
    "where",
    "what",
    "what's",
    "whats",
    "which",
    "is",
    "are",
    "was",
    "were",
    "the",
    "a",
    "an",
    "all",
    "every",
    "each",
    "any",
    "of",
    "location",
    "locations",
    "position",
    "positions",
    "coordinates",
    "box",
    "boxes",
    "rotated",
    "bounding",
    "mask",
    "masks",
    "how",
    "many",
    "there",
    "some",
    "those",
    "these",
    "this",
];

/// Words that end a noun phrase.
pub(crate) const STOP_WORDS: &[&str] = &[
    "on", "in", "at", "to", "of", "near", "north", "south", "east", "west", "northern", "southern",
    "eastern", "western", "left", "right", "above", "below", "under", "beneath", "over", "beside",
    "next", "close", "closest", "nearest", "that", "which", "with", "along", "from", "by",
    "located", "situated", "and", "or", "this", "image", "picture", "scene", "photo", "is", "are",
];

/// Words between a direction and "of" that name a part of the reference.
pub(crate) const PART_WORDS: &[&str] = &["bank", "side", "part", "shore", "edge", "half", "end"];

pub(crate) fn color(word: &str) -> Option<&'static str> {
    Some(match word {
        "red" => "red",
        "green" => "green",
        "blue" => "blue",
        "white" => "white",
        "black" => "black",
        "gray" | "grey" => "gray",
        "yellow" => "yellow",
        "orange" => "orange",
        "brown" => "brown",
        "purple" => "purple",
        "silver" => "silver",
        _ => return None,
    })
}

pub(crate) fn size(word: &str) -> Option<&'static str> {
    Some(match word {
        "large" | "big" | "huge" => "large",
        "small" | "tiny" | "little" => "small",
        "medium" => "medium",
        _ => return None,
    })
}

pub(crate) fn superlative(word: &str) -> Option<SuperlativeMetric> {
    Some(match word {
        "largest" | "biggest" => SuperlativeMetric::Largest,
        "smallest" | "tiniest" => SuperlativeMetric::Smallest,
        "nearest" | "closest" => SuperlativeMetric::Nearest,
        _ => return None,
    })
}

/// Direction words usable as "<dir> of X" or "on the <dir> side of X".
pub(crate) fn direction(word: &str) -> Option<SpatialRelation> {
    Some(match word {
        "east" | "eastern" => SpatialRelation::EastOf,
        "west" | "western" => SpatialRelation::WestOf,
        "north" | "northern" => SpatialRelation::NorthOf,
        "south" | "southern" => SpatialRelation::SouthOf,
        "left" => SpatialRelation::LeftOf,
        "right" => SpatialRelation::RightOf,
        _ => return None,
    })
}

/// Prepositions that take the reference directly: "above the road".
pub(crate) fn preposition(word: &str) -> Option<SpatialRelation> {
    Some(match word {
        "above" | "over" => SpatialRelation::Above,
        "below" | "under" | "beneath" => SpatialRelation::Below,
        "near" | "beside" => SpatialRelation::Near,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plural_forms() {
        for (s, p) in [
            ("plane", "planes"),
            ("ship", "ships"),
            ("harbor", "harbors"),
            ("pond", "ponds"),
            ("storage tank", "storage tanks"),
            ("tennis court", "tennis courts"),
            ("bus", "buses"),
            ("city", "cities"),
            ("bridge", "bridges"),
            ("roundabout", "roundabouts"),
            ("vehicle", "vehicles"),
            ("house", "houses"),
            ("box", "boxes"),
            ("runway", "runways"),
            ("person", "people"),
        ] {
            assert_eq!(pluralize(s), p);
            assert_eq!(singularize(p), s, "{p}");
            assert_eq!(singularize(s), s, "{s}");
        }
    }
}
