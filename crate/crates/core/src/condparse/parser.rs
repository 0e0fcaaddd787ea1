//! Rule-based decomposition of free-text instructions.

use serde::Serialize;

use super::lexicon::{self, LEAD_WORDS, PART_WORDS, STOP_WORDS};
use super::{Condition, ConditionChain, SpatialRelation, SubInstruction, SuperlativeMetric};
use crate::textcodec::{split_instruction, ParseFailure};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CondError {
    #[error(transparent)]
    Parse(#[from] ParseFailure),
    #[error("invalid condition chain: {0}")]
    Invalid(String),
}

/// Result of a lenient parse: either a chain or the text to forward as-is.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedInstruction {
    Chain { chain: ConditionChain },
    Opaque { text: String, reason: String },
}

struct Tok<'a> {
    word: String,
    orig: &'a str,
    pos: usize,
}

fn tokenize(text: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive(char::is_whitespace) {
        let lead = raw.len() - raw.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
        let core = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if !core.is_empty() {
            let word = core.to_lowercase().replace('\u{2019}', "'");
            out.push(Tok {
                word,
                orig: core,
                pos: offset + lead,
            });
        }
        offset += raw.len();
    }
    out
}

const PRONOUNS: &[&str] = &[
    "it",
    "them",
    "they",
    "one",
    "ones",
    "something",
    "anything",
    "thing",
    "things",
];

fn is(words: &[&str], w: &str) -> bool {
    words.contains(&w)
}

fn span(toks: &[Tok<'_>], a: usize, b: usize) -> String {
    toks[a..b]
        .iter()
        .map(|t| t.orig)
        .collect::<Vec<_>>()
        .join(" ")
}

fn attribute(word: &str) -> Option<Condition> {
    if let Some(v) = lexicon::color(word) {
        return Some(Condition::Attribute {
            key: "color".into(),
            value: v.into(),
        });
    }
    lexicon::size(word).map(|v| Condition::Attribute {
        key: "size".into(),
        value: v.into(),
    })
}

/// Reads a reference noun phrase starting at `i`, skipping a determiner.
fn reference(toks: &[Tok<'_>], mut i: usize) -> Option<(String, usize)> {
    while i < toks.len() && is(&["the", "a", "an"], &toks[i].word) {
        i += 1;
    }
    let start = i;
    while i < toks.len()
        && !is(STOP_WORDS, &toks[i].word)
        && lexicon::superlative(&toks[i].word).is_none()
    {
        i += 1;
    }
    if i == start {
        return None;
    }
    let phrase = toks[start..i]
        .iter()
        .map(|t| t.word.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    Some((lexicon::singularize(&phrase), i))
}

/// Tries to read a spatial clause at `i`; returns relation, reference and end.
fn spatial(toks: &[Tok<'_>], i: usize) -> Option<(SpatialRelation, String, usize)> {
    let w = |k: usize| toks.get(k).map(|t| t.word.as_str()).unwrap_or("");
    let directed = |mut k: usize| -> Option<(SpatialRelation, String, usize)> {
        let rel = lexicon::direction(w(k))?;
        k += 1;
        if is(PART_WORDS, w(k)) {
            k += 1;
        }
        if w(k) != "of" {
            return None;
        }
        let (r, end) = reference(toks, k + 1)?;
        Some((rel, r, end))
    };
    let first = w(i);
    if is(&["on", "at", "in", "along", "to"], first) {
        let k = if w(i + 1) == "the" { i + 2 } else { i + 1 };
        return directed(k);
    }
    if lexicon::direction(first).is_some() {
        return directed(i);
    }
    if let Some(rel) = lexicon::preposition(first) {
        let (r, end) = reference(toks, i + 1)?;
        return Some((rel, r, end));
    }
    if is(&["next", "close"], first) && w(i + 1) == "to" {
        let (r, end) = reference(toks, i + 2)?;
        return Some((SpatialRelation::Near, r, end));
    }
    None
}

/// Decomposes an instruction into a condition chain.
///
/// A leading task tag is ignored. Fails when no category can be found or a
/// "nearest" has no reference.
pub fn parse_conditions(text: &str) -> Result<ConditionChain, CondError> {
    let (_, body) = split_instruction(text);
    let offset = text.len() - body.len();
    let toks = tokenize(&body);
    let fail = |msg: &str, tok: Option<&Tok<'_>>| {
        CondError::Parse(ParseFailure::new(
            msg,
            offset + tok.map_or(body.len(), |t| t.pos),
            text,
        ))
    };

    let mut steps = Vec::new();
    let mut superlative: Option<(SuperlativeMetric, Option<String>, String)> = None;
    let mut i = 0;
    while i < toks.len() {
        let w = toks[i].word.as_str();
        if let Some(c) = attribute(w) {
            steps.push(SubInstruction::new(c, toks[i].orig));
        } else if let Some(m) = lexicon::superlative(w) {
            superlative = Some((m, None, toks[i].orig.to_string()));
        } else if is(STOP_WORDS, w) && !is(LEAD_WORDS, w) {
            return Err(fail("expected a category before this word", Some(&toks[i])));
        } else if !is(LEAD_WORDS, w) {
            break;
        }
        i += 1;
    }
    if i == toks.len() {
        return Err(fail("no category found", None));
    }
    let cat_start = i;
    while i < toks.len()
        && !is(STOP_WORDS, &toks[i].word)
        && lexicon::superlative(&toks[i].word).is_none()
    {
        i += 1;
    }
    if toks[cat_start..i].iter().all(|t| is(PRONOUNS, &t.word)) {
        return Err(fail("no category found", Some(&toks[cat_start])));
    }
    let phrase = toks[cat_start..i]
        .iter()
        .map(|t| t.word.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    steps.push(SubInstruction::new(
        Condition::SelectCategory {
            category: lexicon::singularize(&phrase),
        },
        span(&toks, 0, i),
    ));

    while i < toks.len() {
        if let Some((relation, reference, end)) = spatial(&toks, i) {
            steps.push(SubInstruction::new(
                Condition::SpatialRelation {
                    relation,
                    reference,
                },
                span(&toks, i, end),
            ));
            i = end;
            continue;
        }
        let w = toks[i].word.as_str();
        if let Some(m) = lexicon::superlative(w) {
            let mut raw_end = i + 1;
            let mut arg = None;
            if m == SuperlativeMetric::Nearest && toks.get(i + 1).is_some_and(|t| t.word == "to") {
                if let Some((r, end)) = reference(&toks, i + 2) {
                    arg = Some(r);
                    raw_end = end;
                }
            }
            superlative = Some((m, arg, span(&toks, i, raw_end)));
            i = raw_end;
            continue;
        }
        if w == "to" {
            if let Some((SuperlativeMetric::Nearest, arg @ None, raw)) = superlative.as_mut() {
                if let Some((r, end)) = reference(&toks, i + 1) {
                    *arg = Some(r);
                    raw.push(' ');
                    raw.push_str(&span(&toks, i, end));
                    i = end;
                    continue;
                }
            }
        }
        if let Some(c) = attribute(w) {
            steps.push(SubInstruction::new(c, toks[i].orig));
        }
        i += 1;
    }

    if let Some((metric, arg, raw)) = superlative {
        if metric == SuperlativeMetric::Nearest && arg.is_none() {
            return Err(fail(
                "\"nearest\" needs a reference such as \"to the harbor\"",
                None,
            ));
        }
        steps.push(SubInstruction::new(
            Condition::Superlative { metric, arg },
            raw,
        ));
    }
    ConditionChain::new(steps)
}

/// Parses, or hands back the text untouched for a single free-text query.
pub fn parse_or_passthrough(text: &str) -> ParsedInstruction {
    match parse_conditions(text) {
        Ok(chain) => ParsedInstruction::Chain { chain },
        Err(e) => ParsedInstruction::Opaque {
            text: text.to_string(),
            reason: e.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conds(text: &str) -> Vec<String> {
        parse_conditions(text)
            .unwrap()
            .conditions()
            .map(|c| c.to_string())
            .collect()
    }

    #[test]
    fn planes_on_east_bank() {
        let chain = parse_conditions("detect all planes on the east bank of the river").unwrap();
        assert_eq!(
            chain.to_string(),
            "[select_category(plane), spatial_relation(east_of, river)]"
        );
        assert_eq!(chain.steps()[0].raw_text, "detect all planes");
        assert_eq!(chain.steps()[1].raw_text, "on the east bank of the river");
    }

    #[test]
    fn largest_pond_question() {
        assert_eq!(
            conds("What's the location of the largest pond in this image?"),
            ["select_category(pond)", "superlative(largest)"]
        );
    }

    #[test]
    fn attributes_then_spatial_then_superlative() {
        assert_eq!(
            conds("[detection] find the biggest red ship to the north of the harbor"),
            [
                "select_category(ship)",
                "attribute(color, red)",
                "spatial_relation(north_of, harbor)",
                "superlative(largest)"
            ]
        );
        assert_eq!(
            conds("locate small grey vehicles near the road"),
            [
                "select_category(vehicle)",
                "attribute(size, small)",
                "attribute(color, gray)",
                "spatial_relation(near, road)"
            ]
        );
    }

    #[test]
    fn nearest_with_reference() {
        assert_eq!(
            conds("find the nearest ship to the bridge"),
            ["select_category(ship)", "superlative(nearest, bridge)"]
        );
        assert_eq!(
            conds("mark the storage tanks west of the road closest to the river"),
            [
                "select_category(storage tank)",
                "spatial_relation(west_of, road)",
                "superlative(nearest, river)"
            ]
        );
        assert!(parse_conditions("find the nearest ship").is_err());
    }

    #[test]
    fn multiple_relations_keep_text_order() {
        assert_eq!(
            conds("detect all tennis courts left of the road and below the lake"),
            [
                "select_category(tennis court)",
                "spatial_relation(left_of, road)",
                "spatial_relation(below, lake)"
            ]
        );
    }

    #[test]
    fn unparseable_passes_through() {
        let e = parse_conditions("where is it?").unwrap_err();
        assert!(matches!(e, CondError::Parse(_)));
        match parse_or_passthrough("where is it?") {
            ParsedInstruction::Opaque { text, .. } => assert_eq!(text, "where is it?"),
            other => panic!("{other:?}"),
        }
        assert!(parse_conditions("").is_err());
    }

    #[test]
    fn sub_instruction_texts() {
        let chain = parse_conditions("detect all planes on the east bank of the river").unwrap();
        let t: Vec<_> = chain.steps().iter().map(|s| s.instruction_text()).collect();
        assert_eq!(
            t,
            [
                "detect all planes",
                "select the ones on the east bank of the river"
            ]
        );
    }

    #[test]
    fn chain_json_roundtrip() {
        let chain = parse_conditions("find the largest white plane south of the runway").unwrap();
        let js = serde_json::to_string(&chain).unwrap();
        let back: ConditionChain = serde_json::from_str(&js).unwrap();
        assert_eq!(back, chain);
        assert!(serde_json::from_str::<ConditionChain>(r#"{"steps":[]}"#).is_err());
    }
}
