//! Cyclic referring: localization records to region captions and back.
//!
//! A localizing record ("What's the location of the largest pond in this
//! image?" answered with the pond's corners) becomes one region-caption
//! record per answered object ("Could you describe the object at {...}?"
//! answered "A large pond"). The reverse transform reads the point set back
//! out of the caption prompt. Coordinates are copied as text, never
//! recomputed.

use rayon::prelude::*;

use crate::condparse::{parse_conditions, Condition, SuperlativeMetric};
use crate::convert::{pick_template, seeded_hash, InstructionRecord};
use crate::textcodec::{parse_answer, serialize_answer, AnswerPayload, CodecError, TaskTag};

pub const CANONICAL_CAPTION_PROMPT: &str = "Could you describe the object at {coords}?";

const CAPTION_PROMPTS: &[&str] = &[
    CANONICAL_CAPTION_PROMPT,
    "What is the object at {coords}?",
    "Describe the region {coords} briefly.",
    "What can be seen at {coords}?",
    "Give a short description of the object at {coords}.",
];

/// Phrase used for change records, whose prompts describe the change rather
/// than an object.
const CHANGE_PHRASE: &str = "changed region";

const SOURCE_TAG: &str = "source_tag";
const SOURCE_ID: &str = "source_id";
const PAIRED_IMAGE: &str = "paired_image";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateChoice {
    /// Always the first template.
    Canonical,
    /// Hash of the seed and the new record id.
    Seeded(u64),
}

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("record {id}: tag {tag} is not a localizing task")]
    NotEligible { id: String, tag: TaskTag },
    #[error("record {id}: empty answer, nothing to refer to")]
    EmptyAnswer { id: String },
    #[error("record {id}: no object phrase in prompt ({reason})")]
    NoPhrase { id: String, reason: String },
    #[error("record {id}: {source}")]
    Codec {
        id: String,
        #[source]
        source: CodecError,
    },
}

/// A localizing record for one object and its region-caption counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicPair {
    pub forward: InstructionRecord,
    pub backward: InstructionRecord,
    pub link: String,
}

fn article(phrase: &str) -> &'static str {
    match phrase.chars().next() {
        Some(c) if "aeiou".contains(c.to_ascii_lowercase()) => "An",
        _ => "A",
    }
}

/// Caption phrase from a localizing prompt: size, other attributes, the
/// category, then any spatial clauses. "the largest pond" gives "A large pond".
pub fn caption_from_prompt(prompt: &str) -> Result<String, String> {
    let chain = parse_conditions(prompt).map_err(|e| e.to_string())?;
    let mut size = None;
    let mut adjectives = Vec::new();
    let mut clauses = Vec::new();
    for step in chain.steps() {
        match &step.condition {
            Condition::Attribute { key, value } if key == "size" => size = Some(value.clone()),
            Condition::Attribute { value, .. } => adjectives.push(value.clone()),
            Condition::Superlative {
                metric: SuperlativeMetric::Largest,
                ..
            } => {
                size.get_or_insert_with(|| "large".into());
            }
            Condition::Superlative {
                metric: SuperlativeMetric::Smallest,
                ..
            } => {
                size.get_or_insert_with(|| "small".into());
            }
            Condition::SpatialRelation { .. } => clauses.push(step.raw_text.to_lowercase()),
            Condition::Superlative { .. } | Condition::SelectCategory { .. } => {}
        }
    }
    let words: Vec<String> = size
        .into_iter()
        .chain(adjectives)
        .chain([chain.category().to_string()])
        .chain(clauses)
        .collect();
    let phrase = words.join(" ");
    Ok(format!("{} {phrase}", article(&phrase)))
}

fn is_localizing(tag: TaskTag) -> bool {
    matches!(
        tag,
        TaskTag::Detection | TaskTag::Grounding | TaskTag::Seg | TaskTag::Change
    )
}

/// One region-caption record per object in `r`'s answer.
pub fn rec_to_region_captions(
    r: &InstructionRecord,
    choice: TemplateChoice,
) -> Result<Vec<InstructionRecord>, AugmentError> {
    if !is_localizing(r.tag) {
        return Err(AugmentError::NotEligible {
            id: r.id.clone(),
            tag: r.tag,
        });
    }
    if r.answer.object_count().unwrap_or(0) == 0 {
        return Err(AugmentError::EmptyAnswer { id: r.id.clone() });
    }
    let caption = if r.tag == TaskTag::Change {
        let phrase = r
            .meta
            .get("category")
            .map(String::as_str)
            .unwrap_or(CHANGE_PHRASE);
        format!("{} {phrase}", article(phrase))
    } else {
        caption_from_prompt(&r.prompt).map_err(|reason| AugmentError::NoPhrase {
            id: r.id.clone(),
            reason,
        })?
    };
    r.answer
        .split_objects()
        .into_iter()
        .enumerate()
        .map(|(k, single)| {
            let coords =
                serialize_answer(&single, &r.space).map_err(|source| AugmentError::Codec {
                    id: r.id.clone(),
                    source,
                })?;
            let id = format!("{}#cyc{k}", r.id);
            let template = match choice {
                TemplateChoice::Canonical => CANONICAL_CAPTION_PROMPT,
                TemplateChoice::Seeded(seed) => pick_template(CAPTION_PROMPTS, seed, &id),
            };
            let mut meta = r.meta.clone();
            meta.insert(SOURCE_ID.into(), r.id.clone());
            meta.insert(SOURCE_TAG.into(), r.tag.token().to_string());
            let images = match r.images.as_slice() {
                [a, b] => {
                    meta.insert(PAIRED_IMAGE.into(), a.clone());
                    vec![b.clone()]
                }
                other => other.to_vec(),
            };
            Ok(InstructionRecord {
                id,
                tag: TaskTag::Identify,
                images,
                prompt: template.replace("{coords}", &coords),
                answer: AnswerPayload::Caption(caption.clone()),
                space: r.space,
                meta,
            })
        })
        .collect()
}

/// Pairs each single-object localizing record with its caption record.
pub fn cyclic_pairs(
    r: &InstructionRecord,
    choice: TemplateChoice,
) -> Result<Vec<CyclicPair>, AugmentError> {
    let captions = rec_to_region_captions(r, choice)?;
    Ok(r.answer
        .split_objects()
        .into_iter()
        .zip(captions)
        .enumerate()
        .map(|(k, (answer, backward))| CyclicPair {
            forward: InstructionRecord {
                id: format!("{}#obj{k}", r.id),
                answer,
                ..r.clone()
            },
            backward,
            link: format!("cyc{k}"),
        })
        .collect())
}

/// The text between the first point-set opener and the last `}`.
fn coordinate_span(prompt: &str, tag: TaskTag) -> Option<&str> {
    let start = if tag == TaskTag::Seg {
        prompt.find("box {")?
    } else {
        prompt.find('{')?
    };
    let end = prompt.rfind('}')?;
    (end > start).then(|| &prompt[start..=end])
}

/// Turns a region-caption record back into a localizing record.
///
/// The task comes from the `source_tag` left by [`rec_to_region_captions`]
/// and defaults to grounding; the answer is parsed from the prompt.
pub fn region_caption_to_rec(r: &InstructionRecord) -> Result<InstructionRecord, AugmentError> {
    if r.tag != TaskTag::Identify {
        return Err(AugmentError::NotEligible {
            id: r.id.clone(),
            tag: r.tag,
        });
    }
    let tag = match r.meta.get(SOURCE_TAG).and_then(|t| TaskTag::from_token(t)) {
        Some(t @ (TaskTag::Seg | TaskTag::Change)) => t,
        _ => TaskTag::Grounding,
    };
    let codec = |source| AugmentError::Codec {
        id: r.id.clone(),
        source,
    };
    let span = coordinate_span(&r.prompt, tag).ok_or_else(|| {
        codec(crate::textcodec::ParseFailure::new("no point set in prompt", 0, &r.prompt).into())
    })?;
    let answer = parse_answer(span, tag, &r.space).map_err(codec)?;
    let AnswerPayload::Caption(caption) = &r.answer else {
        return Err(AugmentError::NoPhrase {
            id: r.id.clone(),
            reason: "answer is not a caption".into(),
        });
    };
    let phrase = caption.trim().trim_end_matches('.');
    let mut chars = phrase.chars();
    let phrase = match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect::<String>(),
        None => {
            return Err(AugmentError::NoPhrase {
                id: r.id.clone(),
                reason: "empty caption".into(),
            })
        }
    };
    let mut meta = r.meta.clone();
    meta.remove(SOURCE_TAG);
    meta.remove(SOURCE_ID);
    let mut images = r.images.clone();
    if tag == TaskTag::Change {
        if let Some(a) = meta.remove(PAIRED_IMAGE) {
            images.insert(0, a);
        }
    }
    Ok(InstructionRecord {
        id: format!("{}#rec", r.id),
        tag,
        images,
        prompt: format!("What's the location of {phrase} in this image?"),
        answer,
        space: r.space,
        meta,
    })
}

/// Originals followed by the cyclic counterparts of a seeded sample of
/// eligible records. A record is sampled when its seeded id hash falls below
/// `ratio` of the hash range, so the choice is stable under reruns.
pub fn augment_corpus(
    records: &[InstructionRecord],
    ratio: f64,
    seed: u64,
) -> Vec<InstructionRecord> {
    let ratio = ratio.clamp(0.0, 1.0);
    let extra: Vec<Vec<InstructionRecord>> = records
        .par_iter()
        .map(|r| {
            if ratio == 0.0 || (seeded_hash(seed, &r.id) as f64 / 2f64.powi(64)) >= ratio {
                return Vec::new();
            }
            let out = if r.tag == TaskTag::Identify {
                region_caption_to_rec(r).map(|x| vec![x])
            } else {
                rec_to_region_captions(r, TemplateChoice::Seeded(seed))
            };
            out.unwrap_or_else(|e| {
                log::debug!("not augmenting: {e}");
                Vec::new()
            })
        })
        .collect();
    records
        .iter()
        .cloned()
        .chain(extra.into_iter().flatten())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point, RotatedBox};
    use crate::textcodec::CoordSpace;
    use std::collections::BTreeMap;

    fn pond_record() -> InstructionRecord {
        let corners = [
            (100.0, 100.0),
            (100.0, 200.0),
            (200.0, 200.0),
            (200.0, 100.0),
        ]
        .map(|(x, y)| Point::new(x, y));
        InstructionRecord {
            id: "pond".into(),
            tag: TaskTag::Grounding,
            images: vec!["pond.png".into()],
            prompt: "What's the location of the largest pond in this image?".into(),
            answer: AnswerPayload::RboxList(vec![RotatedBox::new(corners).unwrap()]),
            space: CoordSpace::pixel(512, 512),
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn pond_example() {
        let r = pond_record();
        let caps = rec_to_region_captions(&r, TemplateChoice::Canonical).unwrap();
        assert_eq!(caps.len(), 1);
        assert_eq!(
            caps[0].prompt,
            "Could you describe the object at {(100, 100), (100, 200), (200, 200), (200, 100)}?"
        );
        assert_eq!(
            caps[0].answer,
            AnswerPayload::Caption("A large pond".into())
        );
        caps[0].validate().unwrap();
        let back = region_caption_to_rec(&caps[0]).unwrap();
        assert_eq!(back.tag, TaskTag::Grounding);
        assert_eq!(back.answer, r.answer);
        assert_eq!(
            back.prompt,
            "What's the location of a large pond in this image?"
        );
    }

    #[test]
    fn captions_from_prompts() {
        assert_eq!(
            caption_from_prompt("detect all planes on the east bank of the river").unwrap(),
            "A plane on the east bank of the river"
        );
        assert_eq!(
            caption_from_prompt("find the smallest white storage tank").unwrap(),
            "A small white storage tank"
        );
        assert_eq!(
            caption_from_prompt("locate every airport").unwrap(),
            "An airport"
        );
        assert!(caption_from_prompt("where is it?").is_err());
    }

    #[test]
    fn empty_and_ineligible_are_skipped() {
        let mut r = pond_record();
        r.answer = AnswerPayload::RboxList(vec![]);
        assert!(matches!(
            rec_to_region_captions(&r, TemplateChoice::Canonical),
            Err(AugmentError::EmptyAnswer { .. })
        ));
        r.tag = TaskTag::Geoloc;
        assert!(matches!(
            rec_to_region_captions(&r, TemplateChoice::Canonical),
            Err(AugmentError::NotEligible { .. })
        ));
    }

    #[test]
    fn corpus_ratio_bounds() {
        let recs: Vec<_> = (0..20)
            .map(|k| InstructionRecord {
                id: format!("p{k}"),
                ..pond_record()
            })
            .collect();
        assert_eq!(augment_corpus(&recs, 0.0, 7), recs);
        let all = augment_corpus(&recs, 1.0, 7);
        assert_eq!(all.len(), 40);
        assert_eq!(&all[..20], &recs[..]);
        assert_eq!(augment_corpus(&recs, 0.5, 7), augment_corpus(&recs, 0.5, 7));
        let half = augment_corpus(&recs, 0.5, 7).len() - 20;
        assert!(half > 0 && half < 20, "{half}");
    }

    #[test]
    fn pairs_link_objects() {
        let mut r = pond_record();
        let AnswerPayload::RboxList(b) = &r.answer else {
            panic!()
        };
        let b = b[0];
        r.answer = AnswerPayload::RboxList(vec![b, b]);
        let pairs = cyclic_pairs(&r, TemplateChoice::Seeded(1)).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].link, "cyc1");
        assert_eq!(
            region_caption_to_rec(&pairs[1].backward).unwrap().answer,
            pairs[1].forward.answer
        );
    }
}
