//! Model input assembly and output cleanup.
//!
//! The enriched tuple is one string made of three parts, joined by single spaces:
//!
//! ```text
//! <claim 1><feature 0> receiving data </feature></claim> <fig 1><com> memory <num> 104 </num></com></fig> <desc 1> a block diagram </desc>
//! ```
//!
//! The special-token vocabulary is fixed: `<claim N>`, `<feature N>`, `<fig N>`,
//! `<com>`, `<num>`, `<desc N>` and the matching closers. See `docs/token-grammar.md`.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{ClaimFeature, FeatureId};
use crate::drawings::{enrich_component_subset, ComponentPair, DrawingFigure};
use crate::text::normalize_whitespace;

const VOCABULARY: &str =
    r"<(?:(?:claim|feature|fig|desc) \d+|com|num|/claim|/feature|/fig|/com|/num|/desc)>";

/// Matches any member of the special-token vocabulary.
pub static SPECIAL_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(VOCABULARY).unwrap());
static SPECIAL_TOKEN_EXACT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!("^{VOCABULARY}$")).unwrap());
static ANY_ANGLE_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][^<>]*>").unwrap());
static PARAGRAPH_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n[ \t\r]*\n").unwrap());
static SPACE_BEFORE_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r" ([.,;:!?])").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnrichError {
    #[error("feature {0} has no mapped components")]
    UnmappedFeature(FeatureId),
    #[error("component {name} {number} refers to figure {figure}, which is not in the project")]
    UnknownFigure {
        name: String,
        number: String,
        figure: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleParts {
    pub claim_part: String,
    pub component_part: String,
    pub description_part: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedTuple {
    pub feature_id: FeatureId,
    pub serialized: String,
    pub parts: TupleParts,
}

/// Builds T′ for one feature from its mapped components.
///
/// Components are grouped per figure in ascending figure order, each group rendered
/// as its N′ fragment; one `<desc N>` element follows per involved figure. With
/// `strict` set, a feature without mapped components is an error.
pub fn build_tuple(
    feature: &ClaimFeature,
    mapped: &[ComponentPair],
    figures: &[DrawingFigure],
    strict: bool,
) -> Result<EnrichedTuple, EnrichError> {
    if strict && mapped.is_empty() {
        return Err(EnrichError::UnmappedFeature(feature.id()));
    }
    let mut groups: BTreeMap<u32, Vec<&ComponentPair>> = BTreeMap::new();
    for c in mapped {
        if !figures.iter().any(|f| f.figure_number == c.figure) {
            return Err(EnrichError::UnknownFigure {
                name: c.name.clone(),
                number: c.number.to_string(),
                figure: c.figure,
            });
        }
        let group = groups.entry(c.figure).or_default();
        if !group.iter().any(|g| g.number == c.number) {
            group.push(c);
        }
    }

    let component_part = groups
        .iter()
        .map(|(fig, comps)| enrich_component_subset(*fig, comps.iter().copied()))
        .collect::<Vec<_>>()
        .join(" ");
    let description_part = groups
        .keys()
        .filter_map(|n| figures.iter().find(|f| f.figure_number == *n))
        .map(|f| f.enriched_description.clone())
        .collect::<Vec<_>>()
        .join(" ");

    let parts = TupleParts {
        claim_part: feature.enriched_text.clone(),
        component_part,
        description_part,
    };
    let serialized = [&parts.claim_part, &parts.component_part, &parts.description_part]
        .into_iter()
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(EnrichedTuple {
        feature_id: feature.id(),
        serialized,
        parts,
    })
}

/// Tags in `text` that are not part of the special vocabulary.
pub fn foreign_tokens(text: &str) -> Vec<&str> {
    ANY_ANGLE_TOKEN
        .find_iter(text)
        .map(|m| m.as_str())
        .filter(|t| !SPECIAL_TOKEN_EXACT.is_match(t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanupWarning {
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanedText {
    pub cleaned: String,
    pub paragraphs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<CleanupWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedSpecification {
    pub feature_id: FeatureId,
    pub raw: String,
    pub cleaned: String,
    pub paragraphs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<CleanupWarning>,
}

impl GeneratedSpecification {
    pub fn from_raw(feature_id: FeatureId, raw: &str) -> Self {
        let CleanedText {
            cleaned,
            paragraphs,
            warnings,
        } = clean_specification(raw);
        Self {
            feature_id,
            raw: raw.to_string(),
            cleaned,
            paragraphs,
            warnings,
        }
    }
}

fn replace_special(caps: &regex::Captures<'_>) -> String {
    let token = &caps[0];
    match token.strip_prefix("<fig ") {
        Some(rest) => format!(" FIG. {} ", rest.trim_end_matches('>')),
        None => " ".to_string(),
    }
}

/// Converts generated S′ into presentation text S.
///
/// `<fig N>` becomes `FIG. N`; every other vocabulary token is dropped, which turns
/// `<com> memory <num> 104 </num></com>` into `memory 104`. Any other tag (`<` or `</`
/// directly followed by a letter) is stripped and reported. Whitespace is normalized within paragraphs, and
/// paragraphs are split at blank lines; a space left before punctuation is dropped.
pub fn clean_specification(raw: &str) -> CleanedText {
    let mut warnings = Vec::new();
    let mut text = SPECIAL_TOKEN.replace_all(raw, replace_special).into_owned();
    // Stripping can expose new tokens ("<<x>y>"), so repeat until none are left.
    while ANY_ANGLE_TOKEN.is_match(&text) {
        text = ANY_ANGLE_TOKEN
            .replace_all(&text, |caps: &regex::Captures<'_>| {
                warnings.push(CleanupWarning {
                    token: caps[0].to_string(),
                });
                " "
            })
            .into_owned();
    }

    let paragraphs: Vec<String> = PARAGRAPH_BREAK
        .split(&text)
        .map(|p| SPACE_BEFORE_PUNCT.replace_all(&normalize_whitespace(p), "$1").into_owned())
        .filter(|p| !p.is_empty())
        .collect();
    CleanedText {
        cleaned: paragraphs.join("\n\n"),
        paragraphs,
        warnings,
    }
}

/// Joins cleaned specifications into one document.
///
/// With `numbered`, each paragraph gets a `[0001]`-style prefix.
pub fn render_specification(specs: &[GeneratedSpecification], numbered: bool) -> String {
    let paragraphs = specs.iter().flat_map(|s| s.paragraphs.iter());
    if numbered {
        paragraphs
            .enumerate()
            .map(|(i, p)| format!("[{:04}] {p}", i + 1))
            .collect::<Vec<_>>()
            .join("\n\n")
    } else {
        paragraphs.cloned().collect::<Vec<_>>().join("\n\n")
    }
}
