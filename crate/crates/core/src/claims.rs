//! Claim parsing: numbered claim blocks, dependency links and feature segmentation.
//!
//! A claim opens on a line of the form `N. ...`. Its body is split into a preamble
//! (everything up to the transitional phrase) and an ordered list of features.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_whitespace;

static CLAIM_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\d+)\.(?:\s|$)").unwrap());
static DEPENDENCY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bof\s+(any\s+(?:one\s+)?of\s+)?(claims?)\s+(\d+)").unwrap()
});
static TRANSITION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bcomprising\b:?|\bincluding:").unwrap());
static WHEREIN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bwherein\b").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClaimError {
    #[error("no numbered claim found in input")]
    EmptyInput,
    #[error("line {line}: claim number {number} does not follow claim {previous}")]
    MalformedNumbering {
        line: usize,
        number: u32,
        previous: u32,
    },
    #[error("line {line}: claim {claim} depends on claim {target}, which does not precede it")]
    DanglingDependency { line: usize, claim: u32, target: u32 },
    #[error("line {line}: claim {claim} has an empty body")]
    EmptyClaim { line: usize, claim: u32 },
}

impl ClaimError {
    /// Line in the submitted text the error points at, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            ClaimError::EmptyInput => None,
            ClaimError::MalformedNumbering { line, .. }
            | ClaimError::DanglingDependency { line, .. }
            | ClaimError::EmptyClaim { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimKind {
    Independent,
    Dependent,
}

/// Identifies one feature of one claim. Rendered as `claim-index`, e.g. `2-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureId {
    pub claim: u32,
    pub index: u32,
}

impl FeatureId {
    pub fn new(claim: u32, index: u32) -> Self {
        Self { claim, index }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.claim, self.index)
    }
}

impl FromStr for FeatureId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (claim, index) = s
            .split_once('-')
            .ok_or_else(|| format!("feature id `{s}` is not of the form claim-index"))?;
        let claim = claim
            .trim()
            .parse()
            .map_err(|_| format!("bad claim number in feature id `{s}`"))?;
        let index = index
            .trim()
            .parse()
            .map_err(|_| format!("bad feature index in feature id `{s}`"))?;
        Ok(FeatureId { claim, index })
    }
}

impl Serialize for FeatureId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimFeature {
    pub claim_number: u32,
    pub index: u32,
    pub text: String,
    pub enriched_text: String,
}

impl ClaimFeature {
    pub fn new(claim_number: u32, index: u32, text: &str) -> Self {
        let text = normalize_whitespace(text);
        let enriched_text = enrich_claim_feature(claim_number, index, &text);
        Self {
            claim_number,
            index,
            text,
            enriched_text,
        }
    }

    pub fn id(&self) -> FeatureId {
        FeatureId::new(self.claim_number, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub number: u32,
    pub kind: ClaimKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depends_on: Option<u32>,
    /// Set when the dependency phrase names several claims ("of any of claims 1-3").
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub multi_dependency: bool,
    pub preamble: String,
    pub features: Vec<ClaimFeature>,
    /// Claim body without the leading `N.` numbering.
    pub raw_text: String,
}

/// Parses a block of claim text into ordered claims.
pub fn parse_claims(claim_text: &str) -> Result<Vec<Claim>, ClaimError> {
    struct Block {
        number: u32,
        line: usize,
        body: String,
    }

    let mut blocks: Vec<Block> = Vec::new();
    for (idx, line) in claim_text.lines().enumerate() {
        if let Some(caps) = CLAIM_START.captures(line) {
            let whole = caps.get(0).unwrap();
            // Numbers too large for u32 cannot be valid claim numbers.
            let number: u32 = caps[1].parse().unwrap_or(0);
            let previous = blocks.last().map(|b| b.number).unwrap_or(0);
            if number == 0 || number <= previous {
                return Err(ClaimError::MalformedNumbering {
                    line: idx + 1,
                    number,
                    previous,
                });
            }
            blocks.push(Block {
                number,
                line: idx + 1,
                body: line[whole.end()..].to_string(),
            });
        } else if let Some(block) = blocks.last_mut() {
            block.body.push('\n');
            block.body.push_str(line);
        }
    }

    if blocks.is_empty() {
        return Err(ClaimError::EmptyInput);
    }

    let mut claims: Vec<Claim> = Vec::with_capacity(blocks.len());
    for block in blocks {
        let raw_text = block.body.trim().to_string();
        if raw_text.is_empty() {
            return Err(ClaimError::EmptyClaim {
                line: block.line,
                claim: block.number,
            });
        }

        let (depends_on, multi_dependency) = match detect_dependency(&raw_text) {
            Some((target, multi)) => {
                if !claims.iter().any(|c| c.number == target) {
                    return Err(ClaimError::DanglingDependency {
                        line: block.line,
                        claim: block.number,
                        target,
                    });
                }
                (Some(target), multi)
            }
            None => (None, false),
        };

        let (preamble, segments) = segment_body(&raw_text);
        let features = segments
            .iter()
            .enumerate()
            .map(|(i, s)| ClaimFeature::new(block.number, i as u32, s))
            .collect();

        claims.push(Claim {
            number: block.number,
            kind: if depends_on.is_some() {
                ClaimKind::Dependent
            } else {
                ClaimKind::Independent
            },
            depends_on,
            multi_dependency,
            preamble,
            features,
            raw_text,
        });
    }
    Ok(claims)
}

/// First "of claim N" phrase in the body; the flag marks multi-claim phrasing.
fn detect_dependency(body: &str) -> Option<(u32, bool)> {
    let caps = DEPENDENCY.captures(body)?;
    let target = caps[3].parse().ok()?;
    let multi = caps.get(1).is_some() || caps[2].eq_ignore_ascii_case("claims");
    Some((target, multi))
}

/// Re-derives the feature list of an already parsed claim from its body.
pub fn segment_features(claim: &Claim) -> Vec<ClaimFeature> {
    let (_, segments) = segment_body(&claim.raw_text);
    segments
        .iter()
        .enumerate()
        .map(|(i, s)| ClaimFeature::new(claim.number, i as u32, s))
        .collect()
}

/// Splits a claim body into its preamble and feature texts.
///
/// The preamble ends at the first "comprising"/"comprising:"/"including:" (or, failing
/// those, the first colon) and is returned without its trailing colon. The rest is
/// split on semicolons, and every "wherein" opens a new feature. A body without any
/// delimiter is a single feature with an empty preamble.
pub fn segment_body(body: &str) -> (String, Vec<String>) {
    let body = normalize_whitespace(body);
    let split_at = TRANSITION
        .find(&body)
        .map(|m| m.end())
        .or_else(|| body.find(':').map(|p| p + 1));

    let (preamble, rest) = match split_at {
        Some(end) => (
            body[..end].trim_end_matches(':').trim().to_string(),
            &body[end..],
        ),
        None => (String::new(), body.as_str()),
    };

    let mut features = Vec::new();
    for segment in rest.split(';') {
        let segment = segment.trim();
        let mut start = 0;
        for m in WHEREIN.find_iter(segment) {
            if m.start() > start {
                push_piece(&mut features, &segment[start..m.start()]);
                start = m.start();
            }
        }
        push_piece(&mut features, &segment[start..]);
    }

    if features.is_empty() {
        return (String::new(), vec![body]);
    }
    (preamble, features)
}

fn push_piece(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

/// C′ fragment for one feature: `<claim N><feature I> text </feature></claim>`.
pub fn enrich_claim_feature(claim_number: u32, index: u32, text: &str) -> String {
    format!(
        "<claim {claim_number}><feature {index}> {} </feature></claim>",
        normalize_whitespace(text)
    )
}

/// All features of all claims in document order.
pub fn all_features(claims: &[Claim]) -> Vec<ClaimFeature> {
    claims.iter().flat_map(|c| c.features.iter().cloned()).collect()
}
