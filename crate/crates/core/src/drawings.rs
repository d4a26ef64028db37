//! Drawing text ingestion: figure numbers, component name / reference numeral pairs
//! and brief descriptions.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_whitespace;

static FIGURE_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:figure|fig\.?)\s*(\d+)").unwrap());
static NUMERAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d{1,4})([a-z]?)$").unwrap());
static CANDIDATE_NUMERAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d{2,4}[a-zA-Z]?$").unwrap());

const STOPWORDS: [&str; 8] = ["a", "an", "the", "of", "in", "to", "and", "or"];
/// Words that precede numbers without naming a component ("claim 12", "figure 10").
const NON_COMPONENT_HEADS: [&str; 11] = [
    "fig", "figs", "figure", "figures", "claim", "claims", "page", "pages", "paragraph",
    "section", "table",
];
const MAX_NAME_WORDS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DrawingError {
    #[error("no drawing pages supplied")]
    NoPages,
    #[error("pages `{first}` and `{second}` both resolve to figure {figure}")]
    DuplicateFigureNumber {
        figure: u32,
        first: String,
        second: String,
    },
    #[error("invalid reference numeral `{0}`")]
    InvalidNumeral(String),
    #[error("invalid component name `{0}`")]
    InvalidName(String),
}

/// A reference numeral: 1-4 digits with an optional lowercase letter suffix.
///
/// Orders numerically by the digits, then by suffix, so `104 < 104a < 106 < 1000`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RefNumeral(String);

impl RefNumeral {
    pub fn parse(text: &str) -> Result<Self, DrawingError> {
        let lowered = text.trim().to_ascii_lowercase();
        if NUMERAL.is_match(&lowered) {
            Ok(RefNumeral(lowered))
        } else {
            Err(DrawingError::InvalidNumeral(text.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn key(&self) -> (u32, &str) {
        let split = self.0.find(|c: char| !c.is_ascii_digit()).unwrap_or(self.0.len());
        (self.0[..split].parse().unwrap_or(0), &self.0[split..])
    }
}

impl Ord for RefNumeral {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for RefNumeral {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RefNumeral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for RefNumeral {
    type Err = DrawingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RefNumeral::parse(s)
    }
}

impl Serialize for RefNumeral {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for RefNumeral {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        RefNumeral::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Points at one component of one figure. Rendered as `figure:numeral`, e.g. `1:104`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentRef {
    pub figure: u32,
    pub number: RefNumeral,
}

impl ComponentRef {
    pub fn new(figure: u32, number: RefNumeral) -> Self {
        Self { figure, number }
    }
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.figure, self.number)
    }
}

impl FromStr for ComponentRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (figure, number) = s
            .split_once(':')
            .ok_or_else(|| format!("component ref `{s}` is not of the form figure:numeral"))?;
        let figure = figure
            .trim()
            .parse()
            .map_err(|_| format!("bad figure number in component ref `{s}`"))?;
        let number = RefNumeral::parse(number).map_err(|e| e.to_string())?;
        Ok(ComponentRef { figure, number })
    }
}

impl Serialize for ComponentRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPair {
    pub name: String,
    pub number: RefNumeral,
    pub figure: u32,
}

impl ComponentPair {
    /// Validates and normalizes a user-supplied pair.
    pub fn new(name: &str, number: &str, figure: u32) -> Result<Self, DrawingError> {
        let name = validate_name(name)?;
        Ok(Self {
            name,
            number: RefNumeral::parse(number)?,
            figure,
        })
    }

    pub fn reference(&self) -> ComponentRef {
        ComponentRef::new(self.figure, self.number.clone())
    }
}

/// Lowercases and whitespace-normalizes a component name, rejecting empty names and
/// names containing digits or angle brackets.
pub fn validate_name(name: &str) -> Result<String, DrawingError> {
    let normalized = normalize_whitespace(&name.to_lowercase());
    if normalized.is_empty()
        || normalized
            .chars()
            .any(|c| c.is_ascii_digit() || c.is_numeric() || c == '<' || c == '>')
    {
        return Err(DrawingError::InvalidName(name.to_string()));
    }
    Ok(normalized)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictWarning {
    pub figure: u32,
    pub number: RefNumeral,
    pub kept: String,
    pub rejected: String,
}

impl fmt::Display for ConflictWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FIG. {}: numeral {} is already `{}`; ignoring `{}`",
            self.figure, self.number, self.kept, self.rejected
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentExtraction {
    pub components: Vec<ComponentPair>,
    pub warnings: Vec<ConflictWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawingFigure {
    pub figure_number: u32,
    pub source_label: String,
    pub raw_text: String,
    pub components: Vec<ComponentPair>,
    pub brief_description: String,
    pub enriched_description: String,
}

impl DrawingFigure {
    pub fn new(
        figure_number: u32,
        source_label: &str,
        raw_text: &str,
        components: Vec<ComponentPair>,
        brief_description: &str,
    ) -> Self {
        let mut figure = DrawingFigure {
            figure_number,
            source_label: source_label.to_string(),
            raw_text: raw_text.to_string(),
            components,
            brief_description: String::new(),
            enriched_description: String::new(),
        };
        figure.set_brief_description(brief_description);
        figure
    }

    pub fn set_brief_description(&mut self, text: &str) {
        self.brief_description = normalize_whitespace(text);
        self.enriched_description = enrich_description(self.figure_number, &self.brief_description);
    }

    pub fn component(&self, number: &RefNumeral) -> Option<&ComponentPair> {
        self.components.iter().find(|c| &c.number == number)
    }
}

/// One exported drawing page as submitted by the user or read from disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawingPage {
    pub source_label: String,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brief_description: Option<String>,
}

impl DrawingPage {
    pub fn new(source_label: &str, raw_text: &str) -> Self {
        Self {
            source_label: source_label.to_string(),
            raw_text: raw_text.to_string(),
            brief_description: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawingIngest {
    pub figures: Vec<DrawingFigure>,
    pub warnings: Vec<ConflictWarning>,
}

/// First "FIG. N" / "FIG N" / "Fig. N" / "Figure N" in the text.
pub fn parse_figure_label(text: &str) -> Option<u32> {
    FIGURE_LABEL
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<u32>().ok())
        .find(|&n| n >= 1)
}

struct WordToken<'a> {
    core: &'a str,
    leading_punct: bool,
    trailing_punct: bool,
}

fn split_token(token: &str) -> WordToken<'_> {
    let core = token.trim_matches(|c: char| !c.is_alphanumeric());
    WordToken {
        core,
        leading_punct: !token.starts_with(core),
        trailing_punct: !token.ends_with(core),
    }
}

fn is_name_word(core: &str) -> bool {
    !core.is_empty()
        && core.chars().any(char::is_alphabetic)
        && core
            .chars()
            .all(|c| c.is_alphabetic() || c == '-' || c == '\'')
}

/// True when one name is a word-suffix of the other ("memory" / "later memory"),
/// i.e. the longer run picked up leading prose.
pub fn same_component(a: &str, b: &str) -> bool {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    long == short || long.ends_with(&format!(" {short}"))
}

/// Scans drawing text for `name numeral` mentions.
///
/// A name is the run of up to five alphabetic words directly before a 2-4 digit
/// numeral; the run stops at stopwords, punctuation and non-words. Repeated
/// mentions whose names differ only by leading words keep the shortest name.
pub fn extract_components(raw_text: &str, figure: u32) -> ComponentExtraction {
    let tokens: Vec<WordToken> = raw_text.split_whitespace().map(split_token).collect();
    let mut out = ComponentExtraction::default();
    let mut seen: HashMap<RefNumeral, String> = HashMap::new();

    for (i, token) in tokens.iter().enumerate() {
        if !CANDIDATE_NUMERAL.is_match(token.core) {
            continue;
        }
        let mut start = i;
        while start > 0 && i - start < MAX_NAME_WORDS {
            let word = &tokens[start - 1];
            if word.trailing_punct || !is_name_word(word.core) {
                break;
            }
            if STOPWORDS.contains(&word.core.to_lowercase().as_str()) {
                break;
            }
            start -= 1;
            if word.leading_punct {
                break;
            }
        }
        if start == i {
            continue;
        }
        let head = tokens[i - 1].core.to_lowercase();
        if NON_COMPONENT_HEADS.contains(&head.as_str()) {
            continue;
        }
        let name = tokens[start..i]
            .iter()
            .map(|t| t.core.to_lowercase())
            .collect::<Vec<_>>()
            .join(" ");
        let Ok(number) = RefNumeral::parse(token.core) else {
            continue;
        };

        match seen.get(&number) {
            Some(existing) if *existing == name => {}
            Some(existing) if same_component(existing, &name) => {
                if name.len() < existing.len() {
                    seen.insert(number.clone(), name.clone());
                    if let Some(c) = out.components.iter_mut().find(|c| c.number == number) {
                        c.name = name;
                    }
                }
            }
            Some(existing) => out.warnings.push(ConflictWarning {
                figure,
                number,
                kept: existing.clone(),
                rejected: name,
            }),
            None => {
                seen.insert(number.clone(), name.clone());
                out.components.push(ComponentPair {
                    name,
                    number,
                    figure,
                });
            }
        }
    }
    out
}

/// Turns exported drawing pages into figures.
///
/// The figure number comes from the first figure label in the page text (then its
/// source label) and falls back to the page's 1-based position. A numeral already
/// used with a different name on an earlier figure is dropped with a warning.
pub fn ingest_drawing_text(pages: &[DrawingPage]) -> Result<DrawingIngest, DrawingError> {
    if pages.is_empty() {
        return Err(DrawingError::NoPages);
    }
    let mut ingest = DrawingIngest::default();
    let mut labels: HashMap<u32, &str> = HashMap::new();
    let mut project_names: HashMap<RefNumeral, String> = HashMap::new();

    for (pos, page) in pages.iter().enumerate() {
        let figure_number = parse_figure_label(&page.raw_text)
            .or_else(|| parse_figure_label(&page.source_label))
            .unwrap_or(pos as u32 + 1);
        if let Some(first) = labels.insert(figure_number, &page.source_label) {
            return Err(DrawingError::DuplicateFigureNumber {
                figure: figure_number,
                first: first.to_string(),
                second: page.source_label.clone(),
            });
        }

        let extraction = extract_components(&page.raw_text, figure_number);
        ingest.warnings.extend(extraction.warnings);
        let mut components = Vec::with_capacity(extraction.components.len());
        for component in extraction.components {
            match project_names.get(&component.number) {
                Some(existing) if same_component(existing, &component.name) => {
                    let mut component = component;
                    component.name = existing.clone();
                    components.push(component);
                }
                Some(existing) => {
                    ingest.warnings.push(ConflictWarning {
                        figure: figure_number,
                        number: component.number,
                        kept: existing.clone(),
                        rejected: component.name,
                    });
                }
                _ => {
                    project_names.insert(component.number.clone(), component.name.clone());
                    components.push(component);
                }
            }
        }

        ingest.figures.push(DrawingFigure::new(
            figure_number,
            &page.source_label,
            &page.raw_text,
            components,
            page.brief_description.as_deref().unwrap_or(""),
        ));
    }
    Ok(ingest)
}

/// `<com> name <num> number </num></com>` for one component.
pub fn enrich_component(component: &ComponentPair) -> String {
    format!(
        "<com> {} <num> {} </num></com>",
        component.name, component.number
    )
}

/// N′ fragment of a figure restricted to the given components, in ascending numeral order.
pub fn enrich_component_subset<'a>(
    figure_number: u32,
    components: impl IntoIterator<Item = &'a ComponentPair>,
) -> String {
    let mut sorted: Vec<&ComponentPair> = components.into_iter().collect();
    sorted.sort_by(|a, b| a.number.cmp(&b.number).then_with(|| a.name.cmp(&b.name)));
    let mut out = format!("<fig {figure_number}>");
    for c in sorted {
        out.push_str(&enrich_component(c));
    }
    out.push_str("</fig>");
    out
}

/// N′ fragment for all components of a figure.
pub fn enrich_components(figure: &DrawingFigure) -> String {
    enrich_component_subset(figure.figure_number, &figure.components)
}

/// B′ fragment: `<desc N> text </desc>`, or `<desc N></desc>` without a description.
pub fn enrich_description(figure_number: u32, brief_description: &str) -> String {
    let text = normalize_whitespace(brief_description);
    if text.is_empty() {
        format!("<desc {figure_number}></desc>")
    } else {
        format!("<desc {figure_number}> {text} </desc>")
    }
}

/// Every component reference present across the figures.
pub fn component_refs(figures: &[DrawingFigure]) -> BTreeSet<ComponentRef> {
    figures
        .iter()
        .flat_map(|f| f.components.iter().map(ComponentPair::reference))
        .collect()
}
