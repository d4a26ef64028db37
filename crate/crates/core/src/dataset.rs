//! (T′, S′) training tuples from patent full text.
//!
//! Input is USPTO grant XML (one or more concatenated documents per file) or the
//! simplified [`PatentDocument`] JSON. Output is JSONL, one [`TrainingTuple`] per
//! line, plus a `<stem>.stats.json` sidecar.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::time::Instant;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{all_features, parse_claims, ClaimError, FeatureId};
use crate::drawings::{
    enrich_component, extract_components, parse_figure_label, same_component, ComponentPair,
    DrawingFigure, RefNumeral,
};
use crate::enrichment::{build_tuple, SPECIAL_TOKEN};
use crate::mapper::{suggest_mappings, MappingError, SuggestConfig};
use crate::similarity::{cosine, tokenize};
use crate::text::normalize_whitespace;

pub const DEFAULT_MAX_TOKENS: usize = 512;
pub const DEFAULT_CPC_PREFIX: &str = "G06F";
pub const DEFAULT_ALIGN_THRESHOLD: f64 = 0.1;
/// At most this many paragraphs are concatenated into one target.
pub const MAX_ALIGNED_PARAGRAPHS: usize = 3;

static FIGURE_MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:figure|fig\.?)\s*(\d+)").unwrap());
static BRIEF_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)brief\s+description\s+of\s+(?:the\s+)?drawings?").unwrap());
static CLAIM_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\d+\.").unwrap());

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("malformed document JSON: {0}")]
    MalformedJson(String),
    #[error("document lacks required section `{0}`")]
    MissingSection(String),
    #[error("claims: {0}")]
    Claims(#[from] ClaimError),
    #[error("mapping: {0}")]
    Mapping(#[from] MappingError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_label}: {reason}")]
    Rejected { source_label: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentDocument {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub claims_text: String,
    pub description_paragraphs: Vec<String>,
    #[serde(default)]
    pub brief_description_section: String,
    #[serde(default)]
    pub cpc_codes: Vec<String>,
}

impl PatentDocument {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.doc_id.trim().is_empty() {
            return Err(DatasetError::MissingSection("doc-number".into()));
        }
        if self.claims_text.trim().is_empty() {
            return Err(DatasetError::MissingSection("claims".into()));
        }
        if self.description_paragraphs.iter().all(|p| p.trim().is_empty()) {
            return Err(DatasetError::MissingSection("description".into()));
        }
        Ok(())
    }

    pub fn matches_cpc(&self, prefix: &str) -> bool {
        let prefix = prefix.replace(' ', "").to_uppercase();
        self.cpc_codes
            .iter()
            .any(|c| c.replace(' ', "").to_uppercase().starts_with(&prefix))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub input: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTuple {
    pub doc_id: String,
    pub feature_id: FeatureId,
    pub input_text: String,
    pub target_text: String,
    pub token_counts: TokenCounts,
}

fn text_of(node: roxmltree::Node<'_, '_>, out: &mut String) {
    for child in node.children() {
        if child.is_text() {
            out.push_str(child.text().unwrap_or(""));
        } else if child.is_element() {
            // nested claim-text elements are separate clauses
            let block = child.tag_name().name() == "claim-text";
            if block {
                out.push(' ');
            }
            text_of(child, out);
            if block {
                out.push(' ');
            }
        }
    }
}

fn node_text(node: roxmltree::Node<'_, '_>) -> String {
    let mut out = String::new();
    text_of(node, &mut out);
    normalize_whitespace(&out)
}

fn child_text(node: roxmltree::Node<'_, '_>, name: &str) -> String {
    node.children()
        .find(|c| c.has_tag_name(name))
        .map(node_text)
        .unwrap_or_default()
}

fn cpc_code(node: roxmltree::Node<'_, '_>) -> Option<String> {
    let part = |name| child_text(node, name);
    let (section, class, subclass) = (part("section"), part("class"), part("subclass"));
    if section.is_empty() || class.is_empty() || subclass.is_empty() {
        return None;
    }
    let mut code = format!("{section}{class}{subclass}");
    let (group, subgroup) = (part("main-group"), part("subgroup"));
    if !group.is_empty() {
        code.push_str(&format!(" {group}/{subgroup}"));
    }
    Some(code)
}

/// Parses one USPTO full-text grant document.
pub fn parse_patent_xml(document: &[u8]) -> Result<PatentDocument, DatasetError> {
    let text = std::str::from_utf8(document).map_err(|e| DatasetError::MalformedXml(e.to_string()))?;
    let options = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let xml = roxmltree::Document::parse_with_options(text, options)
        .map_err(|e| DatasetError::MalformedXml(e.to_string()))?;
    let root = xml.root_element();

    let doc_id = root
        .descendants()
        .find(|n| n.has_tag_name("publication-reference"))
        .and_then(|n| n.descendants().find(|d| d.has_tag_name("doc-number")))
        .map(node_text)
        .filter(|s| !s.is_empty())
        .or_else(|| root.attribute("file").map(str::to_string))
        .ok_or_else(|| DatasetError::MissingSection("doc-number".into()))?;
    let title = root
        .descendants()
        .find(|n| n.has_tag_name("invention-title"))
        .map(node_text)
        .unwrap_or_default();

    let mut cpc_codes: Vec<String> = Vec::new();
    for code in root
        .descendants()
        .filter(|n| n.has_tag_name("classification-cpc"))
        .filter_map(cpc_code)
    {
        if !cpc_codes.contains(&code) {
            cpc_codes.push(code);
        }
    }

    let claims = root
        .descendants()
        .find(|n| n.has_tag_name("claims"))
        .ok_or_else(|| DatasetError::MissingSection("claims".into()))?;
    let mut claim_lines = Vec::new();
    for (pos, claim) in claims.children().filter(|n| n.has_tag_name("claim")).enumerate() {
        let body = node_text(claim);
        if body.is_empty() {
            continue;
        }
        if CLAIM_PREFIX.is_match(&body) {
            claim_lines.push(body);
        } else {
            let num = claim
                .attribute("num")
                .and_then(|n| n.trim().parse::<u32>().ok())
                .unwrap_or(pos as u32 + 1);
            claim_lines.push(format!("{num}. {body}"));
        }
    }
    if claim_lines.is_empty() {
        return Err(DatasetError::MissingSection("claims".into()));
    }

    let description = root
        .descendants()
        .find(|n| n.has_tag_name("description"))
        .ok_or_else(|| DatasetError::MissingSection("description".into()))?;
    let mut paragraphs = Vec::new();
    let mut brief = Vec::new();
    let mut in_brief_heading = false;
    for node in description.descendants().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "heading" => in_brief_heading = BRIEF_HEADING.is_match(&node_text(node)),
            "p" => {
                if node.ancestors().any(|a| a.has_tag_name("p") && a != node) {
                    continue;
                }
                let text = node_text(node);
                if text.is_empty() {
                    continue;
                }
                let in_drawings = node
                    .ancestors()
                    .any(|a| a.has_tag_name("description-of-drawings"));
                if in_drawings || in_brief_heading {
                    brief.push(text);
                } else {
                    paragraphs.push(text);
                }
            }
            _ => {}
        }
    }

    let doc = PatentDocument {
        doc_id,
        title,
        claims_text: claim_lines.join("\n"),
        description_paragraphs: paragraphs,
        brief_description_section: brief.join("\n"),
        cpc_codes,
    };
    doc.validate()?;
    Ok(doc)
}

/// Splits a bulk file holding several concatenated XML documents.
pub fn split_xml_documents(bytes: &[u8]) -> Vec<&[u8]> {
    const DECL: &[u8] = b"<?xml";
    let mut starts: Vec<usize> = bytes
        .windows(DECL.len())
        .enumerate()
        .filter(|(_, w)| *w == DECL)
        .map(|(i, _)| i)
        .collect();
    if starts.first() != Some(&0) {
        starts.insert(0, 0);
    }
    let mut docs = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let end = starts.get(i + 1).copied().unwrap_or(bytes.len());
        let chunk = &bytes[start..end];
        if chunk.iter().any(|b| !b.is_ascii_whitespace()) {
            docs.push(chunk);
        }
    }
    docs
}

/// Accepts one document object or an array of them.
pub fn parse_patent_json(text: &str) -> Result<Vec<PatentDocument>, DatasetError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<PatentDocument>),
        One(PatentDocument),
    }
    let docs = match serde_json::from_str::<OneOrMany>(text) {
        Ok(OneOrMany::Many(d)) => d,
        Ok(OneOrMany::One(d)) => vec![d],
        Err(e) => return Err(DatasetError::MalformedJson(e.to_string())),
    };
    Ok(docs)
}

/// Paragraph indices ranked by cosine against the feature text, ties by lower
/// index, keeping at most [`MAX_ALIGNED_PARAGRAPHS`] scoring at least `threshold`.
pub fn align_claim_to_paragraphs(feature_text: &str, paragraphs: &[String], threshold: f64) -> Vec<usize> {
    let feature = tokenize(feature_text);
    let mut scored: Vec<(f64, usize)> = paragraphs
        .iter()
        .enumerate()
        .map(|(i, p)| (cosine(&feature, &tokenize(p)), i))
        .filter(|(s, _)| *s > 0.0 && *s >= threshold)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(MAX_ALIGNED_PARAGRAPHS).map(|(_, i)| i).collect()
}

/// Byte spans of proxy tokens: special tokens count as one each, everything else
/// splits on whitespace.
fn proxy_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let push_words = |from: usize, to: usize, spans: &mut Vec<(usize, usize)>| {
        let chunk = &text[from..to];
        let mut offset = 0;
        for word in chunk.split_whitespace() {
            let at = chunk[offset..].find(word).unwrap() + offset;
            spans.push((from + at, from + at + word.len()));
            offset = at + word.len();
        }
    };
    let mut last = 0;
    for m in SPECIAL_TOKEN.find_iter(text) {
        push_words(last, m.start(), &mut spans);
        spans.push((m.start(), m.end()));
        last = m.end();
    }
    push_words(last, text.len(), &mut spans);
    spans
}

/// The proxy tokenization used for every length limit.
pub fn proxy_tokens(text: &str) -> Vec<&str> {
    proxy_spans(text).into_iter().map(|(s, e)| &text[s..e]).collect()
}

pub fn count_tokens(text: &str) -> usize {
    proxy_spans(text).len()
}

/// Keeps the first `max_tokens` proxy tokens. A cut that would leave a `<num>`
/// unclosed backs off to before that `<num>`.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> String {
    let spans = proxy_spans(text);
    if spans.len() <= max_tokens {
        return normalize_whitespace(text);
    }
    let mut cut = max_tokens;
    let token = |i: usize| &text[spans[i].0..spans[i].1];
    if let Some(open) = (0..cut).rev().find(|&i| token(i) == "<num>") {
        if !(open..cut).any(|i| token(i) == "</num>") {
            cut = open;
        }
    }
    if cut == 0 {
        return String::new();
    }
    normalize_whitespace(&text[spans[0].0..spans[cut - 1].1])
}

/// Rewrites plain "FIG. N" and "name number" mentions into the special-token forms.
pub fn wrap_target(text: &str, components: &[ComponentPair]) -> String {
    let mut out = FIGURE_MENTION.replace_all(text, "<fig $1>").into_owned();
    let mut seen = BTreeSet::new();
    let mut ordered: Vec<&ComponentPair> = components
        .iter()
        .filter(|c| seen.insert((c.name.to_lowercase(), c.number.clone())))
        .collect();
    ordered.sort_by(|a, b| b.name.len().cmp(&a.name.len()).then(a.name.cmp(&b.name)));
    for c in ordered {
        let words: Vec<String> = c.name.split_whitespace().map(regex::escape).collect();
        let pattern = format!(r"(?i)\b{}\s+{}\b", words.join(r"\s+"), regex::escape(c.number.as_str()));
        let re = Regex::new(&pattern).expect("escaped pattern");
        let replacement = enrich_component(c);
        out = re.replace_all(&out, regex::NoExpand(&replacement)).into_owned();
    }
    normalize_whitespace(&out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub max_tokens: usize,
    /// Threshold for component suggestions.
    pub threshold: f64,
    pub top_k: usize,
    pub align_threshold: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            threshold: crate::mapper::DEFAULT_THRESHOLD,
            top_k: crate::mapper::DEFAULT_TOP_K,
            align_threshold: DEFAULT_ALIGN_THRESHOLD,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.max_tokens == 0 {
            return Err(DatasetError::InvalidConfig("max_tokens must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.align_threshold) {
            return Err(DatasetError::InvalidConfig("align_threshold must be in [0, 1]".into()));
        }
        SuggestConfig {
            threshold: self.threshold,
            k: self.top_k,
        }
        .validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentStats {
    pub doc_id: String,
    pub features_total: usize,
    pub tuples_emitted: usize,
    pub features_dropped: usize,
    pub dropped_features: Vec<FeatureId>,
    pub figures: usize,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentTuples {
    pub tuples: Vec<TrainingTuple>,
    pub stats: DocumentStats,
}

/// Figures from the brief description, components from brief description and
/// description text. Description paragraphs inherit the most recent figure mention.
pub fn document_figures(patent: &PatentDocument) -> Vec<DrawingFigure> {
    let mut figures: Vec<DrawingFigure> = Vec::new();
    let mut names: Vec<(RefNumeral, String)> = Vec::new();

    let mut add = |figures: &mut Vec<DrawingFigure>, figure: u32, text: &str, brief: Option<&str>| {
        let pos = match figures.iter().position(|f| f.figure_number == figure) {
            Some(pos) => pos,
            None => {
                figures.push(DrawingFigure::new(figure, &format!("FIG. {figure}"), "", Vec::new(), ""));
                figures.len() - 1
            }
        };
        let fig = &mut figures[pos];
        if let Some(brief) = brief {
            if fig.brief_description.is_empty() {
                fig.set_brief_description(brief);
            }
        }
        for mut c in extract_components(text, figure).components {
            match names.iter().find(|(n, _)| *n == c.number) {
                Some((_, existing)) if same_component(existing, &c.name) => c.name = existing.clone(),
                Some(_) => continue,
                None => names.push((c.number.clone(), c.name.clone())),
            }
            if fig.component(&c.number).is_none() {
                fig.components.push(c);
            }
        }
    };

    for line in patent.brief_description_section.lines() {
        if let Some(figure) = parse_figure_label(line) {
            let desc = FIGURE_MENTION.replace(line, "");
            let desc = desc.trim().trim_start_matches("is ").trim_end_matches('.').trim();
            add(&mut figures, figure, line, Some(desc));
        }
    }
    let mut current = figures.first().map(|f| f.figure_number).unwrap_or(1);
    for paragraph in &patent.description_paragraphs {
        if let Some(figure) = parse_figure_label(paragraph) {
            current = figure;
        }
        add(&mut figures, current, paragraph, None);
    }
    figures.retain(|f| !f.components.is_empty() || !f.brief_description.is_empty());
    figures.sort_by_key(|f| f.figure_number);
    figures
}

/// Runs the per-document pipeline. Features whose target comes out empty are
/// dropped and listed in the statistics.
pub fn build_training_tuples(patent: &PatentDocument, config: &DatasetConfig) -> Result<DocumentTuples, DatasetError> {
    config.validate()?;
    patent.validate()?;
    let claims = parse_claims(&patent.claims_text)?;
    let features = all_features(&claims);
    let figures = document_figures(patent);
    let components: Vec<ComponentPair> = figures.iter().flat_map(|f| f.components.clone()).collect();
    let mappings = suggest_mappings(
        &features,
        &components,
        SuggestConfig {
            threshold: config.threshold,
            k: config.top_k,
        },
    )?;
    let by_feature = mappings.by_feature();

    let mut tuples = Vec::new();
    let mut dropped = Vec::new();
    for feature in &features {
        let mapped: Vec<ComponentPair> = by_feature
            .get(&feature.id())
            .into_iter()
            .flatten()
            .filter_map(|r| components.iter().find(|c| c.reference() == *r).cloned())
            .collect();
        let tuple = build_tuple(feature, &mapped, &figures, false)
            .expect("mapped components come from the document's figures");

        let mut aligned = align_claim_to_paragraphs(&feature.text, &patent.description_paragraphs, config.align_threshold);
        aligned.sort_unstable();
        let joined = aligned
            .iter()
            .map(|&i| patent.description_paragraphs[i].as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let target_text = truncate_tokens(&wrap_target(&joined, &components), config.max_tokens);
        if target_text.is_empty() {
            dropped.push(feature.id());
            continue;
        }
        let input_text = truncate_tokens(&tuple.serialized, config.max_tokens);
        tuples.push(TrainingTuple {
            doc_id: patent.doc_id.clone(),
            feature_id: feature.id(),
            token_counts: TokenCounts {
                input: count_tokens(&input_text),
                target: count_tokens(&target_text),
            },
            input_text,
            target_text,
        });
    }
    let stats = DocumentStats {
        doc_id: patent.doc_id.clone(),
        features_total: features.len(),
        tuples_emitted: tuples.len(),
        features_dropped: dropped.len(),
        dropped_features: dropped,
        figures: figures.len(),
        components: components.len(),
    };
    Ok(DocumentTuples { tuples, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub dataset: DatasetConfig,
    /// Keep only documents with a CPC code starting with this prefix.
    pub cpc_prefix: Option<String>,
    pub parallelism: usize,
    /// Abort on the first rejected document instead of recording it.
    pub fail_fast: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            cpc_prefix: Some(DEFAULT_CPC_PREFIX.to_string()),
            parallelism: 1,
            fail_fast: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub source: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub files: usize,
    pub documents_seen: usize,
    pub documents_accepted: usize,
    pub documents_filtered: usize,
    pub documents_rejected: usize,
    pub rejections: Vec<Rejection>,
    pub features_total: usize,
    pub tuples_emitted: usize,
    pub features_dropped: usize,
    pub documents: Vec<DocumentStats>,
    pub elapsed_seconds: f64,
    pub documents_per_second: f64,
    pub tuples_per_document: f64,
}

enum Outcome {
    Accepted(DocumentTuples),
    Filtered,
    Rejected(Rejection),
}

/// `.xml` and `.json` files directly under `dir`, in name order.
pub fn input_files(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("xml" | "json")
                )
        })
        .collect();
    files.sort();
    Ok(files)
}

type LoadedDocument = (String, Result<PatentDocument, DatasetError>);

fn load_documents(path: &Path) -> Result<Vec<LoadedDocument>, DatasetError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("?").to_string();
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let text = String::from_utf8_lossy(&bytes);
        return Ok(match parse_patent_json(&text) {
            Ok(docs) => docs
                .into_iter()
                .enumerate()
                .map(|(i, d)| {
                    let checked = d.validate().map(|_| d);
                    (format!("{name}#{}", i + 1), checked)
                })
                .collect(),
            Err(e) => vec![(name, Err(e))],
        });
    }
    let docs = split_xml_documents(&bytes);
    let single = docs.len() == 1;
    Ok(docs
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| {
            let label = if single { name.clone() } else { format!("{name}#{}", i + 1) };
            (label, parse_patent_xml(chunk))
        })
        .collect())
}

fn process_file(path: &Path, config: &CorpusConfig) -> Result<Vec<Outcome>, DatasetError> {
    let mut outcomes = Vec::new();
    for (source, parsed) in load_documents(path)? {
        let outcome = match parsed {
            Err(e) => Outcome::Rejected(Rejection {
                source,
                reason: e.to_string(),
            }),
            Ok(doc) => {
                let filtered = config.cpc_prefix.as_deref().is_some_and(|p| !doc.matches_cpc(p));
                if filtered {
                    Outcome::Filtered
                } else {
                    match build_training_tuples(&doc, &config.dataset) {
                        Ok(t) => Outcome::Accepted(t),
                        Err(e) => Outcome::Rejected(Rejection {
                            source,
                            reason: e.to_string(),
                        }),
                    }
                }
            }
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Path of the statistics sidecar for `out`: `tuples.jsonl` -> `tuples.stats.json`.
pub fn stats_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("tuples");
    out.with_file_name(format!("{stem}.stats.json"))
}

/// Builds the corpus from `input_dir` into `out`. Documents are processed in
/// parallel and merged in input order; the JSONL and the sidecar appear only when
/// the whole run succeeds.
pub fn build_corpus(input_dir: &Path, out: &Path, config: &CorpusConfig) -> Result<CorpusStats, DatasetError> {
    config.dataset.validate()?;
    if config.parallelism == 0 {
        return Err(DatasetError::InvalidConfig("parallelism must be at least 1".into()));
    }
    let started = Instant::now();
    let files = input_files(input_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| DatasetError::InvalidConfig(e.to_string()))?;
    let per_file: Vec<Result<Vec<Outcome>, DatasetError>> =
        pool.install(|| files.par_iter().map(|f| process_file(f, config)).collect());

    let mut stats = CorpusStats {
        files: files.len(),
        documents_seen: 0,
        documents_accepted: 0,
        documents_filtered: 0,
        documents_rejected: 0,
        rejections: Vec::new(),
        features_total: 0,
        tuples_emitted: 0,
        features_dropped: 0,
        documents: Vec::new(),
        elapsed_seconds: 0.0,
        documents_per_second: 0.0,
        tuples_per_document: 0.0,
    };
    let mut body = Vec::new();
    for outcomes in per_file {
        for outcome in outcomes? {
            stats.documents_seen += 1;
            match outcome {
                Outcome::Filtered => stats.documents_filtered += 1,
                Outcome::Rejected(r) => {
                    if config.fail_fast {
                        return Err(DatasetError::Rejected {
                            source_label: r.source,
                            reason: r.reason,
                        });
                    }
                    stats.documents_rejected += 1;
                    stats.rejections.push(r);
                }
                Outcome::Accepted(doc) => {
                    stats.documents_accepted += 1;
                    stats.features_total += doc.stats.features_total;
                    stats.tuples_emitted += doc.stats.tuples_emitted;
                    stats.features_dropped += doc.stats.features_dropped;
                    for t in &doc.tuples {
                        serde_json::to_writer(&mut body, t).expect("tuple serializes");
                        body.push(b'\n');
                    }
                    stats.documents.push(doc.stats);
                }
            }
        }
    }
    stats.elapsed_seconds = started.elapsed().as_secs_f64();
    if stats.elapsed_seconds > 0.0 {
        stats.documents_per_second = stats.documents_seen as f64 / stats.elapsed_seconds;
    }
    if stats.documents_accepted > 0 {
        stats.tuples_per_document = stats.tuples_emitted as f64 / stats.documents_accepted as f64;
    }

    let sidecar = serde_json::to_vec_pretty(&stats).expect("stats serialize");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_atomic(out, &body)?;
    write_atomic(&stats_path(out), &sidecar)?;
    Ok(stats)
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}
