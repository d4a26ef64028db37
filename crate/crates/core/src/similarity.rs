//! Token-level similarity: term-frequency cosine, BLEU-1 and BLEU-2.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::drawings::ComponentPair;

/// Lowercase alphanumeric tokens, punctuation stripped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Builds a sequence from pre-split tokens, re-tokenizing each one so the
    /// lowercase/alphanumeric invariant holds.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        TokenSequence(
            tokens
                .into_iter()
                .flat_map(|t| tokenize(t.as_ref()).0)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub cosine: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    /// Unweighted mean of the three metrics.
    pub combined: f64,
}

impl SimilarityScore {
    pub fn new(cosine: f64, bleu1: f64, bleu2: f64) -> Self {
        Self {
            cosine,
            bleu1,
            bleu2,
            combined: (cosine + bleu1 + bleu2) / 3.0,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect(),
    )
}

fn term_counts(seq: &TokenSequence) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in &seq.0 {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Cosine of the term-frequency vectors; 0 when either side is empty.
pub fn cosine(a: &TokenSequence, b: &TokenSequence) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let ca = term_counts(a);
    let cb = term_counts(b);
    let dot: usize = ca
        .iter()
        .filter_map(|(t, &n)| cb.get(t).map(|&m| n * m))
        .sum();
    if dot == 0 {
        return 0.0;
    }
    let norm = |c: &HashMap<&str, usize>| (c.values().map(|&n| (n * n) as f64).sum::<f64>()).sqrt();
    (dot as f64 / (norm(&ca) * norm(&cb))).min(1.0)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram precision times the brevity penalty, without smoothing.
///
/// Returns 0 when the candidate is shorter than `n` or shares no n-gram with the
/// reference. The brevity penalty is `exp(1 - |ref| / |cand|)` for candidates shorter
/// than the reference.
pub fn bleu_n(candidate: &TokenSequence, reference: &TokenSequence, n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be at least 1");
    let cand = candidate.tokens();
    let refr = reference.tokens();
    if cand.len() < n {
        return 0.0;
    }
    let ref_counts = ngram_counts(refr, n);
    let clipped: usize = ngram_counts(cand, n)
        .iter()
        .map(|(gram, &count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    if clipped == 0 {
        return 0.0;
    }
    let precision = clipped as f64 / (cand.len() - n + 1) as f64;
    let bp = if cand.len() < refr.len() {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };
    precision * bp
}

/// Scores a component against a claim feature: the component name is the BLEU
/// candidate, the feature text the reference.
pub fn score_pair(feature_text: &str, component: &ComponentPair) -> SimilarityScore {
    score_texts(feature_text, &component.name)
}

pub fn score_texts(feature_text: &str, component_name: &str) -> SimilarityScore {
    let reference = tokenize(feature_text);
    let candidate = tokenize(component_name);
    SimilarityScore::new(
        cosine(&candidate, &reference),
        bleu_n(&candidate, &reference, 1),
        bleu_n(&candidate, &reference, 2),
    )
}
