//! Claim feature to drawing component mappings: automatic suggestions, user
//! confirmations and precision@k evaluation against gold links.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{ClaimFeature, FeatureId};
use crate::drawings::{ComponentPair, ComponentRef};
use crate::similarity::{score_pair, SimilarityScore};

/// Minimum combined similarity for a suggestion.
pub const DEFAULT_THRESHOLD: f64 = 0.1;
/// Maximum number of suggestions per claim feature.
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("unknown claim feature {0}")]
    UnknownFeature(FeatureId),
    #[error("unknown component {0}")]
    UnknownComponent(ComponentRef),
    #[error("gold mapping set is empty")]
    EmptyGold,
    #[error("gold mapping for feature {0} lists no components")]
    EmptyGoldEntry(FeatureId),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid gold file: {0}")]
    InvalidGold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuggestConfig {
    pub threshold: f64,
    pub k: usize,
}

impl Default for SuggestConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            k: DEFAULT_TOP_K,
        }
    }
}

impl SuggestConfig {
    pub fn validate(&self) -> Result<(), MappingError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(MappingError::InvalidThreshold(self.threshold));
        }
        if self.k == 0 {
            return Err(MappingError::InvalidK);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Suggested,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub feature_id: FeatureId,
    pub component_ref: ComponentRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<SimilarityScore>,
    pub origin: Origin,
    /// Set when the referenced component was edited after the score was computed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stale: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MappingSet {
    pub entries: Vec<MappingEntry>,
}

impl MappingSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, feature: FeatureId, component: &ComponentRef) -> Option<&MappingEntry> {
        self.entries
            .iter()
            .find(|e| e.feature_id == feature && &e.component_ref == component)
    }

    /// Entries of one feature in stored (ranked) order.
    pub fn for_feature(&self, feature: FeatureId) -> impl Iterator<Item = &MappingEntry> {
        self.entries.iter().filter(move |e| e.feature_id == feature)
    }

    /// Ranked component refs per feature.
    pub fn by_feature(&self) -> BTreeMap<FeatureId, Vec<ComponentRef>> {
        let mut map: BTreeMap<FeatureId, Vec<ComponentRef>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.feature_id).or_default().push(e.component_ref.clone());
        }
        map
    }

    /// Adds a user link, or upgrades an existing entry to user origin keeping its score.
    pub fn confirm(&mut self, feature: &ClaimFeature, component: &ComponentPair) {
        let fid = feature.id();
        let cref = component.reference();
        if let Some(entry) = self
            .entries
            .iter_mut()
            .find(|e| e.feature_id == fid && e.component_ref == cref)
        {
            entry.origin = Origin::User;
            return;
        }
        self.entries.push(MappingEntry {
            feature_id: fid,
            component_ref: cref,
            score: Some(score_pair(&feature.text, component)),
            origin: Origin::User,
            stale: false,
        });
    }

    /// Removes a link; returns whether anything was removed.
    pub fn remove(&mut self, feature: FeatureId, component: &ComponentRef) -> bool {
        let before = self.entries.len();
        self.entries
            .retain(|e| !(e.feature_id == feature && &e.component_ref == component));
        before != self.entries.len()
    }

    pub fn user_entries(&self) -> impl Iterator<Item = &MappingEntry> {
        self.entries.iter().filter(|e| e.origin == Origin::User)
    }
}

/// Ranks every component against every feature and keeps the top `k` whose combined
/// score reaches the threshold. Ties break by ascending numeral, then figure.
pub fn suggest_mappings(
    features: &[ClaimFeature],
    components: &[ComponentPair],
    config: SuggestConfig,
) -> Result<MappingSet, MappingError> {
    config.validate()?;
    let mut set = MappingSet::default();
    for feature in features {
        let mut scored: Vec<(SimilarityScore, &ComponentPair)> = components
            .iter()
            .map(|c| (score_pair(&feature.text, c), c))
            .filter(|(s, _)| s.combined >= config.threshold)
            .collect();
        scored.sort_by(|(sa, ca), (sb, cb)| {
            sb.combined
                .total_cmp(&sa.combined)
                .then_with(|| ca.number.cmp(&cb.number))
                .then_with(|| ca.figure.cmp(&cb.figure))
        });
        set.entries
            .extend(scored.into_iter().take(config.k).map(|(score, c)| MappingEntry {
                feature_id: feature.id(),
                component_ref: c.reference(),
                score: Some(score),
                origin: Origin::Suggested,
                stale: false,
            }));
    }
    Ok(set)
}

/// Confirms `feature_id -> component_ref` after resolving both against the project.
pub fn confirm_mapping(
    mut set: MappingSet,
    features: &[ClaimFeature],
    components: &[ComponentPair],
    feature_id: FeatureId,
    component_ref: &ComponentRef,
) -> Result<MappingSet, MappingError> {
    let feature = features
        .iter()
        .find(|f| f.id() == feature_id)
        .ok_or(MappingError::UnknownFeature(feature_id))?;
    let component = components
        .iter()
        .find(|c| &c.reference() == component_ref)
        .ok_or_else(|| MappingError::UnknownComponent(component_ref.clone()))?;
    set.confirm(feature, component);
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldMapping {
    pub feature_id: FeatureId,
    pub component_refs: BTreeSet<ComponentRef>,
}

/// Reads a gold file of the form `{"1-0": ["1:104", "1:106"], ...}`.
pub fn parse_gold(json: &str) -> Result<Vec<GoldMapping>, MappingError> {
    let raw: BTreeMap<FeatureId, BTreeSet<ComponentRef>> =
        serde_json::from_str(json).map_err(|e| MappingError::InvalidGold(e.to_string()))?;
    let gold: Vec<GoldMapping> = raw
        .into_iter()
        .map(|(feature_id, component_refs)| GoldMapping {
            feature_id,
            component_refs,
        })
        .collect();
    for g in &gold {
        if g.component_refs.is_empty() {
            return Err(MappingError::EmptyGoldEntry(g.feature_id));
        }
    }
    Ok(gold)
}

pub fn gold_to_json(gold: &[GoldMapping]) -> String {
    let map: BTreeMap<&FeatureId, &BTreeSet<ComponentRef>> =
        gold.iter().map(|g| (&g.feature_id, &g.component_refs)).collect();
    serde_json::to_string_pretty(&map).expect("gold map serializes")
}

/// Mean over gold features of `|top-k ∩ gold| / min(k, #predicted)`; features
/// without predictions contribute 0.
pub fn precision_at_k(
    predicted: &MappingSet,
    gold: &[GoldMapping],
    k: usize,
) -> Result<f64, MappingError> {
    if k == 0 {
        return Err(MappingError::InvalidK);
    }
    if gold.is_empty() {
        return Err(MappingError::EmptyGold);
    }
    let ranked = predicted.by_feature();
    let total: f64 = gold
        .iter()
        .map(|g| {
            let Some(preds) = ranked.get(&g.feature_id) else {
                return 0.0;
            };
            if preds.is_empty() {
                return 0.0;
            }
            let top: Vec<&ComponentRef> = preds.iter().take(k).collect();
            let hits = top.iter().filter(|r| g.component_refs.contains(r)).count();
            hits as f64 / k.min(preds.len()) as f64
        })
        .sum();
    Ok(total / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{bleu_n, cosine, tokenize};
    use proptest::prelude::*;

    fn feature(claim: u32, index: u32, text: &str) -> ClaimFeature {
        ClaimFeature::new(claim, index, text)
    }

    fn comp(name: &str, number: &str, figure: u32) -> ComponentPair {
        ComponentPair::new(name, number, figure).unwrap()
    }

    fn cref(s: &str) -> ComponentRef {
        s.parse().unwrap()
    }

    #[test]
    fn defaults_follow_published_parameters() {
        let c = SuggestConfig::default();
        assert_eq!(c.threshold, 0.1);
        assert_eq!(c.k, 5);
    }

    #[test]
    fn invalid_parameters() {
        let bad = SuggestConfig { threshold: 1.5, k: 5 };
        assert!(matches!(
            suggest_mappings(&[], &[], bad),
            Err(MappingError::InvalidThreshold(_))
        ));
        let bad = SuggestConfig { threshold: 0.1, k: 0 };
        assert_eq!(suggest_mappings(&[], &[], bad), Err(MappingError::InvalidK));
    }

    #[test]
    fn empty_inputs_give_empty_set() {
        let f = [feature(1, 0, "a memory")];
        assert!(suggest_mappings(&f, &[], SuggestConfig::default()).unwrap().is_empty());
        let c = [comp("memory", "104", 1)];
        assert!(suggest_mappings(&[], &c, SuggestConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn below_threshold_is_dropped() {
        let f = [feature(1, 0, "receiving a packet over the network interface")];
        let c = [comp("memory", "104", 1), comp("processor", "106", 1)];
        let set = suggest_mappings(&f, &c, SuggestConfig::default()).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn keeps_top_five_of_seven() {
        let f = [feature(1, 0, "alpha beta gamma delta epsilon zeta eta")];
        let names = ["alpha", "alpha beta", "gamma delta epsilon", "zeta", "eta beta", "delta", "beta gamma"];
        let comps: Vec<ComponentPair> = names
            .iter()
            .enumerate()
            .map(|(i, n)| comp(n, &(100 + 2 * i).to_string(), 1))
            .collect();

        // independent ranking from the raw metrics
        let reference = tokenize(&f[0].text);
        let mut expected: Vec<(f64, usize)> = comps
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let cand = tokenize(&c.name);
                let combined = (cosine(&cand, &reference)
                    + bleu_n(&cand, &reference, 1)
                    + bleu_n(&cand, &reference, 2))
                    / 3.0;
                (combined, i)
            })
            .collect();
        assert!(expected.iter().all(|(s, _)| *s >= 0.1), "{expected:?}");
        expected.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let expected: Vec<ComponentRef> =
            expected.iter().take(5).map(|(_, i)| comps[*i].reference()).collect();

        let set = suggest_mappings(&f, &comps, SuggestConfig::default()).unwrap();
        let got: Vec<ComponentRef> = set.entries.iter().map(|e| e.component_ref.clone()).collect();
        assert_eq!(got, expected);
        assert!(set.entries.iter().all(|e| e.origin == Origin::Suggested));
    }

    #[test]
    fn ties_break_by_numeral_then_figure() {
        let f = [feature(1, 0, "the memory stores data")];
        let c = [comp("memory", "204", 2), comp("memory", "104", 3), comp("memory", "104", 1)];
        let set = suggest_mappings(&f, &c, SuggestConfig::default()).unwrap();
        let got: Vec<String> = set.entries.iter().map(|e| e.component_ref.to_string()).collect();
        assert_eq!(got, ["1:104", "3:104", "2:204"]);
    }

    #[test]
    fn confirm_rules() {
        let features = [feature(1, 0, "the memory stores data")];
        let comps = [comp("memory", "104", 1), comp("antenna", "120", 1)];
        let set = suggest_mappings(&features, &comps, SuggestConfig::default()).unwrap();
        let suggested_score = set.entries[0].score;

        let set = confirm_mapping(set, &features, &comps, FeatureId::new(1, 0), &cref("1:104")).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.entries[0].origin, Origin::User);
        assert_eq!(set.entries[0].score, suggested_score);

        // below threshold: user authority adds it anyway
        let set = confirm_mapping(set, &features, &comps, FeatureId::new(1, 0), &cref("1:120")).unwrap();
        assert_eq!(set.len(), 2);
        let again = confirm_mapping(set.clone(), &features, &comps, FeatureId::new(1, 0), &cref("1:120")).unwrap();
        assert_eq!(again, set);

        assert_eq!(
            confirm_mapping(set.clone(), &features, &comps, FeatureId::new(2, 0), &cref("1:104")),
            Err(MappingError::UnknownFeature(FeatureId::new(2, 0)))
        );
        assert_eq!(
            confirm_mapping(set, &features, &comps, FeatureId::new(1, 0), &cref("1:999")),
            Err(MappingError::UnknownComponent(cref("1:999")))
        );
    }

    fn user_set(pairs: &[(FeatureId, &str)]) -> MappingSet {
        MappingSet {
            entries: pairs
                .iter()
                .map(|(f, c)| MappingEntry {
                    feature_id: *f,
                    component_ref: cref(c),
                    score: None,
                    origin: Origin::Suggested,
                    stale: false,
                })
                .collect(),
        }
    }

    fn gold(f: FeatureId, refs: &[&str]) -> GoldMapping {
        GoldMapping {
            feature_id: f,
            component_refs: refs.iter().map(|r| cref(r)).collect(),
        }
    }

    #[test]
    fn precision_cases() {
        let f0 = FeatureId::new(1, 0);
        let f1 = FeatureId::new(1, 1);
        let g = vec![gold(f0, &["1:104", "1:106", "1:108"]), gold(f1, &["1:110", "1:112", "1:114"])];

        let perfect = user_set(&[(f0, "1:104"), (f0, "1:106"), (f0, "1:108"), (f1, "1:110"), (f1, "1:112"), (f1, "1:114")]);
        assert_eq!(precision_at_k(&perfect, &g, 3).unwrap(), 1.0);

        assert_eq!(precision_at_k(&MappingSet::default(), &g, 3).unwrap(), 0.0);

        let mixed = user_set(&[(f0, "1:104"), (f0, "1:106"), (f0, "1:108"), (f1, "1:110"), (f1, "1:200"), (f1, "1:202")]);
        let p = precision_at_k(&mixed, &g, 3).unwrap();
        assert!((p - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((p - 0.6667).abs() < 1e-4);

        // fewer predictions than k are not penalised
        let short = user_set(&[(f0, "1:104"), (f1, "1:110")]);
        assert_eq!(precision_at_k(&short, &g, 5).unwrap(), 1.0);

        // only the top k count
        let ranked = user_set(&[(f0, "1:900"), (f0, "1:104")]);
        assert_eq!(precision_at_k(&ranked, &g[..1], 1).unwrap(), 0.0);

        assert_eq!(precision_at_k(&perfect, &[], 3), Err(MappingError::EmptyGold));
        assert_eq!(precision_at_k(&perfect, &g, 0), Err(MappingError::InvalidK));
    }

    #[test]
    fn gold_file_format() {
        let g = parse_gold(r#"{"1-0": ["1:104", "2:106"], "2-1": ["1:108"]}"#).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].component_refs.len(), 2);
        assert_eq!(parse_gold(&gold_to_json(&g)).unwrap(), g);
        assert_eq!(
            parse_gold(r#"{"1-0": []}"#),
            Err(MappingError::EmptyGoldEntry(FeatureId::new(1, 0)))
        );
        assert!(matches!(parse_gold("{"), Err(MappingError::InvalidGold(_))));
    }

    fn project() -> impl Strategy<Value = (Vec<ClaimFeature>, Vec<ComponentPair>)> {
        let vocab = prop::sample::select(vec![
            "memory", "processor", "bus", "network", "server", "client", "cache", "data",
            "storage", "module", "interface", "unit", "device", "display", "sensor",
        ]);
        let features = prop::collection::vec(prop::collection::vec(vocab.clone(), 1..10), 1..6);
        let comps = prop::collection::vec(prop::collection::vec(vocab, 1..3), 0..15);
        (features, comps).prop_map(|(fs, cs)| {
            let features = fs
                .iter()
                .enumerate()
                .map(|(i, w)| ClaimFeature::new(1, i as u32, &w.join(" ")))
                .collect();
            let comps = cs
                .iter()
                .enumerate()
                .map(|(i, w)| ComponentPair::new(&w.join(" "), &(100 + i).to_string(), 1 + (i as u32 % 3)).unwrap())
                .collect();
            (features, comps)
        })
    }

    proptest! {
        #[test]
        fn suggestions_respect_limits((features, comps) in project(), threshold in 0.0f64..0.6, k in 1usize..7) {
            let config = SuggestConfig { threshold, k };
            let set = suggest_mappings(&features, &comps, config).unwrap();
            for f in &features {
                prop_assert!(set.for_feature(f.id()).count() <= k);
            }
            for e in &set.entries {
                prop_assert!(e.score.unwrap().combined >= threshold);
            }
            prop_assert_eq!(&set, &suggest_mappings(&features, &comps, config).unwrap());

            let raised = suggest_mappings(&features, &comps, SuggestConfig { threshold: threshold + 0.1, k }).unwrap();
            for e in &raised.entries {
                prop_assert!(set.get(e.feature_id, &e.component_ref).is_some());
            }
        }
    }
}
