//! Sentence-level translation metrics.
//!
//! `chrf` is the built-in metric: character n-gram F-score with
//! recall-weighted harmonic mean. `stats` holds aggregation and the paired
//! two-tailed t-test; `scorer` hosts external metrics behind a plug-in seam.

pub mod scorer;
pub mod stats;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty score vector")]
    EmptyVector,
    #[error("score vectors have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("paired test needs at least 2 pairs, got {n}")]
    TooFewPairs { n: usize },
    #[error("score vectors are aligned to different item ids")]
    MisalignedIds,
    #[error("invalid chrF parameters: {0}")]
    InvalidParams(String),
}

/// chrF configuration. Defaults follow the metric's standard settings:
/// n-gram order 6, recall weight beta = 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChrfParams {
    pub max_n: usize,
    pub beta: f64,
}

impl Default for ChrfParams {
    fn default() -> Self {
        ChrfParams { max_n: 6, beta: 2.0 }
    }
}

impl ChrfParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.max_n < 1 {
            return Err(MetricsError::InvalidParams("max_n must be >= 1".into()));
        }
        if !(self.beta > 0.0) {
            return Err(MetricsError::InvalidParams("beta must be > 0".into()));
        }
        Ok(())
    }
}

/// Character n-gram counts for one normalized text, orders 1..=max_n.
/// Built once per text so the neighbor scan does not re-tokenize the query.
#[derive(Debug, Clone)]
pub struct NgramProfile {
    counts: Vec<HashMap<Vec<char>, u32>>,
    totals: Vec<u32>,
}

/// Collapses whitespace runs to a single space and strips the ends.
fn normalize(text: &str) -> Vec<char> {
    let mut out = Vec::new();
    let mut pending_space = false;
    for c in text.trim().chars() {
        if c.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    out
}

impl NgramProfile {
    pub fn build(text: &str, max_n: usize) -> Self {
        let chars = normalize(text);
        let mut counts = Vec::with_capacity(max_n);
        let mut totals = Vec::with_capacity(max_n);
        for n in 1..=max_n {
            let mut map: HashMap<Vec<char>, u32> = HashMap::new();
            if chars.len() >= n {
                for window in chars.windows(n) {
                    *map.entry(window.to_vec()).or_insert(0) += 1;
                }
            }
            totals.push(map.values().sum());
            counts.push(map);
        }
        NgramProfile { counts, totals }
    }
}

/// chrF between two prebuilt profiles: arithmetic-mean precision and recall
/// over n-gram orders, skipping orders where the reference has no n-grams,
/// combined as (1+b^2)PR / (b^2 P + R) and scaled to [0, 100].
pub fn chrf_from_profiles(hypothesis: &NgramProfile, reference: &NgramProfile, beta: f64) -> f64 {
    let orders = hypothesis.counts.len().min(reference.counts.len());
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut counted = 0usize;
    for n in 0..orders {
        let total_ref = reference.totals[n];
        if total_ref == 0 {
            continue;
        }
        let total_hyp = hypothesis.totals[n];
        let mut matched: u32 = 0;
        // Iterate the smaller map.
        let (small, large) = if hypothesis.counts[n].len() <= reference.counts[n].len() {
            (&hypothesis.counts[n], &reference.counts[n])
        } else {
            (&reference.counts[n], &hypothesis.counts[n])
        };
        for (gram, &count) in small {
            if let Some(&other) = large.get(gram) {
                matched += count.min(other);
            }
        }
        if total_hyp > 0 {
            precision_sum += f64::from(matched) / f64::from(total_hyp);
        }
        recall_sum += f64::from(matched) / f64::from(total_ref);
        counted += 1;
    }
    if counted == 0 {
        return 0.0;
    }
    let precision = precision_sum / counted as f64;
    let recall = recall_sum / counted as f64;
    let beta2 = beta * beta;
    let denominator = beta2 * precision + recall;
    if denominator == 0.0 {
        return 0.0;
    }
    (1.0 + beta2) * precision * recall / denominator * 100.0
}

/// Sentence-level chrF in [0, 100].
pub fn chrf(hypothesis: &str, reference: &str, params: &ChrfParams) -> f64 {
    let hyp = NgramProfile::build(hypothesis, params.max_n);
    let reference = NgramProfile::build(reference, params.max_n);
    chrf_from_profiles(&hyp, &reference, params.beta)
}

/// Per-item scores aligned to item ids; paired operations require both
/// vectors to carry the same ids in the same order.
#[derive(Debug, Clone, Default)]
pub struct ScoreVector {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn push(&mut self, id: impl Into<String>, value: f64) {
        self.ids.push(id.into());
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent naive chrF, transcribed from the scoring definition and
    /// kept free of `NgramProfile`. The frozen constants below were produced
    /// by a third implementation before this module was written.
    fn oracle_chrf(hyp: &str, reference: &str, max_n: usize, beta: f64) -> f64 {
        fn norm(s: &str) -> Vec<char> {
            s.split_whitespace().collect::<Vec<_>>().join(" ").chars().collect()
        }
        fn grams(chars: &[char], n: usize) -> HashMap<String, u32> {
            let mut m = HashMap::new();
            if chars.len() >= n {
                for i in 0..=chars.len() - n {
                    *m.entry(chars[i..i + n].iter().collect::<String>()).or_insert(0) += 1;
                }
            }
            m
        }
        let h = norm(hyp);
        let r = norm(reference);
        let mut p_sum = 0.0;
        let mut r_sum = 0.0;
        let mut orders = 0usize;
        for n in 1..=max_n {
            let rg = grams(&r, n);
            let total_ref: u32 = rg.values().sum();
            if total_ref == 0 {
                continue;
            }
            let hg = grams(&h, n);
            let total_hyp: u32 = hg.values().sum();
            let matched: u32 = hg
                .iter()
                .map(|(g, &c)| c.min(rg.get(g).copied().unwrap_or(0)))
                .sum();
            if total_hyp > 0 {
                p_sum += f64::from(matched) / f64::from(total_hyp);
            }
            r_sum += f64::from(matched) / f64::from(total_ref);
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        let (p, rc) = (p_sum / orders as f64, r_sum / orders as f64);
        let b2 = beta * beta;
        let denom = b2 * p + rc;
        if denom == 0.0 {
            0.0
        } else {
            (1.0 + b2) * p * rc / denom * 100.0
        }
    }

    /// 20 fixed pairs with expected scores frozen from an independent
    /// implementation of the same definition (max_n = 6, beta = 2).
    const FIXTURE_PAIRS: &[(&str, &str, f64)] = &[
        ("they were buying a new car", "they were buying a new car", 100.0),
        ("", "abc", 0.0),
        ("abc", "", 0.0),
        ("He plays with his younger brother at the river.", "He run in the forest", 23.110511),
        ("The person is working there today.", "He run in the forest", 24.120831),
        ("He has already started walking in the forest.", "He run in the forest", 56.317791),
        ("He has already started running in the forest.", "He run in the forest", 61.276295),
        (
            "I walked to the store and said hello to the shopkeeper.",
            "Wohei another story, I'm going to tell you another story.",
            22.114838,
        ),
        (
            "I will tell you a story.",
            "Wohei another story, I'm going to tell you another story.",
            27.916767,
        ),
        (
            "Wohei, then go ask him, the storyteller.",
            "Wohei another story, I'm going to tell you another story.",
            26.002154,
        ),
        (
            "Wohei I will tell you a story about a little.",
            "Wohei another story, I'm going to tell you another story.",
            34.050027,
        ),
        ("a", "a", 100.0),
        ("a", "b", 0.0),
        ("ab", "abc", 42.424242),
        ("abc", "ab", 87.5),
        ("  they   were buying\ta new car ", "they were buying a new car", 100.0),
        ("cat", "the cat sat on the mat", 5.732187),
        ("the cat sat on the mat", "cat", 34.121905),
        (
            "wohei noh ci'ceese' hoo3itoo, heetnoo3itoone3en",
            "wohei noh ci'ceese' hoo3itoo, heetnoo3itoone3en",
            100.0,
        ),
        ("Shił yá'át'ééh", "Shimá yá'át'ééh", 67.294576),
    ];

    #[test]
    fn matches_frozen_oracle_fixtures() {
        let params = ChrfParams::default();
        for (hyp, reference, expected) in FIXTURE_PAIRS {
            let got = chrf(hyp, reference, &params);
            assert!(
                (got - expected).abs() < 0.01,
                "chrf({hyp:?}, {reference:?}) = {got}, expected {expected}"
            );
            let via_oracle = oracle_chrf(hyp, reference, params.max_n, params.beta);
            assert!(
                (got - via_oracle).abs() < 1e-9,
                "implementation {got} disagrees with in-test oracle {via_oracle}"
            );
        }
    }

    #[test]
    fn identity_scores_exactly_100() {
        let params = ChrfParams::default();
        assert_eq!(chrf("they were buying a new car", "they were buying a new car", &params), 100.0);
        assert_eq!(chrf("a", "a", &params), 100.0);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let params = ChrfParams::default();
        assert_eq!(chrf("", "abc", &params), 0.0);
        assert_eq!(chrf("   ", "abc", &params), 0.0);
    }

    #[test]
    fn whitespace_runs_collapse() {
        let params = ChrfParams::default();
        assert_eq!(
            chrf("a  b", "a b", &params),
            100.0,
            "runs of whitespace must collapse to one space"
        );
        assert_eq!(chrf("\ta \n b ", "a b", &params), 100.0);
    }

    #[test]
    fn short_reference_skips_missing_orders() {
        // Reference "ab" has no 3..6-grams; only orders 1 and 2 count.
        let params = ChrfParams::default();
        let got = chrf("abc", "ab", &params);
        assert!((got - 87.5).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn params_validation() {
        assert!(ChrfParams { max_n: 0, beta: 2.0 }.validate().is_err());
        assert!(ChrfParams { max_n: 6, beta: 0.0 }.validate().is_err());
        assert!(ChrfParams { max_n: 6, beta: -1.0 }.validate().is_err());
        assert!(ChrfParams::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn score_bounded(hyp in ".{0,40}", reference in ".{0,40}") {
            let got = chrf(&hyp, &reference, &ChrfParams::default());
            prop_assert!((0.0..=100.0).contains(&got));
        }

        #[test]
        fn identity_is_perfect(text in "[a-z ]{1,40}") {
            prop_assume!(!text.trim().is_empty());
            let got = chrf(&text, &text, &ChrfParams::default());
            prop_assert!((got - 100.0).abs() < 1e-9);
        }

        #[test]
        fn matches_oracle_on_random_pairs(hyp in "[a-dA-D '3áł]{0,30}", reference in "[a-dA-D '3áł]{0,30}") {
            let params = ChrfParams::default();
            let got = chrf(&hyp, &reference, &params);
            let expected = oracle_chrf(&hyp, &reference, params.max_n, params.beta);
            prop_assert!((got - expected).abs() < 1e-9);
        }

        #[test]
        fn growing_prefix_never_decreases_from_empty(reference in "[a-z]{1,20}", take in 0usize..20) {
            // Hypotheses that are prefixes of the reference improve (weakly)
            // as they grow from empty.
            let params = ChrfParams::default();
            let chars: Vec<char> = reference.chars().collect();
            let shorter: String = chars.iter().take(take.min(chars.len())).collect();
            let longer: String = chars.iter().take((take + 1).min(chars.len())).collect();
            let a = chrf(&shorter, &reference, &params);
            let b = chrf(&longer, &reference, &params);
            prop_assert!(b >= a - 1e-9, "prefix growth decreased chrF: {a} -> {b}");
        }
    }
}
