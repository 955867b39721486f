//! Adaptive demonstration selection: the k nearest corpus neighbors of a
//! query sentence under chrF similarity of the source-language text.
//!
//! Neighbors are found in the source language, not the English reference, so
//! the same selection is possible at test time when no reference exists.

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, CorpusItem};
use crate::metrics::{chrf_from_profiles, ChrfParams, NgramProfile};

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("corpus for {language} has {size} items; need at least 2 to select demonstrations")]
    CorpusTooSmall { language: String, size: usize },
    #[error("no eligible demonstration candidates for query '{query_id}' (require_umr = {require_umr})")]
    NoEligibleCandidates { query_id: String, require_umr: bool },
}

#[derive(Debug, Clone)]
pub struct Demo {
    pub item: CorpusItem,
    pub similarity: f64,
}

/// Demonstrations for one query, most similar first. The query itself is
/// never a candidate; ties break toward the earlier corpus position.
#[derive(Debug, Clone)]
pub struct DemoSet {
    pub query_id: String,
    pub demos: Vec<Demo>,
}

impl DemoSet {
    pub fn demo_ids(&self) -> Vec<String> {
        self.demos.iter().map(|d| d.item.id.clone()).collect()
    }
}

/// Similarity argument order. chrF is asymmetric; the fixed default scores
/// each candidate as hypothesis against the query as reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    pub candidate_as_hypothesis: bool,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams { candidate_as_hypothesis: true }
    }
}

pub fn select_demonstrations(
    query: &CorpusItem,
    corpus: &Corpus,
    k: usize,
    require_umr: bool,
    chrf_params: &ChrfParams,
    params: &SelectionParams,
) -> Result<DemoSet, SelectionError> {
    if corpus.items.len() < 2 {
        return Err(SelectionError::CorpusTooSmall {
            language: corpus.language.code().to_string(),
            size: corpus.items.len(),
        });
    }

    let query_profile = NgramProfile::build(&query.source_text, chrf_params.max_n);

    // (corpus position, similarity) for every eligible candidate.
    let mut ranked: Vec<(usize, f64)> = Vec::new();
    for (position, candidate) in corpus.items.iter().enumerate() {
        if candidate.id == query.id {
            continue;
        }
        if require_umr && candidate.umr.is_none() {
            continue;
        }
        let candidate_profile = NgramProfile::build(&candidate.source_text, chrf_params.max_n);
        let similarity = if params.candidate_as_hypothesis {
            chrf_from_profiles(&candidate_profile, &query_profile, chrf_params.beta)
        } else {
            chrf_from_profiles(&query_profile, &candidate_profile, chrf_params.beta)
        };
        ranked.push((position, similarity));
    }

    if ranked.is_empty() {
        return Err(SelectionError::NoEligibleCandidates {
            query_id: query.id.clone(),
            require_umr,
        });
    }

    ranked.sort_by(|(pos_a, sim_a), (pos_b, sim_b)| {
        sim_b
            .partial_cmp(sim_a)
            .expect("chrF scores are never NaN")
            .then(pos_a.cmp(pos_b))
    });
    ranked.truncate(k);

    Ok(DemoSet {
        query_id: query.id.clone(),
        demos: ranked
            .into_iter()
            .map(|(position, similarity)| Demo {
                item: corpus.items[position].clone(),
                similarity,
            })
            .collect(),
    })
}
