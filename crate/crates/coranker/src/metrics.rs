//! Ranking quality metrics and the order-preference reward.
//!
//! NDCG uses linear gain (`grade / log2(rank + 1)`) and normalizes by the
//! ideal ordering of the query's full judged set, so a run is never rewarded
//! for retrieving a shallow pool. Queries whose judged set has no positive
//! grade are scored 0 and flagged instead of dropped.

use std::collections::BTreeMap;

use crate::backends::{BackendFailure, RerankerBackend};
use crate::core::{apply_ranking, Passage, Qrels, Query, Ranking};

/// Discounted cumulative gain over the first `k` entries of `grades`,
/// which are listed in rank order (index 0 is rank 1).
pub fn dcg_at_k(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| f64::from(g) / ((i + 2) as f64).log2())
        .sum()
}

/// DCG of the best possible ordering of the query's judged documents.
pub fn ideal_dcg_at_k(qrels: &Qrels, query_id: &str, k: usize) -> f64 {
    let mut grades = qrels.judged_grades(query_id);
    grades.sort_unstable_by(|a, b| b.cmp(a));
    dcg_at_k(&grades, k)
}

/// One query's score; `zero_ideal` marks a query with no positive judgment,
/// for which NDCG is reported as 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdcgValue {
    pub value: f64,
    pub zero_ideal: bool,
}

/// NDCG@k of a ranked document-id list for one query.
pub fn ndcg_at_k<'a, I>(qrels: &Qrels, query_id: &str, ranked: I, k: usize) -> NdcgValue
where
    I: IntoIterator<Item = &'a str>,
{
    let ideal = ideal_dcg_at_k(qrels, query_id, k);
    if ideal <= 0.0 {
        return NdcgValue {
            value: 0.0,
            zero_ideal: true,
        };
    }
    let grades: Vec<u32> = ranked
        .into_iter()
        .map(|doc_id| qrels.grade(query_id, doc_id))
        .collect();
    NdcgValue {
        value: dcg_at_k(&grades, k) / ideal,
        zero_ideal: false,
    }
}

/// Per-query scores plus the cutoff they were computed at.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub k: usize,
    pub per_query: BTreeMap<String, NdcgValue>,
}

impl MetricReport {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            per_query: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, query_id: impl Into<String>, value: NdcgValue) {
        self.per_query.insert(query_id.into(), value);
    }

    /// Mean over all scored queries, zero-ideal queries included as 0.
    pub fn mean(&self) -> f64 {
        if self.per_query.is_empty() {
            return 0.0;
        }
        self.per_query.values().map(|v| v.value).sum::<f64>() / self.per_query.len() as f64
    }

    pub fn zero_ideal_queries(&self) -> Vec<&str> {
        self.per_query
            .iter()
            .filter(|(_, v)| v.zero_ideal)
            .map(|(qid, _)| qid.as_str())
            .collect()
    }
}

/// Scores a run given as `(query_id, doc ids in rank order)` groups.
pub fn evaluate_groups<'a, I, D>(qrels: &Qrels, groups: I, k: usize) -> MetricReport
where
    I: IntoIterator<Item = (&'a str, D)>,
    D: IntoIterator<Item = &'a str>,
{
    let mut report = MetricReport::new(k);
    for (query_id, docs) in groups {
        report.insert(query_id, ndcg_at_k(qrels, query_id, docs, k));
    }
    report
}

/// Outcome of scoring one candidate ordering with the large reranker.
#[derive(Debug, Clone)]
pub struct RewardOutcome {
    pub value: f64,
    /// What the large reranker did with the ordering it was shown.
    pub llr_ranking: Ranking,
    pub zero_ideal: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("reward scoring failed for query {query_id}: {source}")]
pub struct RewardError {
    pub query_id: String,
    #[source]
    pub source: BackendFailure,
}

/// How much the large reranker likes `ordering` as an input: feed the
/// ordering to it as a single window and score the resulting output list.
/// A high reward means the large model recovers a good final list from this
/// input order, not that the input order itself scores well.
pub fn reward(
    llr: &dyn RerankerBackend,
    qrels: &Qrels,
    query: &Query,
    ordering: &[Passage],
    k: usize,
) -> Result<RewardOutcome, RewardError> {
    let llr_ranking = llr.rerank(query, ordering).map_err(|source| RewardError {
        query_id: query.id.clone(),
        source,
    })?;
    let reordered = apply_ranking(ordering, &llr_ranking).map_err(|e| RewardError {
        query_id: query.id.clone(),
        source: BackendFailure::InvalidInput(e.to_string()),
    })?;
    let scored = ndcg_at_k(
        qrels,
        &query.id,
        reordered.iter().map(|p| p.id.as_str()),
        k,
    );
    Ok(RewardOutcome {
        value: scored.value,
        llr_ranking,
        zero_ideal: scored.zero_ideal,
    })
}
