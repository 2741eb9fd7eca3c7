//! Domain types shared by every module, plus permutation algebra.
//!
//! Rankings are *local 1-based window indices*, never corpus ids: a backend
//! that sees `n` passages answers with a permutation of `{1..n}`. Corpus ids
//! are resolved only at I/O boundaries. All types here are immutable values
//! and safe to share across threads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A natural-language query with a dataset-unique id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// An identified text unit to be ranked. Text is preserved byte-exact;
/// whitespace normalization happens only when rendering prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// A query plus its ordered candidate passages. The order *is* the current
/// ranking; every pipeline stage consumes and produces one of these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateList {
    pub query: Query,
    pub passages: Vec<Passage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate passage id {id:?} in candidate list for query {query_id:?}")]
pub struct DuplicatePassage {
    pub query_id: String,
    pub id: String,
}

impl CandidateList {
    /// Build a candidate list, rejecting duplicate passage ids.
    pub fn new(query: Query, passages: Vec<Passage>) -> Result<Self, DuplicatePassage> {
        let mut seen = std::collections::HashSet::with_capacity(passages.len());
        for p in &passages {
            if !seen.insert(p.id.as_str()) {
                return Err(DuplicatePassage {
                    query_id: query.id.clone(),
                    id: p.id.clone(),
                });
            }
        }
        Ok(Self { query, passages })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    /// Passage ids in current order.
    pub fn ids(&self) -> Vec<&str> {
        self.passages.iter().map(|p| p.id.as_str()).collect()
    }

    /// A new list reordered by `ranking` (which must cover the whole list).
    pub fn reordered(&self, ranking: &Ranking) -> Result<Self, PermutationError> {
        Ok(Self {
            query: self.query.clone(),
            passages: apply_ranking(&self.passages, ranking)?,
        })
    }
}

/// A permutation of `{1..n}` expressed in 1-based local indices, the
/// universal currency between ranking stages.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    /// Validate `perm` as a permutation of `{1..n}` and wrap it.
    pub fn new(perm: Vec<usize>, n: usize) -> Result<Self, PermutationError> {
        validate_ranking(&perm, n)?;
        Ok(Self(perm))
    }

    /// The identity permutation `[1, 2, .., n]`.
    pub fn identity(n: usize) -> Self {
        Self((1..=n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &v)| v == i + 1)
    }

    /// The inverse permutation: `inverse()[k-1] = position of k` (1-based).
    pub fn inverse(&self) -> Ranking {
        let mut inv = vec![0usize; self.0.len()];
        for (pos, &v) in self.0.iter().enumerate() {
            inv[v - 1] = pos + 1;
        }
        Ranking(inv)
    }

    /// Render as bracketed ids joined by `sep`, e.g. `"[4] [2] [1]"` with
    /// `sep = " "` or `"[4] > [2] > [1]"` with `sep = " > "`.
    pub fn bracketed(&self, sep: &str) -> String {
        self.0
            .iter()
            .map(|v| format!("[{v}]"))
            .collect::<Vec<_>>()
            .join(sep)
    }
}

/// Why a candidate permutation is not a valid ranking.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermutationError {
    #[error("expected permutation of length {expected}, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("duplicate {id}")]
    Duplicate { id: usize },
    #[error("{id} out of range for n={n}")]
    OutOfRange { id: usize, n: usize },
}

/// Check that `perm` is a permutation of `{1..n}`. Returns the first
/// violation found as a diagnosis value; never panics.
pub fn validate_ranking(perm: &[usize], n: usize) -> Result<(), PermutationError> {
    if perm.len() != n {
        return Err(PermutationError::WrongLength {
            expected: n,
            got: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &id in perm {
        if id < 1 || id > n {
            return Err(PermutationError::OutOfRange { id, n });
        }
        if seen[id - 1] {
            return Err(PermutationError::Duplicate { id });
        }
        seen[id - 1] = true;
    }
    Ok(())
}

/// Reorder `items` by a ranking: `output[k] = items[perm[k] - 1]`.
pub fn apply_ranking<T: Clone>(items: &[T], ranking: &Ranking) -> Result<Vec<T>, PermutationError> {
    validate_ranking(ranking.as_slice(), items.len())?;
    Ok(ranking
        .as_slice()
        .iter()
        .map(|&id| items[id - 1].clone())
        .collect())
}

/// Graded human relevance judgments keyed by (query id, passage id).
/// Lookup is total: an unjudged pair has grade 0, never an error.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, passage_id: impl Into<String>, grade: u32) {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(passage_id.into(), grade);
    }

    pub fn from_triples<I, Q, P>(triples: I) -> Self
    where
        I: IntoIterator<Item = (Q, P, u32)>,
        Q: Into<String>,
        P: Into<String>,
    {
        let mut qrels = Self::new();
        for (q, p, g) in triples {
            qrels.insert(q, p, g);
        }
        qrels
    }

    /// Grade of a (query, passage) pair; 0 for unjudged pairs.
    pub fn grade(&self, query_id: &str, passage_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|m| m.get(passage_id))
            .copied()
            .unwrap_or(0)
    }

    /// All judged grades for a query (any order; callers sort as needed).
    pub fn judged_grades(&self, query_id: &str) -> Vec<u32> {
        self.judgments
            .get(query_id)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default()
    }

    /// Whether the query has at least one judged passage with grade > 0.
    pub fn has_relevant(&self, query_id: &str) -> bool {
        self.judgments
            .get(query_id)
            .is_some_and(|m| m.values().any(|&g| g > 0))
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// One line of a TREC-style run: a (query, passage) pair at a rank with a
/// score that decreases strictly with rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub query_id: String,
    pub passage_id: String,
    pub rank: usize,
    pub score: f64,
}

/// Turn a ranked id list into run entries with synthetic strictly-decreasing
/// scores (`K - rank + 1`), so serialized output is deterministic.
pub fn run_entries_for(query_id: &str, ranked_ids: &[impl AsRef<str>]) -> Vec<RunEntry> {
    let k = ranked_ids.len();
    ranked_ids
        .iter()
        .enumerate()
        .map(|(i, pid)| RunEntry {
            query_id: query_id.to_string(),
            passage_id: pid.as_ref().to_string(),
            rank: i + 1,
            score: (k - i) as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passages(ids: &[&str]) -> Vec<Passage> {
        ids.iter().map(|id| Passage::new(*id, format!("text {id}"))).collect()
    }

    #[test]
    fn apply_ranking_reorders() {
        let items = passages(&["A", "B", "C"]);
        let r = Ranking::new(vec![3, 1, 2], 3).unwrap();
        let out = apply_ranking(&items, &r).unwrap();
        let ids: Vec<_> = out.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, vec!["C", "A", "B"]);
    }

    #[test]
    fn apply_ranking_identity() {
        let items = passages(&["A", "B"]);
        let out = apply_ranking(&items, &Ranking::identity(2)).unwrap();
        let ids: Vec<_> = out.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, vec!["A", "B"]);
    }

    #[test]
    fn apply_ranking_four() {
        // enumerated by hand: [4,2,1,3] over [A,B,C,D] -> [D,B,A,C]
        let items = passages(&["A", "B", "C", "D"]);
        let r = Ranking::new(vec![4, 2, 1, 3], 4).unwrap();
        let out = apply_ranking(&items, &r).unwrap();
        let ids: Vec<_> = out.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, vec!["D", "B", "A", "C"]);
    }

    #[test]
    fn apply_ranking_length_mismatch() {
        let items = passages(&["A", "B", "C"]);
        let r = Ranking::new(vec![1, 2], 2).unwrap();
        assert_eq!(
            apply_ranking(&items, &r),
            Err(PermutationError::WrongLength { expected: 3, got: 2 })
        );
    }

    #[test]
    fn validate_ranking_cases() {
        assert_eq!(validate_ranking(&[1, 2, 3], 3), Ok(()));
        assert_eq!(
            validate_ranking(&[1, 1, 3], 3),
            Err(PermutationError::Duplicate { id: 1 })
        );
        assert_eq!(
            validate_ranking(&[1, 2, 4], 3),
            Err(PermutationError::OutOfRange { id: 4, n: 3 })
        );
        assert_eq!(validate_ranking(&[], 0), Ok(()));
        assert_eq!(
            validate_ranking(&[0, 1], 2),
            Err(PermutationError::OutOfRange { id: 0, n: 2 })
        );
    }

    #[test]
    fn ranking_inverse_roundtrip() {
        let r = Ranking::new(vec![4, 2, 1, 3], 4).unwrap();
        let inv = r.inverse();
        let items = passages(&["A", "B", "C", "D"]);
        let forward = apply_ranking(&items, &r).unwrap();
        let back = apply_ranking(&forward, &inv).unwrap();
        assert_eq!(back, items);
    }

    #[test]
    fn ranking_bracketed_formats() {
        let r = Ranking::new(vec![4, 2, 1, 3], 4).unwrap();
        assert_eq!(r.bracketed(" "), "[4] [2] [1] [3]");
        assert_eq!(r.bracketed(" > "), "[4] > [2] > [1] > [3]");
    }

    #[test]
    fn candidate_list_rejects_duplicates() {
        let q = Query::new("q1", "what");
        let err = CandidateList::new(q, passages(&["A", "B", "A"])).unwrap_err();
        assert_eq!(err.id, "A");
    }

    #[test]
    fn qrels_lookup_is_total() {
        let mut qrels = Qrels::new();
        qrels.insert("q1", "d1", 2);
        assert_eq!(qrels.grade("q1", "d1"), 2);
        assert_eq!(qrels.grade("q1", "unjudged"), 0);
        assert_eq!(qrels.grade("missing-query", "d1"), 0);
        assert!(qrels.has_relevant("q1"));
        assert!(!qrels.has_relevant("missing-query"));
    }

    #[test]
    fn run_entries_scores_strictly_decrease() {
        let entries = run_entries_for("q1", &["a", "b", "c"]);
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].rank, 1);
        assert!(entries.windows(2).all(|w| w[0].score > w[1].score));
        assert_eq!(entries[2].score, 1.0);
    }
}
