//! Training-data factories.
//!
//! Two exports: gold rankings distilled by iterating a teacher until the
//! metric saturates (for supervised fine-tuning), and preference pairs
//! filtered by the three sampling rules (for DPO), plus a numerically
//! stable reference implementation of the DPO loss for verifying exported
//! pairs.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendFailure, RerankerBackend};
use crate::core::{apply_ranking, CandidateList, Passage, Qrels, Query, Ranking};
use crate::defaults;
use crate::metrics::{self, ndcg_at_k};
use crate::prompting::normalize_text;
use crate::seeding;
use crate::windowing::{run_pass, PassOptions};

/// A winner reward counts as "exactly 1" within this tolerance; remote
/// backends go through enough float arithmetic to need one.
pub const REWARD_ONE_TOL: f64 = 1e-9;

/// Gold targets must reproduce a perfect score essentially exactly.
const PERFECT_TOL: f64 = 1e-12;

/// The flattened training input: query text, then each passage prefixed by
/// its 1-based bracketed id, all single-spaced.
pub fn render_training_input(
    query: &Query,
    passages: &[Passage],
    word_budget: Option<usize>,
) -> String {
    let mut out = normalize_text(&query.text, None);
    for (i, p) in passages.iter().enumerate() {
        out.push_str(&format!(" [{}] {}", i + 1, normalize_text(&p.text, word_budget)));
    }
    out
}

/// One accepted supervised example. `target` lists bracketed ids in gold
/// order, indices referring to the passages as they appear in `input`.
#[derive(Debug, Clone, PartialEq)]
pub struct SftExample {
    pub query_id: String,
    pub input: String,
    pub target: String,
    pub ndcg_of_target: f64,
    pub iterations_used: usize,
}

#[derive(Debug, Clone)]
pub enum HrcRejectReason {
    NoRelevantJudgments,
    /// The teacher never produced a perfect ordering within the budget.
    NeverPerfect { best: f64 },
    Backend {
        iteration: usize,
        source: BackendFailure,
    },
}

#[derive(Debug, Clone)]
pub struct HrcRejection {
    pub query_id: String,
    pub reason: HrcRejectReason,
    /// Metric after each completed iteration.
    pub ndcg_trace: Vec<f64>,
}

#[derive(Debug)]
pub enum HrcOutcome {
    Accepted(SftExample),
    Rejected(HrcRejection),
}

#[derive(Debug, Clone)]
pub struct HrcConfig {
    pub max_iterations: usize,
    pub metric_k: usize,
    pub word_budget: Option<usize>,
}

impl Default for HrcConfig {
    fn default() -> Self {
        Self {
            max_iterations: defaults::HRC_MAX_ITERATIONS,
            metric_k: defaults::METRIC_K,
            word_budget: Some(defaults::TRUNCATE_WORDS),
        }
    }
}

/// Iteratively rerank the candidates with the teacher, up to
/// `max_iterations` times, each round feeding the previous round's output
/// back in. Emit the first round whose ordering scores a perfect metric;
/// the target is expressed in the *original* candidate indices so it pairs
/// with the rendered input.
pub fn hrc_build(
    candidates: &CandidateList,
    teacher: &dyn RerankerBackend,
    qrels: &Qrels,
    config: &HrcConfig,
) -> HrcOutcome {
    let query = &candidates.query;
    let mut ndcg_trace = Vec::new();
    if !qrels.has_relevant(&query.id) {
        return HrcOutcome::Rejected(HrcRejection {
            query_id: query.id.clone(),
            reason: HrcRejectReason::NoRelevantJudgments,
            ndcg_trace,
        });
    }
    let mut current = candidates.passages.clone();
    // current position -> 1-based index into the original candidate order
    let mut original_index: Vec<usize> = (1..=current.len()).collect();

    for iteration in 1..=config.max_iterations {
        let ranking = match teacher.rerank(query, &current) {
            Ok(r) => r,
            Err(source) => {
                return HrcOutcome::Rejected(HrcRejection {
                    query_id: query.id.clone(),
                    reason: HrcRejectReason::Backend { iteration, source },
                    ndcg_trace,
                })
            }
        };
        current = apply_ranking(&current, &ranking).expect("backend contract: full-window ranking");
        original_index = ranking
            .as_slice()
            .iter()
            .map(|&r| original_index[r - 1])
            .collect();
        let scored = ndcg_at_k(
            qrels,
            &query.id,
            current.iter().map(|p| p.id.as_str()),
            config.metric_k,
        );
        ndcg_trace.push(scored.value);
        if (scored.value - 1.0).abs() <= PERFECT_TOL {
            let target = Ranking::new(original_index, candidates.len())
                .expect("composition of permutations");
            return HrcOutcome::Accepted(SftExample {
                query_id: query.id.clone(),
                input: render_training_input(query, &candidates.passages, config.word_budget),
                target: target.bracketed(" "),
                ndcg_of_target: scored.value,
                iterations_used: iteration,
            });
        }
    }
    let best = ndcg_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    HrcOutcome::Rejected(HrcRejection {
        query_id: query.id.clone(),
        reason: HrcRejectReason::NeverPerfect { best },
        ndcg_trace,
    })
}

/// One kept preference pair over a shared input.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub query_id: String,
    pub input: String,
    pub winner: String,
    pub loser: String,
    pub reward_w: f64,
    pub reward_l: f64,
    pub baseline_reward: f64,
}

/// Which samples survive the three filter rules: the winner must score a
/// perfect reward, must beat the direct large-model baseline, and each kept
/// loser must trail the winner by more than `margin`.
#[derive(Debug, Clone, PartialEq)]
pub struct S3Selection {
    pub winner: Option<usize>,
    pub losers: Vec<usize>,
}

pub fn select_pairs(rewards: &[f64], baseline: f64, margin: f64) -> S3Selection {
    let mut winner = None;
    for (i, &r) in rewards.iter().enumerate() {
        // strict > keeps the first sample on ties
        if winner.is_none_or(|w: usize| r > rewards[w]) {
            winner = Some(i);
        }
    }
    let Some(w) = winner else {
        return S3Selection {
            winner: None,
            losers: Vec::new(),
        };
    };
    let reward_w = rewards[w];
    if reward_w < 1.0 - REWARD_ONE_TOL || reward_w <= baseline {
        return S3Selection {
            winner: Some(w),
            losers: Vec::new(),
        };
    }
    let losers = rewards
        .iter()
        .enumerate()
        .filter(|&(i, &r)| i != w && reward_w - r > margin)
        .map(|(i, _)| i)
        .collect();
    S3Selection { winner: Some(w), losers }
}

#[derive(Debug, Clone)]
pub struct S3Config {
    /// Sample count m per query.
    pub samples: usize,
    /// Minimum winner-loser reward gap μ.
    pub margin: f64,
    pub seed: u64,
    pub window: usize,
    pub step: usize,
    pub top_k: usize,
    pub metric_k: usize,
    pub word_budget: Option<usize>,
}

impl Default for S3Config {
    fn default() -> Self {
        Self {
            samples: defaults::S3_SAMPLES,
            margin: defaults::S3_MARGIN,
            seed: defaults::SEED,
            window: defaults::WINDOW,
            step: defaults::STEP,
            top_k: defaults::TOP_K,
            metric_k: defaults::METRIC_K,
            word_budget: Some(defaults::TRUNCATE_WORDS),
        }
    }
}

#[derive(Debug)]
pub enum S3SkipReason {
    NoRelevantJudgments,
    Backend(BackendFailure),
}

#[derive(Debug)]
pub struct S3Skip {
    pub query_id: String,
    pub reason: S3SkipReason,
}

/// Everything observed while building pairs for one query; useful for
/// diagnostics even when no pair survives.
#[derive(Debug)]
pub struct S3QueryOutput {
    pub query_id: String,
    /// Candidate passages after the small-model pass, in candidate order.
    pub candidate_ids: Vec<String>,
    pub sample_rewards: Vec<f64>,
    pub baseline_reward: f64,
    pub winner: Option<usize>,
    pub pairs: Vec<PreferencePair>,
}

/// Reward values cached by (query id, ordering fingerprint), shared across
/// threads; reruns against remote scorers then cost nothing.
#[derive(Debug, Default)]
pub struct RewardCache {
    map: Mutex<HashMap<(String, u64), f64>>,
}

impl RewardCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reward of `ordering` under `llr`, served from cache when the same
    /// ordering was scored before for this query.
    pub fn reward(
        &self,
        llr: &dyn RerankerBackend,
        qrels: &Qrels,
        query: &Query,
        ordering: &[Passage],
        k: usize,
    ) -> Result<f64, BackendFailure> {
        let ids: Vec<&str> = ordering.iter().map(|p| p.id.as_str()).collect();
        let key = (query.id.clone(), seeding::mix(k as u64, seeding::fingerprint(&ids)));
        if let Some(&value) = self.map.lock().unwrap().get(&key) {
            return Ok(value);
        }
        let outcome = metrics::reward(llr, qrels, query, ordering, k).map_err(|e| e.source)?;
        self.map.lock().unwrap().insert(key, outcome.value);
        Ok(outcome.value)
    }
}

/// Build preference pairs for one query: small-model pass over the
/// candidates, keep the top `top_k`, sample `samples` predictions from the
/// small model over that condensed list, score each by what the large model
/// makes of it, then filter with [`select_pairs`]. The baseline is the
/// large model's own reward on the unpermuted condensed list.
pub fn s3_build(
    candidates: &CandidateList,
    slr: &dyn RerankerBackend,
    llr: &dyn RerankerBackend,
    qrels: &Qrels,
    config: &S3Config,
    cache: &RewardCache,
) -> Result<S3QueryOutput, S3Skip> {
    let query = &candidates.query;
    let skip = |reason: S3SkipReason| S3Skip {
        query_id: query.id.clone(),
        reason,
    };
    if !qrels.has_relevant(&query.id) {
        return Err(skip(S3SkipReason::NoRelevantJudgments));
    }

    let options = PassOptions {
        window: config.window,
        step: config.step,
        lenient: false,
    };
    let pass = run_pass(slr, query, &candidates.passages, &options)
        .map_err(|e| skip(S3SkipReason::Backend(BackendFailure::InvalidInput(e.to_string()))))?;
    if let Some(failure) = pass.failure {
        return Err(skip(S3SkipReason::Backend(failure)));
    }
    let top: Vec<Passage> = pass
        .list
        .into_iter()
        .take(config.top_k.min(candidates.len()))
        .collect();

    let sample_seed = seeding::mix(config.seed, seeding::fnv1a64(query.id.as_bytes()));
    let samples = slr
        .sample_rankings(query, &top, config.samples, sample_seed)
        .map_err(|e| skip(S3SkipReason::Backend(e.cause)))?;

    let mut sample_rewards = Vec::with_capacity(samples.len());
    let mut orderings = Vec::with_capacity(samples.len());
    for ranking in &samples {
        let ordering = apply_ranking(&top, ranking)
            .map_err(|e| skip(S3SkipReason::Backend(BackendFailure::InvalidInput(e.to_string()))))?;
        let value = cache
            .reward(llr, qrels, query, &ordering, config.metric_k)
            .map_err(|e| skip(S3SkipReason::Backend(e)))?;
        sample_rewards.push(value);
        orderings.push(ordering);
    }
    let baseline_reward = cache
        .reward(llr, qrels, query, &top, config.metric_k)
        .map_err(|e| skip(S3SkipReason::Backend(e)))?;

    let selection = select_pairs(&sample_rewards, baseline_reward, config.margin);
    let pairs = match selection.winner {
        Some(w) if !selection.losers.is_empty() => {
            let input = render_training_input(query, &top, config.word_budget);
            selection
                .losers
                .iter()
                .map(|&l| PreferencePair {
                    query_id: query.id.clone(),
                    input: input.clone(),
                    winner: samples[w].bracketed(" "),
                    loser: samples[l].bracketed(" "),
                    reward_w: sample_rewards[w],
                    reward_l: sample_rewards[l],
                    baseline_reward,
                })
                .collect()
        }
        _ => Vec::new(),
    };

    Ok(S3QueryOutput {
        query_id: query.id.clone(),
        candidate_ids: top.iter().map(|p| p.id.clone()).collect(),
        sample_rewards,
        baseline_reward,
        winner: selection.winner,
        pairs,
    })
}

/// Reference DPO loss: `-log sigmoid(beta * margin)` where the margin is
/// the policy-vs-reference log-probability gap between winner and loser.
/// Computed in softplus form so huge margins stay finite.
pub fn dpo_loss(
    logp_policy_w: f64,
    logp_policy_l: f64,
    logp_ref_w: f64,
    logp_ref_l: f64,
    beta: f64,
) -> f64 {
    let margin = beta * ((logp_policy_w - logp_ref_w) - (logp_policy_l - logp_ref_l));
    // softplus(-margin) = max(-margin, 0) + ln(1 + exp(-|margin|))
    (-margin).max(0.0) + (-margin.abs()).exp().ln_1p()
}

/// First line of every exported dataset: how it was generated.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProvenanceHeader {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub metric_k: usize,
    pub backends: BTreeMap<String, String>,
}

impl ProvenanceHeader {
    pub fn sft(config: &HrcConfig, seed: u64, teacher: &dyn RerankerBackend) -> Self {
        Self {
            kind: "sft".to_string(),
            mu: None,
            m: None,
            max_iterations: Some(config.max_iterations),
            seed,
            metric_k: config.metric_k,
            backends: BTreeMap::from([("teacher".to_string(), teacher.info().name)]),
        }
    }

    pub fn dpo(config: &S3Config, slr: &dyn RerankerBackend, llr: &dyn RerankerBackend) -> Self {
        Self {
            kind: "dpo".to_string(),
            mu: Some(config.margin),
            m: Some(config.samples),
            max_iterations: None,
            seed: config.seed,
            metric_k: config.metric_k,
            backends: BTreeMap::from([
                ("slr".to_string(), slr.info().name),
                ("llr".to_string(), llr.info().name),
            ]),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SftRecord {
    pub qid: String,
    pub input: String,
    pub target: String,
    pub iterations_used: usize,
}

impl From<&SftExample> for SftRecord {
    fn from(example: &SftExample) -> Self {
        Self {
            qid: example.query_id.clone(),
            input: example.input.clone(),
            target: example.target.clone(),
            iterations_used: example.iterations_used,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DpoRecord {
    pub qid: String,
    pub input: String,
    pub chosen: String,
    pub rejected: String,
    pub reward_chosen: f64,
    pub reward_rejected: f64,
    pub baseline: f64,
}

impl From<&PreferencePair> for DpoRecord {
    fn from(pair: &PreferencePair) -> Self {
        Self {
            qid: pair.query_id.clone(),
            input: pair.input.clone(),
            chosen: pair.winner.clone(),
            rejected: pair.loser.clone(),
            reward_chosen: pair.reward_w,
            reward_rejected: pair.reward_l,
            baseline: pair.baseline_reward,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetWriteError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("refusing to write invalid record: {0}")]
    InvariantViolated(String),
}

/// Write header plus one record per example, re-checking that every target
/// still scores perfectly.
pub fn write_sft_dataset<W: Write>(
    mut w: W,
    header: &ProvenanceHeader,
    examples: &[SftExample],
) -> Result<(), DatasetWriteError> {
    writeln!(w, "{}", serde_json::to_string(header).expect("header serializes"))?;
    for example in examples {
        if (example.ndcg_of_target - 1.0).abs() > PERFECT_TOL {
            return Err(DatasetWriteError::InvariantViolated(format!(
                "query {}: target scores {} instead of 1",
                example.query_id, example.ndcg_of_target
            )));
        }
        let record = SftRecord::from(example);
        writeln!(w, "{}", serde_json::to_string(&record).expect("record serializes"))?;
    }
    Ok(())
}

/// Write header plus one record per pair, re-checking the three filter
/// rules against the header's margin.
pub fn write_dpo_dataset<W: Write>(
    mut w: W,
    header: &ProvenanceHeader,
    pairs: &[PreferencePair],
) -> Result<(), DatasetWriteError> {
    writeln!(w, "{}", serde_json::to_string(header).expect("header serializes"))?;
    let margin = header.mu.unwrap_or(defaults::S3_MARGIN);
    for pair in pairs {
        let violated = if pair.reward_w < 1.0 - REWARD_ONE_TOL {
            Some(format!("winner reward {} is not 1", pair.reward_w))
        } else if pair.reward_w <= pair.baseline_reward {
            Some(format!(
                "winner reward {} does not beat baseline {}",
                pair.reward_w, pair.baseline_reward
            ))
        } else if pair.reward_w - pair.reward_l <= margin {
            Some(format!(
                "gap {} does not exceed margin {margin}",
                pair.reward_w - pair.reward_l
            ))
        } else {
            None
        };
        if let Some(why) = violated {
            return Err(DatasetWriteError::InvariantViolated(format!(
                "query {}: {why}",
                pair.query_id
            )));
        }
        let record = DpoRecord::from(pair);
        writeln!(w, "{}", serde_json::to_string(&record).expect("record serializes"))?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("dataset is empty (missing header line)")]
    MissingHeader,
}

/// Read back a dataset written by the writers above: header first, then
/// records.
pub fn read_dataset<R: BufRead, T: DeserializeOwned>(
    reader: R,
) -> Result<(ProvenanceHeader, Vec<T>), DatasetReadError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        let Some((idx, line)) = lines.next() else {
            return Err(DatasetReadError::MissingHeader);
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        break serde_json::from_str(&line)
            .map_err(|source| DatasetReadError::Parse { line: idx + 1, source })?;
    };
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|source| DatasetReadError::Parse { line: idx + 1, source })?,
        );
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{IdentityBackend, OracleBackend, ScriptedBackend};
    use std::sync::Arc;

    const TOL: f64 = 1e-12;

    fn candidates(qid: &str, ids: &[&str]) -> CandidateList {
        CandidateList::new(
            Query::new(qid, format!("{qid} text")),
            ids.iter().map(|id| Passage::new(*id, format!("{id} body"))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn training_input_interleaves_ids_and_passages() {
        let list = candidates("q1", &["a", "b"]);
        let input = render_training_input(&list.query, &list.passages, None);
        assert_eq!(input, "q1 text [1] a body [2] b body");
    }

    #[test]
    fn training_input_respects_word_budget() {
        let query = Query::new("q1", "q");
        let passages = vec![Passage::new("a", "one two three four five")];
        let input = render_training_input(&query, &passages, Some(3));
        assert_eq!(input, "q [1] one two three");
    }

    #[test]
    fn oracle_teacher_is_accepted_on_the_first_iteration() {
        // original order [d, c, b, a] with grades 0..3
        let qrels = Qrels::from_triples([("q1", "a", 3u32), ("q1", "b", 2), ("q1", "c", 1)]);
        let list = candidates("q1", &["d", "c", "b", "a"]);
        let teacher = OracleBackend::new(Arc::new(qrels.clone()));
        match hrc_build(&list, &teacher, &qrels, &HrcConfig::default()) {
            HrcOutcome::Accepted(example) => {
                assert_eq!(example.iterations_used, 1);
                assert_eq!(example.target, "[4] [3] [2] [1]");
                assert_eq!(example.ndcg_of_target, 1.0);
                assert!(example.input.starts_with("q1 text [1] d body"));
            }
            other => panic!("expected acceptance, got {other:?}"),
        }
    }

    #[test]
    fn multi_iteration_target_composes_back_to_original_indices() {
        let qrels = Qrels::from_triples([("q1", "a", 3u32), ("q1", "b", 2), ("q1", "c", 1)]);
        let list = candidates("q1", &["d", "c", "b", "a"]);
        // first round imperfect, second round fixes it
        let teacher = ScriptedBackend::from_steps([
            ("q1", vec![2, 3, 4, 1]),
            ("q1", vec![3, 2, 1, 4]),
        ]);
        match hrc_build(&list, &teacher, &qrels, &HrcConfig::default()) {
            HrcOutcome::Accepted(example) => {
                assert_eq!(example.iterations_used, 2);
                assert_eq!(example.target, "[4] [3] [2] [1]");
                // re-apply the target to the original list and re-score
                let perm: Vec<usize> = vec![4, 3, 2, 1];
                let ranking = Ranking::new(perm, 4).unwrap();
                let reordered = apply_ranking(&list.passages, &ranking).unwrap();
                let v = ndcg_at_k(&qrels, "q1", reordered.iter().map(|p| p.id.as_str()), 10);
                assert!((v.value - 1.0).abs() <= TOL);
            }
            other => panic!("expected acceptance, got {other:?}"),
        }
    }

    #[test]
    fn imperfect_teacher_is_rejected_after_the_budget() {
        let qrels = Qrels::from_triples([("q1", "a", 3u32)]);
        let list = candidates("q1", &["b", "a", "c"]);
        // teacher only ever swaps the last two, never promoting a
        let teacher =
            ScriptedBackend::from_steps((0..5).map(|_| ("q1", vec![1usize, 3, 2])));
        match hrc_build(&list, &teacher, &qrels, &HrcConfig::default()) {
            HrcOutcome::Rejected(rejection) => {
                assert_eq!(rejection.ndcg_trace.len(), 5);
                assert!(matches!(
                    rejection.reason,
                    HrcRejectReason::NeverPerfect { best } if best < 1.0
                ));
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn unjudged_query_is_rejected_without_teacher_calls() {
        let qrels = Qrels::from_triples([("q1", "a", 0u32)]);
        let list = candidates("q1", &["a", "b"]);
        let teacher = ScriptedBackend::from_steps([] as [(&str, Vec<usize>); 0]);
        match hrc_build(&list, &teacher, &qrels, &HrcConfig::default()) {
            HrcOutcome::Rejected(rejection) => {
                assert!(matches!(rejection.reason, HrcRejectReason::NoRelevantJudgments));
                assert!(rejection.ndcg_trace.is_empty());
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn teacher_failure_mid_iteration_keeps_the_partial_trace() {
        let qrels = Qrels::from_triples([("q1", "a", 3u32)]);
        let list = candidates("q1", &["b", "a", "c"]);
        let teacher = ScriptedBackend::from_steps([("q1", vec![3, 1, 2])]);
        match hrc_build(&list, &teacher, &qrels, &HrcConfig::default()) {
            HrcOutcome::Rejected(rejection) => {
                assert!(matches!(
                    rejection.reason,
                    HrcRejectReason::Backend { iteration: 2, .. }
                ));
                assert_eq!(rejection.ndcg_trace.len(), 1);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn filter_rules_match_the_worked_example() {
        let selection = select_pairs(&[1.0, 0.5, 0.9, 0.3], 0.8, 0.4);
        assert_eq!(selection.winner, Some(0));
        assert_eq!(selection.losers, vec![1, 3]);
    }

    #[test]
    fn winner_must_beat_the_baseline_strictly() {
        let selection = select_pairs(&[1.0, 0.2], 1.0, 0.4);
        assert_eq!(selection.winner, Some(0));
        assert!(selection.losers.is_empty());
    }

    #[test]
    fn winner_below_one_yields_nothing() {
        let selection = select_pairs(&[0.95, 0.1], 0.2, 0.4);
        assert!(selection.losers.is_empty());
        assert!(select_pairs(&[], 0.0, 0.4).winner.is_none());
    }

    #[test]
    fn ties_go_to_the_first_sample() {
        let selection = select_pairs(&[1.0, 1.0, 0.2], 0.5, 0.4);
        assert_eq!(selection.winner, Some(0));
        assert_eq!(selection.losers, vec![2]);
    }

    #[test]
    fn s3_build_scripts_end_to_end() {
        // single relevant passage w sitting second in the retrieved order;
        // identity LLR means the reward of an ordering is its own metric
        let qrels = Qrels::from_triples([("q1", "w", 1u32)]);
        let list = candidates("q1", &["x", "w", "y", "z"]);
        let slr = ScriptedBackend::from_steps([
            ("q1", vec![1, 2, 3, 4]), // sliding pass window
            ("q1", vec![2, 1, 3, 4]), // sample 0: w first        -> 1.0
            ("q1", vec![1, 2, 3, 4]), // sample 1: w second       -> 0.6309
            ("q1", vec![1, 3, 4, 2]), // sample 2: w fourth       -> 0.4307
            ("q1", vec![1, 3, 2, 4]), // sample 3: w third        -> 0.5
        ]);
        let llr = IdentityBackend::new();
        let config = S3Config {
            samples: 4,
            ..S3Config::default()
        };
        let cache = RewardCache::new();
        let out = s3_build(&list, &slr, &llr, &qrels, &config, &cache).unwrap();

        assert_eq!(out.candidate_ids, vec!["x", "w", "y", "z"]);
        assert_eq!(out.winner, Some(0));
        assert!((out.sample_rewards[0] - 1.0).abs() < TOL);
        assert!((out.sample_rewards[1] - 0.6309297535714575).abs() < TOL);
        assert!((out.baseline_reward - 0.6309297535714575).abs() < TOL);
        // gap to sample 1 is 0.369 < margin, samples 2 and 3 survive
        assert_eq!(out.pairs.len(), 2);
        assert_eq!(out.pairs[0].winner, "[2] [1] [3] [4]");
        assert_eq!(out.pairs[0].loser, "[1] [3] [4] [2]");
        assert_eq!(out.pairs[1].loser, "[1] [3] [2] [4]");
        for pair in &out.pairs {
            assert!(pair.reward_w >= 1.0 - REWARD_ONE_TOL);
            assert!(pair.reward_w > pair.baseline_reward);
            assert!(pair.reward_w - pair.reward_l > config.margin);
            assert!(pair.input.starts_with("q1 text [1] x body [2] w body"));
        }
        // 4 distinct orderings cached: the baseline equals sample 1
        assert_eq!(cache.len(), 4);
    }

    #[test]
    fn s3_build_skips_unjudged_and_unsampleable_queries() {
        let qrels = Qrels::from_triples([("q1", "a", 1u32)]);
        let cache = RewardCache::new();
        let config = S3Config::default();

        let unjudged = candidates("q9", &["a", "b"]);
        let slr = IdentityBackend::new();
        let err = s3_build(&unjudged, &slr, &IdentityBackend::new(), &qrels, &config, &cache)
            .unwrap_err();
        assert!(matches!(err.reason, S3SkipReason::NoRelevantJudgments));

        // identity cannot sample m > 1
        let judged = candidates("q1", &["a", "b"]);
        let err = s3_build(&judged, &slr, &IdentityBackend::new(), &qrels, &config, &cache)
            .unwrap_err();
        assert!(matches!(
            err.reason,
            S3SkipReason::Backend(BackendFailure::SamplingUnsupported { .. })
        ));
    }

    #[test]
    fn dpo_loss_reference_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((dpo_loss(0.0, 0.0, 0.0, 0.0, 0.4) - ln2).abs() < 1e-15);
        assert!((dpo_loss(-1.0, -3.0, -1.0, -3.0, 0.7) - ln2).abs() < 1e-15);
        // beta 1, margin 2
        assert!((dpo_loss(-1.0, -4.0, -2.0, -3.0, 1.0) - 0.1269280110429726).abs() < 1e-12);
        // stability at huge margins
        assert_eq!(dpo_loss(1e4, 0.0, 0.0, 0.0, 1.0), 0.0);
        let big = dpo_loss(-1e4, 0.0, 0.0, 0.0, 1.0);
        assert!((big - 1e4).abs() < 1e-9 && big.is_finite());
    }

    #[test]
    fn dpo_loss_decreases_as_the_winner_gains_probability() {
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let lp_w = -5.0 + 0.2 * i as f64;
            let loss = dpo_loss(lp_w, -4.0, -5.0, -4.0, 0.4);
            assert!(loss < last);
            last = loss;
        }
    }

    #[test]
    fn sft_writer_round_trips_and_rejects_bad_targets() {
        let header = ProvenanceHeader {
            kind: "sft".to_string(),
            mu: None,
            m: None,
            max_iterations: Some(5),
            seed: 42,
            metric_k: 10,
            backends: BTreeMap::from([("teacher".to_string(), "oracle".to_string())]),
        };
        let good = SftExample {
            query_id: "q1".to_string(),
            input: "q [1] a".to_string(),
            target: "[1]".to_string(),
            ndcg_of_target: 1.0,
            iterations_used: 2,
        };
        let mut buffer = Vec::new();
        write_sft_dataset(&mut buffer, &header, std::slice::from_ref(&good)).unwrap();
        let (read_header, records): (_, Vec<SftRecord>) =
            read_dataset(io::BufReader::new(buffer.as_slice())).unwrap();
        assert_eq!(read_header, header);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].qid, "q1");
        assert_eq!(records[0].iterations_used, 2);

        let bad = SftExample {
            ndcg_of_target: 0.9,
            ..good
        };
        let err = write_sft_dataset(&mut Vec::new(), &header, &[bad]).unwrap_err();
        assert!(matches!(err, DatasetWriteError::InvariantViolated(_)));
    }

    #[test]
    fn dpo_writer_enforces_the_filter_rules() {
        let header = ProvenanceHeader {
            kind: "dpo".to_string(),
            mu: Some(0.4),
            m: Some(4),
            max_iterations: None,
            seed: 42,
            metric_k: 10,
            backends: BTreeMap::new(),
        };
        let good = PreferencePair {
            query_id: "q1".to_string(),
            input: "q [1] a [2] b".to_string(),
            winner: "[1] [2]".to_string(),
            loser: "[2] [1]".to_string(),
            reward_w: 1.0,
            reward_l: 0.5,
            baseline_reward: 0.8,
        };
        let mut buffer = Vec::new();
        write_dpo_dataset(&mut buffer, &header, std::slice::from_ref(&good)).unwrap();
        let (_, records): (_, Vec<DpoRecord>) =
            read_dataset(io::BufReader::new(buffer.as_slice())).unwrap();
        assert_eq!(records[0].chosen, "[1] [2]");
        assert_eq!(records[0].reward_rejected, 0.5);

        let narrow_gap = PreferencePair {
            reward_l: 0.7,
            ..good.clone()
        };
        assert!(write_dpo_dataset(&mut Vec::new(), &header, &[narrow_gap]).is_err());
        let weak_winner = PreferencePair {
            reward_w: 0.9,
            ..good
        };
        assert!(write_dpo_dataset(&mut Vec::new(), &header, &[weak_winner]).is_err());
    }
}
