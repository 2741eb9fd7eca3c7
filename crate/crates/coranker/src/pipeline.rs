//! Ranking strategies and efficiency accounting.
//!
//! Four compositions over the same backends: a single large-model window,
//! a large-model sliding pass, small-pass-then-large-window, and the full
//! small-pass, adjuster-window, large-window chain. Call counts are exact
//! and modeled latency is a pure function of counts and unit costs, so
//! simulator runs produce meaningful efficiency numbers.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendFailure, RerankerBackend};
use crate::core::{apply_ranking, CandidateList, Passage, Qrels, Query, Ranking};
use crate::defaults;
use crate::metrics::{ndcg_at_k, NdcgValue};
use crate::windowing::{run_pass, schedule, PassOptions, ScheduleError, WindowTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// One large-model call over the first `window` positions.
    SingleWindow,
    /// Large-model sliding pass over the whole list.
    LlrSliding,
    /// Small-model sliding pass, then one large-model call over the top k.
    Naive,
    /// Small-model sliding pass, adjuster call over the top k, then one
    /// large-model call over the top k.
    Coranking,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::SingleWindow,
        StrategyKind::LlrSliding,
        StrategyKind::Naive,
        StrategyKind::Coranking,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::SingleWindow => "single-window",
            StrategyKind::LlrSliding => "llr-sliding",
            StrategyKind::Naive => "naive",
            StrategyKind::Coranking => "coranking",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| {
                format!(
                    "unknown strategy {s:?} (expected one of: {})",
                    StrategyKind::ALL.map(|k| k.as_str()).join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub window: usize,
    pub step: usize,
    pub top_k: usize,
    /// Keep input order for failed windows instead of aborting the query.
    pub lenient: bool,
}

impl Strategy {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            window: defaults::WINDOW,
            step: defaults::STEP,
            top_k: defaults::TOP_K,
            lenient: false,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.step < 1 || self.step > self.window {
            return Err(PipelineError::BadStrategy(format!(
                "step must satisfy 1 <= step <= window (got window={}, step={})",
                self.window, self.step
            )));
        }
        if self.top_k < 1 || self.top_k > self.window {
            return Err(PipelineError::BadStrategy(format!(
                "top_k must satisfy 1 <= top_k <= window (got window={}, top_k={})",
                self.window, self.top_k
            )));
        }
        Ok(())
    }

    fn pass_options(&self) -> PassOptions {
        PassOptions {
            window: self.window,
            step: self.step,
            lenient: self.lenient,
        }
    }
}

/// Which stage a call or failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Slr,
    Poa,
    Llr,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Slr => "slr",
            Stage::Poa => "poa",
            Stage::Llr => "llr",
        })
    }
}

/// Backend bindings for the three stage roles. A strategy only needs the
/// roles it uses bound.
#[derive(Clone, Default)]
pub struct StageBackends {
    pub slr: Option<Arc<dyn RerankerBackend>>,
    pub poa: Option<Arc<dyn RerankerBackend>>,
    pub llr: Option<Arc<dyn RerankerBackend>>,
}

impl StageBackends {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_slr(mut self, backend: Arc<dyn RerankerBackend>) -> Self {
        self.slr = Some(backend);
        self
    }

    pub fn with_poa(mut self, backend: Arc<dyn RerankerBackend>) -> Self {
        self.poa = Some(backend);
        self
    }

    pub fn with_llr(mut self, backend: Arc<dyn RerankerBackend>) -> Self {
        self.llr = Some(backend);
        self
    }

    fn require(
        &self,
        kind: StrategyKind,
        stage: Stage,
    ) -> Result<&Arc<dyn RerankerBackend>, PipelineError> {
        let slot = match stage {
            Stage::Slr => &self.slr,
            Stage::Poa => &self.poa,
            Stage::Llr => &self.llr,
        };
        slot.as_ref()
            .ok_or(PipelineError::MissingBackend { kind, stage })
    }

    /// The roles `kind` uses, in execution order.
    pub fn check_bound(&self, kind: StrategyKind) -> Result<(), PipelineError> {
        let needed: &[Stage] = match kind {
            StrategyKind::SingleWindow | StrategyKind::LlrSliding => &[Stage::Llr],
            StrategyKind::Naive => &[Stage::Slr, Stage::Llr],
            StrategyKind::Coranking => &[Stage::Slr, Stage::Poa, Stage::Llr],
        };
        for &stage in needed {
            self.require(kind, stage)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid strategy: {0}")]
    BadStrategy(String),
    #[error("{kind} strategy requires a {stage} backend")]
    MissingBackend { kind: StrategyKind, stage: Stage },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: BackendFailure,
    },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("empty candidate list for query {query_id}")]
    EmptyCandidates { query_id: String },
}

impl fmt::Debug for StageBackends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |b: &Option<Arc<dyn RerankerBackend>>| {
            b.as_ref().map(|b| b.info().name).unwrap_or_default()
        };
        f.debug_struct("StageBackends")
            .field("slr", &name(&self.slr))
            .field("poa", &name(&self.poa))
            .field("llr", &name(&self.llr))
            .finish()
    }
}

/// Exact per-stage call counts plus measured wall time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub slr_calls: usize,
    pub poa_calls: usize,
    pub llr_calls: usize,
    pub slr_wall_ms: u64,
    pub poa_wall_ms: u64,
    pub llr_wall_ms: u64,
}

impl CostReport {
    pub fn total_calls(&self) -> usize {
        self.slr_calls + self.poa_calls + self.llr_calls
    }

    pub fn total_wall_ms(&self) -> u64 {
        self.slr_wall_ms + self.poa_wall_ms + self.llr_wall_ms
    }

    pub fn accumulate(&mut self, other: &CostReport) {
        self.slr_calls += other.slr_calls;
        self.poa_calls += other.poa_calls;
        self.llr_calls += other.llr_calls;
        self.slr_wall_ms += other.slr_wall_ms;
        self.poa_wall_ms += other.poa_wall_ms;
        self.llr_wall_ms += other.llr_wall_ms;
    }
}

/// Milliseconds per call for each stage role. The default large-model cost
/// reflects a 72B-vs-3B throughput ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCosts {
    pub slr_ms: f64,
    pub poa_ms: f64,
    pub llr_ms: f64,
}

impl Default for UnitCosts {
    fn default() -> Self {
        Self {
            slr_ms: 1.0,
            poa_ms: 1.0,
            llr_ms: 24.0,
        }
    }
}

/// Modeled total latency: counts times unit costs, nothing else.
pub fn latency_model(report: &CostReport, costs: &UnitCosts) -> f64 {
    report.slr_calls as f64 * costs.slr_ms
        + report.poa_calls as f64 * costs.poa_ms
        + report.llr_calls as f64 * costs.llr_ms
}

/// Per-stage window traces from one strategy run.
#[derive(Debug, Clone, Default)]
pub struct StageTraces {
    pub slr: Vec<WindowTrace>,
    pub poa: Vec<WindowTrace>,
    pub llr: Vec<WindowTrace>,
}

#[derive(Debug)]
pub struct StrategyOutcome {
    pub list: Vec<Passage>,
    pub cost: CostReport,
    pub traces: StageTraces,
}

impl StrategyOutcome {
    pub fn ids(&self) -> Vec<&str> {
        self.list.iter().map(|p| p.id.as_str()).collect()
    }
}

fn sliding_stage(
    backend: &dyn RerankerBackend,
    query: &Query,
    list: &[Passage],
    strategy: &Strategy,
    stage: Stage,
) -> Result<(Vec<Passage>, Vec<WindowTrace>, usize, u64), PipelineError> {
    let out = run_pass(backend, query, list, &strategy.pass_options())?;
    if let Some(source) = out.failure {
        return Err(PipelineError::Stage { stage, source });
    }
    let wall: u64 = out.trace.iter().map(|t| t.latency_ms).sum();
    Ok((out.list, out.trace, out.calls, wall))
}

/// One call over the first `k` positions; the rest of the list is frozen.
fn window_stage(
    backend: &dyn RerankerBackend,
    query: &Query,
    list: &mut [Passage],
    k: usize,
    lenient: bool,
    stage: Stage,
) -> Result<(WindowTrace, u64), PipelineError> {
    let k = k.min(list.len());
    let slice = &list[..k];
    let begun = Instant::now();
    let attempt = backend.rerank(query, slice).and_then(|ranking| {
        apply_ranking(slice, &ranking)
            .map(|reordered| (ranking, reordered))
            .map_err(|e| BackendFailure::InvalidInput(e.to_string()))
    });
    let latency_ms = begun.elapsed().as_millis() as u64;
    let perm = match attempt {
        Ok((ranking, reordered)) => {
            list[..k].clone_from_slice(&reordered);
            ranking
        }
        Err(source) if lenient => {
            tracing::warn!(query = %query.id, %stage, error = %source, "window failed, keeping input order");
            Ranking::identity(k)
        }
        Err(source) => return Err(PipelineError::Stage { stage, source }),
    };
    Ok((
        WindowTrace {
            query_id: query.id.clone(),
            window_start: 0,
            window_end: k,
            perm: perm.into_vec(),
            latency_ms,
        },
        latency_ms,
    ))
}

pub fn run_strategy(
    strategy: &Strategy,
    backends: &StageBackends,
    candidates: &CandidateList,
) -> Result<StrategyOutcome, PipelineError> {
    strategy.validate()?;
    backends.check_bound(strategy.kind)?;
    if candidates.is_empty() {
        return Err(PipelineError::EmptyCandidates {
            query_id: candidates.query.id.clone(),
        });
    }
    let query = &candidates.query;
    let mut list = candidates.passages.clone();
    let mut cost = CostReport::default();
    let mut traces = StageTraces::default();

    match strategy.kind {
        StrategyKind::SingleWindow => {
            let llr = backends.require(strategy.kind, Stage::Llr)?;
            let (trace, wall) = window_stage(
                llr.as_ref(),
                query,
                &mut list,
                strategy.window,
                strategy.lenient,
                Stage::Llr,
            )?;
            cost.llr_calls += 1;
            cost.llr_wall_ms += wall;
            traces.llr.push(trace);
        }
        StrategyKind::LlrSliding => {
            let llr = backends.require(strategy.kind, Stage::Llr)?;
            let (new_list, trace, calls, wall) =
                sliding_stage(llr.as_ref(), query, &list, strategy, Stage::Llr)?;
            list = new_list;
            cost.llr_calls += calls;
            cost.llr_wall_ms += wall;
            traces.llr = trace;
        }
        StrategyKind::Naive | StrategyKind::Coranking => {
            let slr = backends.require(strategy.kind, Stage::Slr)?;
            let (new_list, trace, calls, wall) =
                sliding_stage(slr.as_ref(), query, &list, strategy, Stage::Slr)?;
            list = new_list;
            cost.slr_calls += calls;
            cost.slr_wall_ms += wall;
            traces.slr = trace;

            if strategy.kind == StrategyKind::Coranking {
                let poa = backends.require(strategy.kind, Stage::Poa)?;
                let (trace, wall) = window_stage(
                    poa.as_ref(),
                    query,
                    &mut list,
                    strategy.top_k,
                    strategy.lenient,
                    Stage::Poa,
                )?;
                cost.poa_calls += 1;
                cost.poa_wall_ms += wall;
                traces.poa.push(trace);
            }

            let llr = backends.require(strategy.kind, Stage::Llr)?;
            let (trace, wall) = window_stage(
                llr.as_ref(),
                query,
                &mut list,
                strategy.top_k,
                strategy.lenient,
                Stage::Llr,
            )?;
            cost.llr_calls += 1;
            cost.llr_wall_ms += wall;
            traces.llr.push(trace);
        }
    }

    Ok(StrategyOutcome { list, cost, traces })
}

/// A strategy with a display name and its backend bindings, one comparison
/// row.
#[derive(Clone)]
pub struct NamedStrategy {
    pub name: String,
    pub strategy: Strategy,
    pub backends: StageBackends,
}

/// Per-query record emitted for each successful (strategy, query) pair;
/// `ms` is modeled latency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRecord {
    pub qid: String,
    pub strategy: String,
    pub ndcg: f64,
    pub slr_calls: usize,
    pub poa_calls: usize,
    pub llr_calls: usize,
    pub ms: f64,
}

#[derive(Debug, Clone)]
pub struct StrategyRow {
    pub name: String,
    pub queries: usize,
    pub failures: usize,
    pub mean_ndcg: f64,
    pub mean_calls: f64,
    pub mean_modeled_ms: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub metric_k: usize,
    pub rows: Vec<StrategyRow>,
    pub records: Vec<QueryRecord>,
}

impl CompareReport {
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "strategy\tqueries\tfailures\tmean_ndcg@{}\tmean_calls\tmean_modeled_ms\n",
            self.metric_k
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\t{:.2}\t{:.2}\n",
                row.name, row.queries, row.failures, row.mean_ndcg, row.mean_calls, row.mean_modeled_ms
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "| strategy | queries | failures | mean NDCG@{} | mean calls | mean modeled ms |\n",
            self.metric_k
        );
        out.push_str("|---|---:|---:|---:|---:|---:|\n");
        for row in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {:.4} | {:.2} | {:.2} |\n",
                row.name, row.queries, row.failures, row.mean_ndcg, row.mean_calls, row.mean_modeled_ms
            ));
        }
        out
    }

    pub fn row(&self, name: &str) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub metric_k: usize,
    pub unit_costs: UnitCosts,
    pub concurrency: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            metric_k: defaults::METRIC_K,
            unit_costs: UnitCosts::default(),
            concurrency: defaults::CONCURRENCY,
        }
    }
}

/// Map `f` over `items` on up to `concurrency` threads, results in input
/// order. Panics in `f` propagate.
pub fn par_map<T, R, F>(items: &[T], concurrency: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = concurrency.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = (0..items.len()).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let value = f(&items[i]);
                *slots[i].lock().unwrap() = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// Run every strategy over the shared candidate lists and aggregate one row
/// per strategy. Query-level failures are logged, counted, and excluded
/// from that row's means.
pub fn compare_strategies(
    strategies: &[NamedStrategy],
    dataset: &[CandidateList],
    qrels: &Qrels,
    options: &CompareOptions,
) -> Result<CompareReport, PipelineError> {
    for named in strategies {
        named.strategy.validate()?;
        named.backends.check_bound(named.strategy.kind)?;
    }
    let mut rows = Vec::with_capacity(strategies.len());
    let mut records = Vec::new();
    for named in strategies {
        let outcomes: Vec<Result<(NdcgValue, CostReport), PipelineError>> =
            par_map(dataset, options.concurrency, |candidates| {
                let outcome = run_strategy(&named.strategy, &named.backends, candidates)?;
                let value = ndcg_at_k(
                    qrels,
                    &candidates.query.id,
                    outcome.list.iter().map(|p| p.id.as_str()),
                    options.metric_k,
                );
                Ok((value, outcome.cost))
            });
        let mut row = StrategyRow {
            name: named.name.clone(),
            queries: 0,
            failures: 0,
            mean_ndcg: 0.0,
            mean_calls: 0.0,
            mean_modeled_ms: 0.0,
        };
        for (candidates, outcome) in dataset.iter().zip(outcomes) {
            match outcome {
                Ok((value, cost)) => {
                    let ms = latency_model(&cost, &options.unit_costs);
                    row.queries += 1;
                    row.mean_ndcg += value.value;
                    row.mean_calls += cost.total_calls() as f64;
                    row.mean_modeled_ms += ms;
                    records.push(QueryRecord {
                        qid: candidates.query.id.clone(),
                        strategy: named.name.clone(),
                        ndcg: value.value,
                        slr_calls: cost.slr_calls,
                        poa_calls: cost.poa_calls,
                        llr_calls: cost.llr_calls,
                        ms,
                    });
                }
                Err(error) => {
                    tracing::warn!(strategy = %named.name, query = %candidates.query.id, %error, "query excluded from comparison");
                    row.failures += 1;
                }
            }
        }
        if row.queries > 0 {
            row.mean_ndcg /= row.queries as f64;
            row.mean_calls /= row.queries as f64;
            row.mean_modeled_ms /= row.queries as f64;
        }
        rows.push(row);
    }
    Ok(CompareReport {
        metric_k: options.metric_k,
        rows,
        records,
    })
}

/// Call counts a strategy will incur on a list of length `n`, from schedule
/// arithmetic alone.
pub fn predicted_calls(strategy: &Strategy, n: usize) -> Result<CostReport, PipelineError> {
    strategy.validate()?;
    if n == 0 {
        return Err(PipelineError::EmptyCandidates {
            query_id: String::new(),
        });
    }
    let sliding = schedule(n, strategy.window, strategy.step)?.len();
    let mut cost = CostReport::default();
    match strategy.kind {
        StrategyKind::SingleWindow => cost.llr_calls = 1,
        StrategyKind::LlrSliding => cost.llr_calls = sliding,
        StrategyKind::Naive => {
            cost.slr_calls = sliding;
            cost.llr_calls = 1;
        }
        StrategyKind::Coranking => {
            cost.slr_calls = sliding;
            cost.poa_calls = 1;
            cost.llr_calls = 1;
        }
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BiasModel, BiasedBackend, IdentityBackend, OracleBackend, ScriptedBackend};
    use std::sync::Arc;

    fn candidates(qid: &str, n: usize) -> CandidateList {
        CandidateList::new(
            Query::new(qid, "text"),
            (0..n)
                .map(|i| Passage::new(format!("{qid}-d{i}"), "body"))
                .collect(),
        )
        .unwrap()
    }

    fn identity_stages() -> StageBackends {
        let b: Arc<dyn RerankerBackend> = Arc::new(IdentityBackend::new());
        StageBackends::new()
            .with_slr(b.clone())
            .with_poa(b.clone())
            .with_llr(b)
    }

    #[test]
    fn call_counts_match_the_strategy_shapes() {
        let list = candidates("q1", 100);
        let stages = identity_stages();
        let cases = [
            (StrategyKind::SingleWindow, (0, 0, 1)),
            (StrategyKind::LlrSliding, (0, 0, 9)),
            (StrategyKind::Naive, (9, 0, 1)),
            (StrategyKind::Coranking, (9, 1, 1)),
        ];
        for (kind, (slr, poa, llr)) in cases {
            let outcome = run_strategy(&Strategy::new(kind), &stages, &list).unwrap();
            assert_eq!(
                (outcome.cost.slr_calls, outcome.cost.poa_calls, outcome.cost.llr_calls),
                (slr, poa, llr),
                "{kind}"
            );
            // identity backends leave the order alone
            assert_eq!(outcome.ids(), list.ids(), "{kind}");
            assert_eq!(
                predicted_calls(&Strategy::new(kind), 100).unwrap(),
                CostReport {
                    slr_calls: slr,
                    poa_calls: poa,
                    llr_calls: llr,
                    ..CostReport::default()
                },
                "{kind}"
            );
        }
    }

    #[test]
    fn modeled_latency_is_counts_times_unit_costs() {
        let coranking = CostReport {
            slr_calls: 9,
            poa_calls: 1,
            llr_calls: 1,
            ..CostReport::default()
        };
        let sliding = CostReport {
            llr_calls: 9,
            ..CostReport::default()
        };
        let costs = UnitCosts::default();
        assert_eq!(latency_model(&coranking, &costs), 34.0);
        assert_eq!(latency_model(&sliding, &costs), 216.0);
        assert!(1.0 - 34.0 / 216.0 > 0.84);
        let zero = UnitCosts { slr_ms: 0.0, poa_ms: 0.0, llr_ms: 0.0 };
        assert_eq!(latency_model(&coranking, &zero), 0.0);
        assert_eq!(
            latency_model(&sliding, &UnitCosts { slr_ms: 0.0, poa_ms: 0.0, llr_ms: 1.0 }),
            9.0
        );
    }

    #[test]
    fn strategy_validation_rejects_bad_shapes() {
        let mut s = Strategy::new(StrategyKind::Coranking);
        s.top_k = 25;
        assert!(matches!(s.validate(), Err(PipelineError::BadStrategy(_))));
        let mut s = Strategy::new(StrategyKind::Naive);
        s.step = 0;
        assert!(matches!(s.validate(), Err(PipelineError::BadStrategy(_))));
    }

    #[test]
    fn missing_backends_are_reported_per_stage() {
        let list = candidates("q1", 30);
        let llr_only = StageBackends::new().with_llr(Arc::new(IdentityBackend::new()));
        let err = run_strategy(&Strategy::new(StrategyKind::Coranking), &llr_only, &list).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::MissingBackend { stage: Stage::Slr, .. }
        ));
        assert!(run_strategy(&Strategy::new(StrategyKind::LlrSliding), &llr_only, &list).is_ok());
    }

    #[test]
    fn tail_below_top_k_is_frozen_after_the_small_pass() {
        let qrels = Arc::new(Qrels::from_triples(
            (0..40u32).map(|i| ("q1".to_string(), format!("q1-d{i}"), i % 5)),
        ));
        let list = candidates("q1", 40);
        let slr: Arc<dyn RerankerBackend> = Arc::new(OracleBackend::new(qrels.clone()));
        let scrambler: Arc<dyn RerankerBackend> = Arc::new(BiasedBackend::new(
            qrels.clone(),
            BiasModel::none().with_sigma(3.0).with_seed(7),
        ));
        let stages = StageBackends::new()
            .with_slr(slr.clone())
            .with_poa(scrambler.clone())
            .with_llr(scrambler);

        let full = run_strategy(&Strategy::new(StrategyKind::Coranking), &stages, &list).unwrap();
        let slr_only = run_pass(
            slr.as_ref(),
            &list.query,
            &list.passages,
            &PassOptions::default(),
        )
        .unwrap();
        let tail_full: Vec<&str> = full.list[20..].iter().map(|p| p.id.as_str()).collect();
        let tail_slr: Vec<&str> = slr_only.list[20..].iter().map(|p| p.id.as_str()).collect();
        assert_eq!(tail_full, tail_slr);

        // and the head is a permutation of the small pass's head
        let mut head_full: Vec<&str> = full.list[..20].iter().map(|p| p.id.as_str()).collect();
        let mut head_slr: Vec<&str> = slr_only.list[..20].iter().map(|p| p.id.as_str()).collect();
        head_full.sort_unstable();
        head_slr.sort_unstable();
        assert_eq!(head_full, head_slr);
    }

    #[test]
    fn single_window_matches_sliding_when_one_window_covers_the_list() {
        let qrels = Arc::new(Qrels::from_triples(
            (0..20u32).map(|i| ("q1".to_string(), format!("q1-d{i}"), (3 * i) % 4)),
        ));
        let list = candidates("q1", 20);
        let llr: Arc<dyn RerankerBackend> = Arc::new(OracleBackend::new(qrels));
        let stages = StageBackends::new().with_llr(llr);
        let a = run_strategy(&Strategy::new(StrategyKind::SingleWindow), &stages, &list).unwrap();
        let b = run_strategy(&Strategy::new(StrategyKind::LlrSliding), &stages, &list).unwrap();
        assert_eq!(a.ids(), b.ids());
        assert_eq!(a.cost.total_calls(), 1);
        assert_eq!(b.cost.total_calls(), 1);
    }

    #[test]
    fn strategy_failures_attribute_the_stage() {
        let list = candidates("q1", 30);
        // scripted SLR with only one of the two needed windows
        let slr: Arc<dyn RerankerBackend> =
            Arc::new(ScriptedBackend::from_steps([("q1", (1..=20).collect::<Vec<_>>())]));
        let stages = StageBackends::new()
            .with_slr(slr)
            .with_llr(Arc::new(IdentityBackend::new()));
        let err = run_strategy(&Strategy::new(StrategyKind::Naive), &stages, &list).unwrap_err();
        match err {
            PipelineError::Stage { stage, .. } => assert_eq!(stage, Stage::Slr),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn lenient_strategy_survives_backend_failures() {
        let list = candidates("q1", 30);
        let slr: Arc<dyn RerankerBackend> = Arc::new(ScriptedBackend::from_steps([] as [(&str, Vec<usize>); 0]));
        let stages = StageBackends::new()
            .with_slr(slr)
            .with_llr(Arc::new(IdentityBackend::new()));
        let mut strategy = Strategy::new(StrategyKind::Naive);
        strategy.lenient = true;
        let outcome = run_strategy(&strategy, &stages, &list).unwrap();
        assert_eq!(outcome.ids(), list.ids());
        assert_eq!(outcome.cost.slr_calls, 2);
    }

    #[test]
    fn compare_ranks_all_strategies_on_shared_input() {
        // relevant passages sit inside the first window so even the
        // single-window baseline can reach the ideal
        let qrels = Arc::new(Qrels::from_triples([
            ("q1", "q1-d3", 3u32),
            ("q1", "q1-d15", 2),
            ("q2", "q2-d0", 1),
            ("q2", "q2-d11", 2),
        ]));
        let dataset = vec![candidates("q1", 100), candidates("q2", 100)];
        let oracle: Arc<dyn RerankerBackend> = Arc::new(OracleBackend::new(qrels.clone()));
        let stages = StageBackends::new()
            .with_slr(oracle.clone())
            .with_poa(oracle.clone())
            .with_llr(oracle);
        let strategies: Vec<NamedStrategy> = StrategyKind::ALL
            .iter()
            .map(|&kind| NamedStrategy {
                name: kind.to_string(),
                strategy: Strategy::new(kind),
                backends: stages.clone(),
            })
            .collect();
        let report =
            compare_strategies(&strategies, &dataset, &qrels, &CompareOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 4);
        for row in &report.rows {
            assert_eq!(row.queries, 2);
            assert_eq!(row.failures, 0);
            assert!((row.mean_ndcg - 1.0).abs() < 1e-12, "{}", row.name);
        }
        assert_eq!(report.row("llr-sliding").unwrap().mean_calls, 9.0);
        assert_eq!(report.row("coranking").unwrap().mean_calls, 11.0);
        assert_eq!(report.records.len(), 8);
        let tsv = report.to_tsv();
        assert!(tsv.starts_with("strategy\tqueries\tfailures\tmean_ndcg@10"));
        assert!(report.to_markdown().contains("| coranking |"));
    }

    #[test]
    fn compare_excludes_failed_queries_from_means() {
        let qrels = Qrels::from_triples([("q1", "q1-d0", 1u32), ("q2", "q2-d0", 1)]);
        let dataset = vec![candidates("q1", 20), candidates("q2", 20)];
        // scripted llr only knows q1
        let llr: Arc<dyn RerankerBackend> =
            Arc::new(ScriptedBackend::from_steps([("q1", (1..=20).collect::<Vec<_>>())]));
        let strategies = vec![NamedStrategy {
            name: "llr-sliding".to_string(),
            strategy: Strategy::new(StrategyKind::LlrSliding),
            backends: StageBackends::new().with_llr(llr),
        }];
        let report =
            compare_strategies(&strategies, &dataset, &qrels, &CompareOptions::default()).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.queries, 1);
        assert_eq!(row.failures, 1);
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].qid, "q1");
    }

    #[test]
    fn par_map_keeps_input_order() {
        let items: Vec<usize> = (0..97).collect();
        for concurrency in [1, 3, 8] {
            let out = par_map(&items, concurrency, |&i| i * 2);
            assert_eq!(out, items.iter().map(|&i| i * 2).collect::<Vec<_>>());
        }
        assert!(par_map(&[] as &[usize], 4, |&i| i).is_empty());
    }

    #[test]
    fn unknown_strategy_names_fail_parsing() {
        assert_eq!("coranking".parse::<StrategyKind>().unwrap(), StrategyKind::Coranking);
        assert_eq!("llr-sliding".parse::<StrategyKind>().unwrap(), StrategyKind::LlrSliding);
        assert!("full-ranking".parse::<StrategyKind>().is_err());
    }
}
