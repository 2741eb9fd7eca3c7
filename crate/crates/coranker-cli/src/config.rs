//! TOML run configuration: dataset paths, pipeline parameters, and backend
//! bindings for the three stage roles.
//!
//! Credentials never appear in config files; endpoint backends name an
//! environment variable instead. Relative paths are resolved against the
//! directory containing the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use coranker::backends::{
    BestSampleAdjuster, BiasModel, BiasedBackend, EndpointConfig, IdentityBackend, OracleBackend,
    RemoteBackend, RerankerBackend, ScriptedBackend,
};
use coranker::defaults;
use coranker::pipeline::{Stage, StageBackends, Strategy, StrategyKind};
use coranker::seeding;
use coranker::Qrels;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetPaths,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub costs: CostsSection,
    #[serde(default)]
    pub rerank: RerankSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub sft: SftSection,
    #[serde(default)]
    pub dpo: DpoSection,
    pub backends: BackendsSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    /// TSV of `query_id<TAB>query_text`.
    pub queries: PathBuf,
    /// JSONL of `{"id": ..., "text": ...}` passage records.
    pub corpus: PathBuf,
    /// Six-column TREC run holding the first-stage retrieval order.
    pub first_stage: PathBuf,
    /// Four-column graded judgments; optional, but required by evaluation,
    /// dataset building, and any grade-reading simulator.
    #[serde(default)]
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Candidates taken from the first-stage run per query.
    pub depth: usize,
    pub window: usize,
    pub step: usize,
    /// Positions the second and third stages rework.
    pub top_k: usize,
    /// Evaluation cutoff.
    pub metric_k: usize,
    pub seed: u64,
    pub concurrency: usize,
    /// Substitute identity for failed windows instead of failing the query.
    pub lenient: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            depth: defaults::DEPTH,
            window: defaults::WINDOW,
            step: defaults::STEP,
            top_k: defaults::TOP_K,
            metric_k: defaults::METRIC_K,
            seed: defaults::SEED,
            concurrency: defaults::CONCURRENCY,
            lenient: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Per-call unit costs feeding the modeled-latency column.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostsSection {
    pub slr_ms: f64,
    pub poa_ms: f64,
    pub llr_ms: f64,
}

impl Default for CostsSection {
    fn default() -> Self {
        let c = coranker::pipeline::UnitCosts::default();
        Self { slr_ms: c.slr_ms, poa_ms: c.poa_ms, llr_ms: c.llr_ms }
    }
}

impl CostsSection {
    pub fn unit_costs(&self) -> coranker::pipeline::UnitCosts {
        coranker::pipeline::UnitCosts {
            slr_ms: self.slr_ms,
            poa_ms: self.poa_ms,
            llr_ms: self.llr_ms,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankSection {
    pub strategy: String,
}

impl Default for RerankSection {
    fn default() -> Self {
        Self { strategy: StrategyKind::Coranking.as_str().to_string() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub strategies: Vec<String>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            strategies: StrategyKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SftSection {
    pub max_iterations: usize,
    /// Per-passage word cap in rendered inputs; 0 disables truncation.
    pub word_budget: usize,
}

impl Default for SftSection {
    fn default() -> Self {
        Self {
            max_iterations: defaults::HRC_MAX_ITERATIONS,
            word_budget: defaults::TRUNCATE_WORDS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpoSection {
    /// Sampled orderings per query.
    pub samples: usize,
    /// Minimum winner-loser reward gap.
    pub margin: f64,
    pub word_budget: usize,
}

impl Default for DpoSection {
    fn default() -> Self {
        Self {
            samples: defaults::S3_SAMPLES,
            margin: defaults::S3_MARGIN,
            word_budget: defaults::TRUNCATE_WORDS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsSection {
    #[serde(default)]
    pub slr: Option<BackendSpec>,
    #[serde(default)]
    pub poa: Option<BackendSpec>,
    pub llr: BackendSpec,
}

/// One backend binding. Simulators read grades from qrels; `endpoint` talks
/// to a chat-completions server; `best-sample` wraps a sampling backend and
/// keeps whichever sampled ordering the bound `llr` backend rewards most.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSpec {
    Identity,
    Oracle,
    Biased {
        /// Score penalty per input position; positions past the end get 0.
        #[serde(default)]
        penalty: Vec<f64>,
        /// Convenience zone form: positions `zone_from..zone_to` all get
        /// `zone_penalty`. Ignored when `penalty` is non-empty.
        #[serde(default)]
        zone_from: usize,
        #[serde(default)]
        zone_to: usize,
        #[serde(default)]
        zone_penalty: f64,
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Scripted {
        path: PathBuf,
    },
    Endpoint(EndpointConfig),
    BestSample {
        base: Box<BackendSpec>,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl BackendSpec {
    fn kind_name(&self) -> &'static str {
        match self {
            BackendSpec::Identity => "identity",
            BackendSpec::Oracle => "oracle",
            BackendSpec::Biased { .. } => "biased",
            BackendSpec::Scripted { .. } => "scripted",
            BackendSpec::Endpoint(_) => "endpoint",
            BackendSpec::BestSample { .. } => "best-sample",
        }
    }

    /// Whether this backend scores by reading relevance grades.
    pub fn needs_qrels(&self) -> bool {
        match self {
            BackendSpec::Identity | BackendSpec::Scripted { .. } | BackendSpec::Endpoint(_) => false,
            BackendSpec::Oracle | BackendSpec::Biased { .. } | BackendSpec::BestSample { .. } => true,
        }
    }

    fn script_path(&self) -> Option<&Path> {
        match self {
            BackendSpec::Scripted { path } => Some(path),
            BackendSpec::BestSample { base, .. } => base.script_path(),
            _ => None,
        }
    }
}

fn stage_salt(stage: Stage) -> u64 {
    match stage {
        Stage::Slr => 1,
        Stage::Poa => 2,
        Stage::Llr => 3,
    }
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub raw: RunConfig,
    base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let raw: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let loaded = LoadedConfig { raw, base_dir };
    loaded.validate()?;
    Ok(loaded)
}

impl LoadedConfig {
    /// Resolve a config-relative path.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn queries_path(&self) -> PathBuf {
        self.resolve(&self.raw.dataset.queries)
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.resolve(&self.raw.dataset.corpus)
    }

    pub fn first_stage_path(&self) -> PathBuf {
        self.resolve(&self.raw.dataset.first_stage)
    }

    pub fn qrels_path(&self) -> Option<PathBuf> {
        self.raw.dataset.qrels.as_ref().map(|p| self.resolve(p))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.raw.output.dir)
    }

    fn validate(&self) -> Result<(), CliError> {
        let p = &self.raw.params;
        if p.depth == 0 {
            return Err(CliError::usage("params.depth must be at least 1"));
        }
        if p.step < 1 || p.step > p.window {
            return Err(CliError::usage(format!(
                "params: step must satisfy 1 <= step <= window (got window={}, step={})",
                p.window, p.step
            )));
        }
        if p.top_k < 1 || p.top_k > p.window {
            return Err(CliError::usage(format!(
                "params: top_k must satisfy 1 <= top_k <= window (got window={}, top_k={})",
                p.window, p.top_k
            )));
        }
        if p.metric_k == 0 {
            return Err(CliError::usage("params.metric_k must be at least 1"));
        }

        let mut required = vec![
            ("dataset.queries", self.queries_path()),
            ("dataset.corpus", self.corpus_path()),
            ("dataset.first_stage", self.first_stage_path()),
        ];
        if let Some(qrels) = self.qrels_path() {
            required.push(("dataset.qrels", qrels));
        }
        for (role, spec) in self.backend_specs() {
            if let Some(script) = spec.script_path() {
                required.push((role, self.resolve(script)));
            }
        }
        for (key, path) in required {
            if !path.exists() {
                return Err(CliError::usage(format!(
                    "{key}: {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    fn backend_specs(&self) -> Vec<(&'static str, &BackendSpec)> {
        let mut out = Vec::new();
        if let Some(spec) = &self.raw.backends.slr {
            out.push(("backends.slr", spec));
        }
        if let Some(spec) = &self.raw.backends.poa {
            out.push(("backends.poa", spec));
        }
        out.push(("backends.llr", &self.raw.backends.llr));
        out
    }

    /// A strategy of the given kind with this config's window parameters.
    pub fn strategy(&self, kind: StrategyKind) -> Strategy {
        let p = &self.raw.params;
        Strategy {
            kind,
            window: p.window,
            step: p.step,
            top_k: p.top_k,
            lenient: p.lenient,
        }
    }

    /// Build every configured backend. `qrels` may be `None` only when no
    /// configured backend reads grades.
    pub fn build_backends(&self, qrels: Option<&Arc<Qrels>>) -> Result<StageBackends, CliError> {
        let llr = self.build_one("backends.llr", &self.raw.backends.llr, Stage::Llr, qrels, None)?;
        let mut set = StageBackends::new().with_llr(llr.clone());
        if let Some(spec) = &self.raw.backends.slr {
            set = set.with_slr(self.build_one("backends.slr", spec, Stage::Slr, qrels, None)?);
        }
        if let Some(spec) = &self.raw.backends.poa {
            set = set.with_poa(self.build_one("backends.poa", spec, Stage::Poa, qrels, Some(&llr))?);
        }
        Ok(set)
    }

    fn build_one(
        &self,
        key: &str,
        spec: &BackendSpec,
        stage: Stage,
        qrels: Option<&Arc<Qrels>>,
        llr: Option<&Arc<dyn RerankerBackend>>,
    ) -> Result<Arc<dyn RerankerBackend>, CliError> {
        let need_qrels = || -> Result<Arc<Qrels>, CliError> {
            qrels.cloned().ok_or_else(|| {
                CliError::usage(format!(
                    "{key}: the {} simulator reads relevance grades; set dataset.qrels",
                    spec.kind_name()
                ))
            })
        };
        let default_seed = seeding::mix(self.raw.params.seed, stage_salt(stage));
        match spec {
            BackendSpec::Identity => Ok(Arc::new(IdentityBackend::new())),
            BackendSpec::Oracle => Ok(Arc::new(OracleBackend::new(need_qrels()?))),
            BackendSpec::Biased {
                penalty,
                zone_from,
                zone_to,
                zone_penalty,
                sigma,
                seed,
            } => {
                let mut bias = if !penalty.is_empty() {
                    BiasModel { penalty: penalty.clone(), sigma: 0.0, seed: 0 }
                } else if zone_to > zone_from {
                    BiasModel::mid_list(*zone_from, *zone_to, *zone_penalty)
                } else {
                    BiasModel::none()
                };
                bias = bias.with_sigma(*sigma).with_seed(seed.unwrap_or(default_seed));
                Ok(Arc::new(BiasedBackend::new(need_qrels()?, bias)))
            }
            BackendSpec::Scripted { path } => {
                let resolved = self.resolve(path);
                let backend = ScriptedBackend::from_jsonl_path(&resolved)
                    .map_err(|e| CliError::io(format!("{key}: {}: {e}", resolved.display())))?;
                Ok(Arc::new(backend))
            }
            BackendSpec::Endpoint(config) => {
                let backend = RemoteBackend::new(config.clone()).map_err(|e| match e {
                    coranker::backends::RemoteInitError::Client(e) => {
                        CliError::backend(format!("{key}: {e}"))
                    }
                    other => CliError::usage(format!("{key}: {other}")),
                })?;
                Ok(Arc::new(backend))
            }
            BackendSpec::BestSample { base, samples, seed } => {
                let llr = llr.ok_or_else(|| {
                    CliError::usage(format!("{key}: best-sample is only valid in the poa role"))
                })?;
                let base = self.build_one(key, base, stage, qrels, None)?;
                let adjuster = BestSampleAdjuster::new(base, llr.clone(), need_qrels()?)
                    .with_samples(samples.unwrap_or(defaults::S3_SAMPLES))
                    .with_seed(seed.unwrap_or_else(|| seeding::mix(default_seed, 0x5eed)))
                    .with_metric_k(self.raw.params.metric_k);
                Ok(Arc::new(adjuster))
            }
        }
    }
}

/// Parse a strategy name list, rejecting unknown names as usage errors.
pub fn parse_strategy_names(names: &[String]) -> Result<Vec<StrategyKind>, CliError> {
    if names.is_empty() {
        return Err(CliError::usage("compare.strategies must name at least one strategy"));
    }
    names
        .iter()
        .map(|name| name.parse::<StrategyKind>().map_err(|e| CliError::usage(e.to_string())))
        .collect()
}

pub fn word_budget(words: usize) -> Option<usize> {
    if words == 0 {
        None
    } else {
        Some(words)
    }
}
