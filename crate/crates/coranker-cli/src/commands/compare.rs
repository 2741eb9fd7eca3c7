//! `compare`: run several strategies over the same dataset and emit a
//! table of mean NDCG, call counts, and modeled latency per strategy.

use std::path::Path;
use std::sync::Arc;

use coranker::pipeline::{
    compare_strategies, CompareOptions, NamedStrategy, StageBackends, StrategyKind,
};
use coranker::{CandidateList, Qrels};

use crate::commands::load_dataset;
use crate::config::{self, parse_strategy_names, LoadedConfig};
use crate::error::CliError;
use crate::io;

/// Run the comparison and write `compare.tsv`, `compare.md`, and
/// `compare.jsonl` under `out_dir`. Returns the TSV table.
pub fn run_comparison(
    config: &LoadedConfig,
    kinds: &[StrategyKind],
    backends: &StageBackends,
    candidates: &[CandidateList],
    qrels: &Arc<Qrels>,
    out_dir: &Path,
) -> Result<String, CliError> {
    let strategies: Vec<NamedStrategy> = kinds
        .iter()
        .map(|&kind| NamedStrategy {
            name: kind.as_str().to_string(),
            strategy: config.strategy(kind),
            backends: backends.clone(),
        })
        .collect();
    let options = CompareOptions {
        metric_k: config.raw.params.metric_k,
        unit_costs: config.raw.costs.unit_costs(),
        concurrency: config.raw.params.concurrency,
    };
    let report = compare_strategies(&strategies, candidates, qrels, &options)
        .map_err(|e| CliError::usage(e.to_string()))?;

    io::create_output_dir(out_dir)?;
    let tsv = report.to_tsv();
    io::write_text(&out_dir.join("compare.tsv"), &tsv)?;
    io::write_text(&out_dir.join("compare.md"), &report.to_markdown())?;
    io::write_jsonl(&out_dir.join("compare.jsonl"), &report.records)?;

    let excluded: usize = report.rows.iter().map(|r| r.failures).sum();
    if excluded > 0 {
        eprintln!("note: {excluded} (strategy, query) runs failed and were excluded from means");
    }
    Ok(tsv)
}

pub fn run(config_path: &Path) -> Result<(), CliError> {
    let config = config::load(config_path)?;
    let kinds = parse_strategy_names(&config.raw.compare.strategies)?;
    let bundle = load_dataset(&config, true)?;
    let qrels = bundle.qrels.clone().expect("qrels required above");
    let backends = config.build_backends(Some(&qrels))?;
    for &kind in &kinds {
        backends
            .check_bound(kind)
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let out_dir = config.output_dir();
    let tsv = run_comparison(&config, &kinds, &backends, &bundle.candidates, &qrels, &out_dir)?;
    print!("{tsv}");
    println!("outputs={}", out_dir.display());
    Ok(())
}
