//! `rerank`: run one strategy over the dataset and write a TREC run plus
//! per-query call-count records.

use std::path::Path;

use serde::Serialize;

use coranker::core::run_entries_for;
use coranker::pipeline::{latency_model, par_map, run_strategy, StrategyKind};

use crate::commands::load_dataset;
use crate::config;
use crate::error::CliError;
use crate::io;

/// Per-query cost record; `modeled_ms` is the unit-cost latency model, not
/// wall time, so reruns with simulators are byte-identical.
#[derive(Debug, Serialize)]
struct CostRecord {
    qid: String,
    strategy: String,
    slr_calls: usize,
    poa_calls: usize,
    llr_calls: usize,
    modeled_ms: f64,
}

pub fn run(config_path: &Path) -> Result<(), CliError> {
    let config = config::load(config_path)?;
    let kind: StrategyKind = config
        .raw
        .rerank
        .strategy
        .parse()
        .map_err(|e: String| CliError::usage(e))?;
    let strategy = config.strategy(kind);
    strategy.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let needs_qrels = config
        .raw
        .backends
        .slr
        .iter()
        .chain(config.raw.backends.poa.iter())
        .chain(std::iter::once(&config.raw.backends.llr))
        .any(|spec| spec.needs_qrels());
    let bundle = load_dataset(&config, needs_qrels)?;
    let backends = config.build_backends(bundle.qrels.as_ref())?;
    backends
        .check_bound(kind)
        .map_err(|e| CliError::usage(e.to_string()))?;

    let outcomes = par_map(&bundle.candidates, config.raw.params.concurrency, |list| {
        run_strategy(&strategy, &backends, list)
    });

    let unit_costs = config.raw.costs.unit_costs();
    let mut entries = Vec::new();
    let mut records = Vec::new();
    let mut totals = (0usize, 0usize, 0usize);
    let mut failures = 0usize;
    for (list, outcome) in bundle.candidates.iter().zip(outcomes) {
        match outcome {
            Ok(out) => {
                entries.extend(run_entries_for(&list.query.id, &out.ids()));
                totals.0 += out.cost.slr_calls;
                totals.1 += out.cost.poa_calls;
                totals.2 += out.cost.llr_calls;
                records.push(CostRecord {
                    qid: list.query.id.clone(),
                    strategy: kind.as_str().to_string(),
                    slr_calls: out.cost.slr_calls,
                    poa_calls: out.cost.poa_calls,
                    llr_calls: out.cost.llr_calls,
                    modeled_ms: latency_model(&out.cost, &unit_costs),
                });
            }
            Err(e) => {
                eprintln!("query {} failed: {e}", list.query.id);
                failures += 1;
            }
        }
    }

    let out_dir = config.output_dir();
    io::create_output_dir(&out_dir)?;
    let run_path = out_dir.join(format!("{kind}.run"));
    let costs_path = out_dir.join(format!("{kind}.costs.jsonl"));
    io::write_run(&run_path, &entries, kind.as_str())?;
    io::write_jsonl(&costs_path, &records)?;

    println!(
        "strategy={kind} queries={} failures={failures} slr_calls={} poa_calls={} llr_calls={}",
        records.len(),
        totals.0,
        totals.1,
        totals.2
    );
    println!("run={}", run_path.display());
    println!("costs={}", costs_path.display());

    if failures > 0 {
        return Err(CliError::backend(format!(
            "{failures} of {} queries failed",
            bundle.candidates.len()
        )));
    }
    Ok(())
}
