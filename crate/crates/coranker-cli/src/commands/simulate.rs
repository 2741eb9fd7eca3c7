//! `simulate`: self-contained demonstration run. Generates a synthetic
//! fixture, writes it plus a ready-to-edit config, and runs the full
//! strategy comparison with bundled simulators.
//!
//! The emitted `run.toml` reproduces the same numbers through
//! `coranker compare`, so the output doubles as a working example config.

use std::path::Path;

use coranker::pipeline::StrategyKind;

use crate::commands::{compare, load_dataset};
use crate::config;
use crate::error::CliError;
use crate::{fixture, io};

/// The small model is a noisy oracle; the large model is stronger per
/// grade but dislikes a mid-list zone; the adjuster resamples the noisy
/// model and keeps what the large model rewards most.
fn config_body(seed: u64, depth: usize) -> String {
    format!(
        r#"# Generated by `coranker simulate`. Rerun these numbers with:
#   coranker compare --config run.toml

[dataset]
queries = "fixture/queries.tsv"
corpus = "fixture/corpus.jsonl"
first_stage = "fixture/bm25.run"
qrels = "fixture/qrels.txt"

[params]
depth = {depth}
seed = {seed}

[output]
dir = "."

# Noisy grade-reading stand-in for the small reranker.
[backends.slr]
kind = "biased"
sigma = 0.35

# Order adjuster: sample the noisy model, keep what the large model
# rewards most, never worse than leaving the order alone.
[backends.poa]
kind = "best-sample"
samples = 8

[backends.poa.base]
kind = "biased"
sigma = 1.2

# Large reranker: accurate on grades except for a mid-window blind spot.
[backends.llr]
kind = "biased"
zone_from = 8
zone_to = 14
zone_penalty = 6.0
sigma = 0.15
"#
    )
}

pub fn run(seed: u64, n_queries: usize, depth: usize, out_dir: &Path) -> Result<(), CliError> {
    if n_queries == 0 || depth == 0 {
        return Err(CliError::usage("--queries and --depth must be at least 1"));
    }
    let fx = fixture::generate(seed, n_queries, depth);

    let fixture_dir = out_dir.join("fixture");
    io::create_output_dir(&fixture_dir)?;
    io::write_queries(&fixture_dir.join("queries.tsv"), &fx.queries)?;
    io::write_corpus(&fixture_dir.join("corpus.jsonl"), &fx.corpus)?;
    io::write_run(&fixture_dir.join("bm25.run"), &fx.run, "first-stage")?;
    io::write_qrels(&fixture_dir.join("qrels.txt"), &fx.qrels_triples)?;

    let config_path = out_dir.join("run.toml");
    io::write_text(&config_path, &config_body(seed, depth))?;

    let config = config::load(&config_path)?;
    let bundle = load_dataset(&config, true)?;
    let qrels = bundle.qrels.clone().expect("fixture always has qrels");
    let backends = config.build_backends(Some(&qrels))?;
    let tsv = compare::run_comparison(
        &config,
        &StrategyKind::ALL,
        &backends,
        &bundle.candidates,
        &qrels,
        out_dir,
    )?;

    print!("{tsv}");
    println!("outputs={}", out_dir.display());
    Ok(())
}
