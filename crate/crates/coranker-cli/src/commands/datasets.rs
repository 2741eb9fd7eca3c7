//! `build-sft` and `build-dpo`: run the two data factories over the
//! dataset and write JSONL datasets with a provenance header line.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use coranker::datagen::{
    hrc_build, s3_build, write_dpo_dataset, write_sft_dataset, HrcConfig, HrcOutcome,
    HrcRejectReason, ProvenanceHeader, RewardCache, S3Config, S3SkipReason,
};
use coranker::pipeline::{par_map, Stage, StageBackends};

use crate::commands::load_dataset;
use crate::config::{self, word_budget, LoadedConfig};
use crate::error::CliError;
use crate::io;

fn require_stage(
    backends: &StageBackends,
    stage: Stage,
) -> Result<Arc<dyn coranker::backends::RerankerBackend>, CliError> {
    let slot = match stage {
        Stage::Slr => &backends.slr,
        Stage::Poa => &backends.poa,
        Stage::Llr => &backends.llr,
    };
    slot.clone()
        .ok_or_else(|| CliError::usage(format!("this command needs a backends.{stage} entry")))
}

fn systemic(backend_failures: usize, total: usize) -> Result<(), CliError> {
    if total > 0 && backend_failures * 2 > total {
        return Err(CliError::backend(format!(
            "{backend_failures} of {total} queries failed on backend errors"
        )));
    }
    Ok(())
}

fn setup(config_path: &Path) -> Result<(LoadedConfig, super::DatasetBundle, StageBackends), CliError> {
    let config = config::load(config_path)?;
    let bundle = load_dataset(&config, true)?;
    let backends = config.build_backends(bundle.qrels.as_ref())?;
    Ok((config, bundle, backends))
}

pub fn build_sft(config_path: &Path) -> Result<(), CliError> {
    let (config, bundle, backends) = setup(config_path)?;
    let teacher = require_stage(&backends, Stage::Llr)?;
    let qrels = bundle.qrels.as_ref().expect("qrels required above");
    let hrc = HrcConfig {
        max_iterations: config.raw.sft.max_iterations,
        metric_k: config.raw.params.metric_k,
        word_budget: word_budget(config.raw.sft.word_budget),
    };
    // The factory reranks the condensed candidate set, not the full depth.
    let top_k = config.raw.params.top_k;
    let lists: Vec<_> = bundle
        .candidates
        .iter()
        .map(|list| coranker::CandidateList {
            query: list.query.clone(),
            passages: list.passages.iter().take(top_k).cloned().collect(),
        })
        .collect();

    let outcomes = par_map(&lists, config.raw.params.concurrency, |list| {
        hrc_build(list, teacher.as_ref(), qrels, &hrc)
    });

    let mut examples = Vec::new();
    let mut no_relevant = 0usize;
    let mut never_perfect = 0usize;
    let mut backend_failed = 0usize;
    let mut iterations_total = 0usize;
    for outcome in outcomes {
        match outcome {
            HrcOutcome::Accepted(example) => {
                iterations_total += example.iterations_used;
                examples.push(example);
            }
            HrcOutcome::Rejected(rejection) => match rejection.reason {
                HrcRejectReason::NoRelevantJudgments => no_relevant += 1,
                HrcRejectReason::NeverPerfect { best } => {
                    eprintln!(
                        "query {}: no perfect ordering within {} iterations (best {best:.4})",
                        rejection.query_id, hrc.max_iterations
                    );
                    never_perfect += 1;
                }
                HrcRejectReason::Backend { iteration, source } => {
                    eprintln!(
                        "query {}: backend failed at iteration {iteration}: {source}",
                        rejection.query_id
                    );
                    backend_failed += 1;
                }
            },
        }
    }

    let out_dir = config.output_dir();
    io::create_output_dir(&out_dir)?;
    let path = out_dir.join("sft.jsonl");
    let header = ProvenanceHeader::sft(&hrc, config.raw.params.seed, teacher.as_ref());
    let file = File::create(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    write_sft_dataset(BufWriter::new(file), &header, &examples)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;

    let accepted = examples.len();
    let mean_iterations = if accepted > 0 {
        iterations_total as f64 / accepted as f64
    } else {
        0.0
    };
    println!(
        "queries={} accepted={accepted} rejected_no_relevant={no_relevant} \
         rejected_never_perfect={never_perfect} rejected_backend={backend_failed} \
         mean_iterations={mean_iterations:.2}",
        lists.len()
    );
    println!("dataset={}", path.display());

    systemic(backend_failed, lists.len())
}

pub fn build_dpo(config_path: &Path) -> Result<(), CliError> {
    let (config, bundle, backends) = setup(config_path)?;
    let slr = require_stage(&backends, Stage::Slr)?;
    let llr = require_stage(&backends, Stage::Llr)?;
    let qrels = bundle.qrels.as_ref().expect("qrels required above");
    let p = &config.raw.params;
    let s3 = S3Config {
        samples: config.raw.dpo.samples,
        margin: config.raw.dpo.margin,
        seed: p.seed,
        window: p.window,
        step: p.step,
        top_k: p.top_k,
        metric_k: p.metric_k,
        word_budget: word_budget(config.raw.dpo.word_budget),
    };
    let cache = RewardCache::new();

    let outcomes = par_map(&bundle.candidates, p.concurrency, |list| {
        s3_build(list, slr.as_ref(), llr.as_ref(), qrels, &s3, &cache)
    });

    let mut pairs = Vec::new();
    let mut with_pairs = 0usize;
    let mut no_relevant = 0usize;
    let mut backend_failed = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(output) => {
                if !output.pairs.is_empty() {
                    with_pairs += 1;
                }
                pairs.extend(output.pairs);
            }
            Err(skip) => match skip.reason {
                S3SkipReason::NoRelevantJudgments => no_relevant += 1,
                S3SkipReason::Backend(source) => {
                    eprintln!("query {}: {source}", skip.query_id);
                    backend_failed += 1;
                }
            },
        }
    }

    let out_dir = config.output_dir();
    io::create_output_dir(&out_dir)?;
    let path = out_dir.join("dpo.jsonl");
    let header = ProvenanceHeader::dpo(&s3, slr.as_ref(), llr.as_ref());
    let file = File::create(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    write_dpo_dataset(BufWriter::new(file), &header, &pairs)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;

    let total = bundle.candidates.len();
    let mean_pairs = if total > 0 {
        pairs.len() as f64 / total as f64
    } else {
        0.0
    };
    println!(
        "queries={total} queries_with_pairs={with_pairs} pairs={} mean_pairs_per_query={mean_pairs:.2} \
         skipped_no_relevant={no_relevant} skipped_backend={backend_failed}",
        pairs.len()
    );
    println!("dataset={}", path.display());

    systemic(backend_failed, total)
}
