//! One module per subcommand, plus the dataset-loading glue they share.

pub mod compare;
pub mod datasets;
pub mod eval;
pub mod rerank;
pub mod simulate;

use std::sync::Arc;

use coranker::{CandidateList, Qrels};

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::io;

/// Everything a pipeline command needs off disk, joined and validated.
pub struct DatasetBundle {
    pub candidates: Vec<CandidateList>,
    pub qrels: Option<Arc<Qrels>>,
    /// Run queries dropped for missing query text.
    pub dropped: usize,
}

/// Load and join the configured dataset files. With `need_qrels` the
/// command itself requires judgments (evaluation or reward scoring), which
/// turns an absent `dataset.qrels` into a usage error.
pub fn load_dataset(config: &LoadedConfig, need_qrels: bool) -> Result<DatasetBundle, CliError> {
    let queries = io::read_queries(&config.queries_path())?;
    let corpus = io::read_corpus(&config.corpus_path())?;
    let run = io::read_run(&config.first_stage_path())?;
    let qrels = match config.qrels_path() {
        Some(path) => Some(Arc::new(io::read_qrels(&path)?)),
        None if need_qrels => {
            return Err(CliError::usage(
                "this command needs relevance judgments; set dataset.qrels",
            ))
        }
        None => None,
    };
    let (candidates, dropped) =
        io::assemble_candidates(&queries, &corpus, &run, config.raw.params.depth)?;
    if dropped > 0 {
        eprintln!("note: {dropped} run queries have no entry in the queries file and were skipped");
    }
    Ok(DatasetBundle {
        candidates,
        qrels,
        dropped,
    })
}
