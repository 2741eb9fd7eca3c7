//! Trace replay backend.
//!
//! Replays previously captured window permutations, one queue per query, in
//! call order. Window trace JSONL written by a pass can be fed back in
//! directly: unknown fields on each line are ignored.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use crate::core::{validate_ranking, Passage, Query, Ranking};

use super::{BackendFailure, BackendInfo, RerankerBackend, SamplingError};

#[derive(Debug, thiserror::Error)]
pub enum ScriptLoadError {
    #[error("cannot read script: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid JSON: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: perm is not a permutation: {source}")]
    BadPerm {
        line: usize,
        source: crate::core::PermutationError,
    },
}

#[derive(Debug, Deserialize)]
struct TraceLine {
    query_id: String,
    perm: Vec<usize>,
}

/// Pops the next scripted permutation for the query on every call.
#[derive(Debug)]
pub struct ScriptedBackend {
    steps: Mutex<HashMap<String, VecDeque<Vec<usize>>>>,
}

impl ScriptedBackend {
    pub fn from_steps<I, S>(steps: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<usize>)>,
        S: Into<String>,
    {
        let mut map: HashMap<String, VecDeque<Vec<usize>>> = HashMap::new();
        for (qid, perm) in steps {
            map.entry(qid.into()).or_default().push_back(perm);
        }
        Self {
            steps: Mutex::new(map),
        }
    }

    pub fn from_jsonl_path(path: impl AsRef<Path>) -> Result<Self, ScriptLoadError> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut map: HashMap<String, VecDeque<Vec<usize>>> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceLine = serde_json::from_str(&line)
                .map_err(|source| ScriptLoadError::Parse { line: idx + 1, source })?;
            validate_ranking(&record.perm, record.perm.len())
                .map_err(|source| ScriptLoadError::BadPerm { line: idx + 1, source })?;
            map.entry(record.query_id).or_default().push_back(record.perm);
        }
        Ok(Self {
            steps: Mutex::new(map),
        })
    }

    /// Steps left across all queries.
    pub fn remaining(&self) -> usize {
        self.steps.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl RerankerBackend for ScriptedBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: "scripted".to_string(),
            max_window: usize::MAX,
            supports_sampling: true,
        }
    }

    fn rerank(&self, query: &Query, passages: &[Passage]) -> Result<Ranking, BackendFailure> {
        let mut steps = self.steps.lock().unwrap();
        let queue = steps
            .get_mut(&query.id)
            .ok_or_else(|| BackendFailure::ScriptExhausted {
                query_id: query.id.clone(),
            })?;
        let perm = queue
            .pop_front()
            .ok_or_else(|| BackendFailure::ScriptExhausted {
                query_id: query.id.clone(),
            })?;
        if perm.len() != passages.len() {
            return Err(BackendFailure::InvalidInput(format!(
                "scripted step for query {} has length {}, window has {}",
                query.id,
                perm.len(),
                passages.len()
            )));
        }
        Ok(Ranking::new(perm, passages.len()).expect("validated at load"))
    }

    /// Samples replay queued steps too: one pop per sample, so a script can
    /// stage exact sample sets.
    fn sample_rankings(
        &self,
        query: &Query,
        passages: &[Passage],
        m: usize,
        _seed: u64,
    ) -> Result<Vec<Ranking>, SamplingError> {
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            match self.rerank(query, passages) {
                Ok(ranking) => out.push(ranking),
                Err(cause) => return Err(SamplingError { partial: out, cause }),
            }
        }
        Ok(out)
    }
}
