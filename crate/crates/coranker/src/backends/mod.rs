//! The reranker backend contract and its implementations.
//!
//! The small reranker, the order adjuster, and the large reranker are all
//! just backends with different configs: anything that maps
//! (query, passage window) to a valid [`Ranking`]. Deterministic simulators
//! carry the same contract as remote endpoints, so every pipeline and data
//! factory can run against either.

mod adjuster;
mod remote;
mod scripted;
mod sim;

pub use adjuster::BestSampleAdjuster;
pub use remote::{EndpointConfig, RemoteBackend, RemoteInitError};
pub use scripted::{ScriptLoadError, ScriptedBackend};
pub use sim::{BiasModel, BiasedBackend, IdentityBackend, OracleBackend};

use thiserror::Error;

use crate::core::{Passage, Query, Ranking};

/// Capability descriptor a backend reports about itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendInfo {
    pub name: String,
    pub max_window: usize,
    pub supports_sampling: bool,
}

/// Why a backend call failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendFailure {
    #[error("transport: {0}")]
    Transport(String),
    #[error("timed out after {seconds}s")]
    Timeout { seconds: u64 },
    #[error("retries exhausted after {attempts} attempts: {last}")]
    ExhaustedRetries {
        attempts: u32,
        last: String,
        /// Raw response body of the final attempt, when one was received.
        raw: Option<String>,
    },
    #[error("backend {backend} does not support sampling")]
    SamplingUnsupported { backend: String },
    #[error("window of {n} passages exceeds backend maximum {max}")]
    WindowTooLarge { n: usize, max: usize },
    #[error("scripted trace has no remaining record for query {query_id}")]
    ScriptExhausted { query_id: String },
    #[error("invalid backend input: {0}")]
    InvalidInput(String),
}

/// Sampling failed part-way; the samples obtained so far are kept.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("sampling failed after {} samples: {cause}", partial.len())]
pub struct SamplingError {
    pub partial: Vec<Ranking>,
    pub cause: BackendFailure,
}

impl From<BackendFailure> for SamplingError {
    fn from(cause: BackendFailure) -> Self {
        Self {
            partial: Vec::new(),
            cause,
        }
    }
}

/// Anything that maps (query, passage window) to a valid ranking.
///
/// Implementations must return a permutation of `{1..n}` for `n` input
/// passages, and deterministic backends must return identical output for
/// identical input and seed.
pub trait RerankerBackend: Send + Sync {
    fn info(&self) -> BackendInfo;

    fn rerank(&self, query: &Query, passages: &[Passage]) -> Result<Ranking, BackendFailure>;

    /// Draw `m` ranking samples. Deterministic backends may serve `m <= 1`
    /// by returning their single ranking; more requires sampling support
    /// (temperature > 0 for endpoints, noise for simulators).
    fn sample_rankings(
        &self,
        query: &Query,
        passages: &[Passage],
        m: usize,
        seed: u64,
    ) -> Result<Vec<Ranking>, SamplingError> {
        let _ = seed;
        if m == 0 {
            return Ok(Vec::new());
        }
        if m == 1 {
            return Ok(vec![self.rerank(query, passages)?]);
        }
        Err(BackendFailure::SamplingUnsupported {
            backend: self.info().name,
        }
        .into())
    }
}

pub(crate) fn check_window(info: &BackendInfo, n: usize) -> Result<(), BackendFailure> {
    if n == 0 {
        return Err(BackendFailure::InvalidInput(
            "empty passage window".to_string(),
        ));
    }
    if n > info.max_window {
        return Err(BackendFailure::WindowTooLarge {
            n,
            max: info.max_window,
        });
    }
    Ok(())
}
