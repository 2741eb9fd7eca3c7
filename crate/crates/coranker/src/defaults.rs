//! Default hyperparameters. CLI configs inherit all of these, so a config
//! with nothing but file paths runs the standard setup without flags.

/// Candidate list depth N (first-stage top-100).
pub const DEPTH: usize = 100;
/// Sliding window size w.
pub const WINDOW: usize = 20;
/// Sliding step size s.
pub const STEP: usize = 10;
/// Condensed list handed to the adjuster and large reranker.
pub const TOP_K: usize = 20;
/// Metric cutoff k for NDCG@k.
pub const METRIC_K: usize = 10;
/// Max teacher iterations M for gold-ranking construction.
pub const HRC_MAX_ITERATIONS: usize = 5;
/// Reward-gap threshold mu for preference-pair selection.
pub const S3_MARGIN: f64 = 0.4;
/// Samples per query m for preference-pair generation. Not pinned by the
/// source method description; 8 is a working default and is recorded in
/// every dataset's provenance header.
pub const S3_SAMPLES: usize = 8;
/// DPO beta for the numeric loss utility.
pub const DPO_BETA: f64 = 0.4;
/// Sampling temperature for preference generation against live endpoints.
pub const SAMPLING_TEMPERATURE: f64 = 0.7;
/// Per-passage word budget when rendering prompts.
pub const TRUNCATE_WORDS: usize = 300;
/// Bounded in-flight requests per endpoint.
pub const MAX_IN_FLIGHT: usize = 4;
/// Endpoint retry attempts (exponential backoff).
pub const RETRY_ATTEMPTS: u32 = 3;
/// Base backoff between endpoint retries, milliseconds.
pub const RETRY_BACKOFF_MS: u64 = 500;
/// Endpoint request timeout, seconds.
pub const REQUEST_TIMEOUT_SECS: u64 = 60;
/// Endpoint max output tokens (a 20-id ranking is well under this).
pub const MAX_OUTPUT_TOKENS: u32 = 512;
/// Query-level concurrency limit.
pub const CONCURRENCY: usize = 4;
/// RNG seed when none is configured.
pub const SEED: u64 = 42;
