//! Deterministic simulator backends.
//!
//! Simulators have qrels access by construction: they stand in for trained
//! models in tests and desk-scale studies, so they are allowed to peek at
//! the grades. All noise is a pure function of (input, seed).

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::core::{Passage, Qrels, Query, Ranking};
use crate::seeding;

use super::{check_window, BackendFailure, BackendInfo, RerankerBackend, SamplingError};

const SIM_MAX_WINDOW: usize = 1024;

/// Returns its input order unchanged.
#[derive(Debug, Clone, Default)]
pub struct IdentityBackend;

impl IdentityBackend {
    pub fn new() -> Self {
        Self
    }
}

impl RerankerBackend for IdentityBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: "identity".to_string(),
            max_window: SIM_MAX_WINDOW,
            supports_sampling: false,
        }
    }

    fn rerank(&self, _query: &Query, passages: &[Passage]) -> Result<Ranking, BackendFailure> {
        check_window(&self.info(), passages.len())?;
        Ok(Ranking::identity(passages.len()))
    }
}

/// Sorts by qrels grade descending, ties kept in input order.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    qrels: Arc<Qrels>,
}

impl OracleBackend {
    pub fn new(qrels: Arc<Qrels>) -> Self {
        Self { qrels }
    }
}

impl RerankerBackend for OracleBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: "oracle".to_string(),
            max_window: SIM_MAX_WINDOW,
            supports_sampling: false,
        }
    }

    fn rerank(&self, query: &Query, passages: &[Passage]) -> Result<Ranking, BackendFailure> {
        check_window(&self.info(), passages.len())?;
        let mut order: Vec<usize> = (0..passages.len()).collect();
        // stable sort keeps input order for equal grades
        order.sort_by_key(|&i| std::cmp::Reverse(self.qrels.grade(&query.id, &passages[i].id)));
        Ok(Ranking::new(order.iter().map(|&i| i + 1).collect(), passages.len())
            .expect("sorted index list is a permutation"))
    }
}

/// Positional-bias knobs for [`BiasedBackend`]: a per-position penalty
/// (positions beyond the vector get 0) and a gaussian noise scale. With an
/// all-zero penalty and `sigma = 0` the biased backend equals the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasModel {
    pub penalty: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl BiasModel {
    pub fn none() -> Self {
        Self {
            penalty: Vec::new(),
            sigma: 0.0,
            seed: 0,
        }
    }

    /// Constant penalty over an inclusive position range (0-based).
    pub fn mid_list(from: usize, to: usize, penalty: f64) -> Self {
        let mut v = vec![0.0; to + 1];
        for slot in v.iter_mut().take(to + 1).skip(from) {
            *slot = penalty;
        }
        Self {
            penalty: v,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn at(&self, pos: usize) -> f64 {
        self.penalty.get(pos).copied().unwrap_or(0.0)
    }
}

/// Oracle with positional bias: sorts by
/// `grade_i - penalty(input position of i) + noise`, ties by input position.
/// Models a reranker whose output depends on where passages appear in the
/// input, not only on their relevance.
#[derive(Debug, Clone)]
pub struct BiasedBackend {
    qrels: Arc<Qrels>,
    bias: BiasModel,
}

impl BiasedBackend {
    pub fn new(qrels: Arc<Qrels>, bias: BiasModel) -> Self {
        Self { qrels, bias }
    }

    fn input_fingerprint(&self, query: &Query, passages: &[Passage]) -> u64 {
        let ids: Vec<&str> = passages.iter().map(|p| p.id.as_str()).collect();
        seeding::mix(seeding::fnv1a64(query.id.as_bytes()), seeding::fingerprint(&ids))
    }

    fn rank_with_rng(
        &self,
        query: &Query,
        passages: &[Passage],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Ranking {
        let n = passages.len();
        let noise: Vec<f64> = match rng {
            Some(rng) if self.bias.sigma > 0.0 => {
                let normal = Normal::new(0.0, self.bias.sigma).expect("sigma checked positive");
                (0..n).map(|_| normal.sample(rng)).collect()
            }
            _ => vec![0.0; n],
        };
        let scores: Vec<f64> = passages
            .iter()
            .enumerate()
            .map(|(pos, p)| f64::from(self.qrels.grade(&query.id, &p.id)) - self.bias.at(pos) + noise[pos])
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ranking::new(order.iter().map(|&i| i + 1).collect(), n)
            .expect("sorted index list is a permutation")
    }
}

impl RerankerBackend for BiasedBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: "biased".to_string(),
            max_window: SIM_MAX_WINDOW,
            supports_sampling: self.bias.sigma > 0.0,
        }
    }

    fn rerank(&self, query: &Query, passages: &[Passage]) -> Result<Ranking, BackendFailure> {
        check_window(&self.info(), passages.len())?;
        if self.bias.sigma > 0.0 {
            let seed = seeding::mix(self.bias.seed, self.input_fingerprint(query, passages));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(self.rank_with_rng(query, passages, Some(&mut rng)))
        } else {
            Ok(self.rank_with_rng(query, passages, None))
        }
    }

    fn sample_rankings(
        &self,
        query: &Query,
        passages: &[Passage],
        m: usize,
        seed: u64,
    ) -> Result<Vec<Ranking>, SamplingError> {
        check_window(&self.info(), passages.len()).map_err(SamplingError::from)?;
        if m <= 1 {
            return Ok((0..m)
                .map(|_| self.rerank(query, passages))
                .collect::<Result<_, _>>()?);
        }
        if self.bias.sigma <= 0.0 {
            return Err(BackendFailure::SamplingUnsupported {
                backend: self.info().name,
            }
            .into());
        }
        let base = seeding::mix(seed, self.input_fingerprint(query, passages));
        Ok((0..m)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(base, i as u64));
                self.rank_with_rng(query, passages, Some(&mut rng))
            })
            .collect())
    }
}
