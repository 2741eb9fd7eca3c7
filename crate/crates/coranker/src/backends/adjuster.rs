//! Order adjuster built from sampling plus reward scoring.
//!
//! Stands in for a trained adjuster model: draw candidate orderings from a
//! base backend, score each by feeding it to the large reranker, and emit
//! the ordering that scored best. With the identity candidate included the
//! adjusted pipeline can never do worse per query than leaving the input
//! order alone, which is the floor the strategy comparisons rely on.

use std::sync::Arc;

use crate::core::{apply_ranking, Passage, Qrels, Query, Ranking};
use crate::metrics::reward;
use crate::seeding;
use crate::defaults;

use super::{check_window, BackendFailure, BackendInfo, RerankerBackend};

/// Picks the best of `samples` orderings drawn from `base`, judged by the
/// reward the `llr` backend achieves when shown each ordering.
pub struct BestSampleAdjuster {
    base: Arc<dyn RerankerBackend>,
    llr: Arc<dyn RerankerBackend>,
    qrels: Arc<Qrels>,
    samples: usize,
    seed: u64,
    include_identity: bool,
    metric_k: usize,
}

impl BestSampleAdjuster {
    pub fn new(
        base: Arc<dyn RerankerBackend>,
        llr: Arc<dyn RerankerBackend>,
        qrels: Arc<Qrels>,
    ) -> Self {
        Self {
            base,
            llr,
            qrels,
            samples: defaults::S3_SAMPLES,
            seed: defaults::SEED,
            include_identity: true,
            metric_k: defaults::METRIC_K,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_metric_k(mut self, metric_k: usize) -> Self {
        self.metric_k = metric_k;
        self
    }

    /// Drop the identity candidate; the adjuster then only considers base
    /// samples and loses its no-regression floor.
    pub fn without_identity_floor(mut self) -> Self {
        self.include_identity = false;
        self
    }

    fn candidates(
        &self,
        query: &Query,
        passages: &[Passage],
    ) -> Result<Vec<Ranking>, BackendFailure> {
        let mut out = Vec::new();
        if self.include_identity {
            out.push(Ranking::identity(passages.len()));
        }
        if self.samples > 0 {
            let seed = seeding::mix(self.seed, seeding::fnv1a64(query.id.as_bytes()));
            match self.base.sample_rankings(query, passages, self.samples, seed) {
                Ok(samples) => out.extend(samples),
                Err(err) => match err.cause {
                    // deterministic base: fall back to its single ranking
                    BackendFailure::SamplingUnsupported { .. } => {
                        out.push(self.base.rerank(query, passages)?)
                    }
                    cause => return Err(cause),
                },
            }
        }
        if out.is_empty() {
            out.push(self.base.rerank(query, passages)?);
        }
        Ok(out)
    }
}

impl RerankerBackend for BestSampleAdjuster {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: format!("best-of-{}:{}", self.samples, self.base.info().name),
            max_window: self.base.info().max_window.min(self.llr.info().max_window),
            supports_sampling: false,
        }
    }

    fn rerank(&self, query: &Query, passages: &[Passage]) -> Result<Ranking, BackendFailure> {
        check_window(&self.info(), passages.len())?;
        let candidates = self.candidates(query, passages)?;
        let mut best: Option<(f64, Ranking)> = None;
        for ranking in candidates {
            let ordering = apply_ranking(passages, &ranking)
                .map_err(|e| BackendFailure::InvalidInput(e.to_string()))?;
            let outcome = reward(self.llr.as_ref(), &self.qrels, query, &ordering, self.metric_k)
                .map_err(|e| e.source)?;
            // strict greater-than keeps the first candidate on ties
            if best.as_ref().is_none_or(|(v, _)| outcome.value > *v) {
                best = Some((outcome.value, ranking));
            }
        }
        Ok(best.expect("candidates is non-empty").1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BiasModel, BiasedBackend, IdentityBackend, OracleBackend};
    use crate::metrics::ndcg_at_k;

    fn fixture() -> (Query, Vec<Passage>, Arc<Qrels>) {
        let query = Query::new("q1", "t");
        let passages: Vec<Passage> = (0..20)
            .map(|i| Passage::new(format!("d{i}"), "body"))
            .collect();
        // ascending grades, so the input order is the worst ordering
        let qrels = Arc::new(Qrels::from_triples(
            (0..10u32).map(|i| ("q1".to_string(), format!("d{i}"), i + 1)),
        ));
        (query, passages, qrels)
    }

    #[test]
    fn identity_floor_never_loses_to_unadjusted_input() {
        let (query, passages, qrels) = fixture();
        // large model that buries whatever lands mid-list in its input
        let llr: Arc<dyn RerankerBackend> = Arc::new(BiasedBackend::new(
            qrels.clone(),
            BiasModel::mid_list(8, 14, 100.0),
        ));
        let base: Arc<dyn RerankerBackend> = Arc::new(BiasedBackend::new(
            qrels.clone(),
            BiasModel::none().with_sigma(2.0).with_seed(5),
        ));
        let adjuster = BestSampleAdjuster::new(base, llr.clone(), qrels.clone()).with_samples(16);

        let adjusted = adjuster.rerank(&query, &passages).unwrap();
        let adjusted_reward = reward(
            llr.as_ref(),
            &qrels,
            &query,
            &apply_ranking(&passages, &adjusted).unwrap(),
            10,
        )
        .unwrap();
        let unadjusted_reward = reward(llr.as_ref(), &qrels, &query, &passages, 10).unwrap();
        assert!(adjusted_reward.value >= unadjusted_reward.value);
    }

    #[test]
    fn deterministic_base_falls_back_to_single_ranking() {
        let (query, passages, qrels) = fixture();
        let llr: Arc<dyn RerankerBackend> = Arc::new(OracleBackend::new(qrels.clone()));
        let base: Arc<dyn RerankerBackend> = Arc::new(IdentityBackend::new());
        let adjuster = BestSampleAdjuster::new(base, llr, qrels.clone()).with_samples(8);
        let ranking = adjuster.rerank(&query, &passages).unwrap();
        // oracle downstream fixes any order, so the identity candidate ties
        // and wins
        assert!(ranking.is_identity());
        let final_ids: Vec<String> = apply_ranking(&passages, &ranking)
            .unwrap()
            .iter()
            .map(|p| p.id.clone())
            .collect();
        let v = ndcg_at_k(&qrels, "q1", final_ids.iter().map(String::as_str), 10);
        assert!(v.value < 1.0, "identity order itself is not perfect");
    }

    #[test]
    fn repeat_calls_are_deterministic() {
        let (query, passages, qrels) = fixture();
        let llr: Arc<dyn RerankerBackend> = Arc::new(BiasedBackend::new(
            qrels.clone(),
            BiasModel::mid_list(5, 12, 50.0),
        ));
        let base: Arc<dyn RerankerBackend> = Arc::new(BiasedBackend::new(
            qrels.clone(),
            BiasModel::none().with_sigma(1.0).with_seed(11),
        ));
        let adjuster = BestSampleAdjuster::new(base, llr, qrels).with_samples(8).with_seed(3);
        let a = adjuster.rerank(&query, &passages).unwrap();
        let b = adjuster.rerank(&query, &passages).unwrap();
        assert_eq!(a, b);
    }
}
