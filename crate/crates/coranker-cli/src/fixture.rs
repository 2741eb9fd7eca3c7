//! Deterministic synthetic benchmark: queries, passages, a first-stage run,
//! and graded judgments, all derived from one seed.
//!
//! Judged passages are scattered across the whole candidate depth so a
//! single window cannot see them all and sliding passes have real work to
//! do. Text content is filler; the bundled simulators score from grades.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use coranker::core::{run_entries_for, RunEntry};
use coranker::seeding;
use coranker::{CandidateList, Passage, Qrels, Query};

#[derive(Debug, Clone)]
pub struct Fixture {
    pub queries: Vec<Query>,
    /// (passage id, text) in id order.
    pub corpus: Vec<(String, String)>,
    pub run: Vec<RunEntry>,
    pub qrels: Qrels,
    /// (qid, pid, grade) in emission order, for writing qrels files.
    pub qrels_triples: Vec<(String, String, u32)>,
    pub candidates: Vec<CandidateList>,
}

pub fn generate(seed: u64, n_queries: usize, depth: usize) -> Fixture {
    let mut queries = Vec::new();
    let mut corpus = Vec::new();
    let mut run = Vec::new();
    let mut qrels = Qrels::new();
    let mut qrels_triples = Vec::new();
    let mut candidates = Vec::new();

    for qi in 0..n_queries {
        let qid = format!("sim-{qi:03}");
        let query = Query::new(qid.clone(), format!("synthetic query {qi} about topic {qi}"));
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(seed, qi as u64));

        let mut passages = Vec::with_capacity(depth);
        for pi in 0..depth {
            let pid = format!("{qid}-p{pi:03}");
            let text = format!(
                "synthetic passage {pi} for query {qi} with filler detail {}",
                rng.gen_range(0..1000)
            );
            corpus.push((pid.clone(), text.clone()));
            passages.push(Passage::new(pid, text));
        }

        // Judge a scattered subset; first judged passage always gets the
        // top grade so every query has a relevant document.
        let judged = depth.min(12);
        let mut positions: Vec<usize> = (0..depth).collect();
        positions.shuffle(&mut rng);
        positions.truncate(judged);
        positions.sort_unstable();
        for (j, &pos) in positions.iter().enumerate() {
            let grade = if j == 0 { 3 } else { rng.gen_range(1..=3u32) };
            let pid = passages[pos].id.clone();
            qrels.insert(qid.clone(), pid.clone(), grade);
            qrels_triples.push((qid.clone(), pid, grade));
        }

        let ids: Vec<&str> = passages.iter().map(|p| p.id.as_str()).collect();
        run.extend(run_entries_for(&qid, &ids));
        candidates.push(CandidateList::new(query.clone(), passages).expect("unique synthetic ids"));
        queries.push(query);
    }

    Fixture {
        queries,
        corpus,
        run,
        qrels,
        qrels_triples,
        candidates,
    }
}
