//! Sliding-window schedule and pass execution.
//!
//! Windows run from the tail of the list to the head, strictly in order:
//! each window sees the list as mutated by the previous one, which is what
//! lets a relevant tail passage ride the overlap toward the top. The final
//! window start is clamped to 0 so the head is always covered.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendFailure, RerankerBackend};
use crate::core::{apply_ranking, Passage, Query, Ranking};
use crate::defaults;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("step must satisfy 1 <= step <= window (got window={window}, step={step})")]
    InvalidParams { window: usize, step: usize },
    #[error("cannot schedule an empty list")]
    EmptyList,
}

/// Half-open `(start, end)` windows in execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSchedule {
    windows: Vec<(usize, usize)>,
}

impl WindowSchedule {
    pub fn windows(&self) -> &[(usize, usize)] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

pub fn schedule(n: usize, window: usize, step: usize) -> Result<WindowSchedule, ScheduleError> {
    if step < 1 || step > window {
        return Err(ScheduleError::InvalidParams { window, step });
    }
    if n == 0 {
        return Err(ScheduleError::EmptyList);
    }
    if n <= window {
        return Ok(WindowSchedule {
            windows: vec![(0, n)],
        });
    }
    let mut windows = Vec::new();
    let mut start = n - window;
    loop {
        windows.push((start, start + window));
        if start == 0 {
            break;
        }
        start = start.saturating_sub(step);
    }
    Ok(WindowSchedule { windows })
}

#[derive(Debug, Clone)]
pub struct PassOptions {
    pub window: usize,
    pub step: usize,
    /// Substitute identity for a failed window instead of aborting.
    pub lenient: bool,
}

impl Default for PassOptions {
    fn default() -> Self {
        Self {
            window: defaults::WINDOW,
            step: defaults::STEP,
            lenient: false,
        }
    }
}

/// Audit record for one executed window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTrace {
    pub query_id: String,
    pub window_start: usize,
    pub window_end: usize,
    pub perm: Vec<usize>,
    pub latency_ms: u64,
}

#[derive(Debug)]
pub struct PassOutput {
    pub list: Vec<Passage>,
    /// Backend calls attempted, failed ones included.
    pub calls: usize,
    pub trace: Vec<WindowTrace>,
    /// Strict mode only: the failure that aborted the pass. The list then
    /// holds the windows completed before the abort.
    pub failure: Option<BackendFailure>,
    /// Lenient mode only: windows where the backend failed and the input
    /// order was kept.
    pub substituted: usize,
}

impl PassOutput {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn run_pass(
    backend: &dyn RerankerBackend,
    query: &Query,
    list: &[Passage],
    options: &PassOptions,
) -> Result<PassOutput, ScheduleError> {
    let plan = schedule(list.len(), options.window, options.step)?;
    let mut list = list.to_vec();
    let mut output = PassOutput {
        list: Vec::new(),
        calls: 0,
        trace: Vec::new(),
        failure: None,
        substituted: 0,
    };
    for &(start, end) in plan.windows() {
        output.calls += 1;
        let slice = &list[start..end];
        let begun = Instant::now();
        let attempt = backend.rerank(query, slice).and_then(|ranking| {
            apply_ranking(slice, &ranking)
                .map(|reordered| (ranking, reordered))
                .map_err(|e| BackendFailure::InvalidInput(e.to_string()))
        });
        let latency_ms = begun.elapsed().as_millis() as u64;
        match attempt {
            Ok((ranking, reordered)) => {
                list[start..end].clone_from_slice(&reordered);
                output.trace.push(WindowTrace {
                    query_id: query.id.clone(),
                    window_start: start,
                    window_end: end,
                    perm: ranking.into_vec(),
                    latency_ms,
                });
            }
            Err(failure) if options.lenient => {
                tracing::warn!(query = %query.id, start, end, error = %failure, "window failed, keeping input order");
                output.substituted += 1;
                output.trace.push(WindowTrace {
                    query_id: query.id.clone(),
                    window_start: start,
                    window_end: end,
                    perm: Ranking::identity(end - start).into_vec(),
                    latency_ms,
                });
            }
            Err(failure) => {
                output.failure = Some(failure);
                break;
            }
        }
    }
    output.list = list;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BiasModel, BiasedBackend, IdentityBackend, OracleBackend, ScriptedBackend};
    use crate::core::Qrels;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn query() -> Query {
        Query::new("q1", "t")
    }

    fn passages(n: usize) -> Vec<Passage> {
        (0..n)
            .map(|i| Passage::new(format!("d{i}"), "body"))
            .collect()
    }

    fn starts(s: &WindowSchedule) -> Vec<usize> {
        s.windows().iter().map(|&(a, _)| a).collect()
    }

    #[test]
    fn hundred_item_list_takes_nine_windows() {
        let s = schedule(100, 20, 10).unwrap();
        assert_eq!(starts(&s), vec![80, 70, 60, 50, 40, 30, 20, 10, 0]);
        assert!(s.windows().iter().all(|&(a, b)| b - a == 20));
    }

    #[test]
    fn short_list_is_one_window() {
        assert_eq!(schedule(20, 20, 10).unwrap().windows(), &[(0, 20)]);
        assert_eq!(schedule(1, 20, 10).unwrap().windows(), &[(0, 1)]);
    }

    #[test]
    fn last_start_clamps_to_zero() {
        let s = schedule(25, 20, 10).unwrap();
        assert_eq!(s.windows(), &[(5, 25), (0, 20)]);
    }

    #[test]
    fn bad_params_are_rejected() {
        assert_eq!(
            schedule(10, 20, 0).unwrap_err(),
            ScheduleError::InvalidParams { window: 20, step: 0 }
        );
        assert_eq!(
            schedule(10, 5, 6).unwrap_err(),
            ScheduleError::InvalidParams { window: 5, step: 6 }
        );
        assert_eq!(schedule(0, 20, 10).unwrap_err(), ScheduleError::EmptyList);
    }

    #[test]
    fn identity_pass_keeps_order_and_counts_windows() {
        let input = passages(100);
        let out = run_pass(&IdentityBackend::new(), &query(), &input, &PassOptions::default()).unwrap();
        assert_eq!(out.list, input);
        assert_eq!(out.calls, 9);
        assert_eq!(out.trace.len(), 9);
        assert!(out.is_complete());
        assert_eq!(out.trace[0].window_start, 80);
        assert_eq!(out.trace[8].window_start, 0);
    }

    #[test]
    fn relevant_tail_passage_bubbles_to_the_top() {
        let qrels = Arc::new(Qrels::from_triples([("q1", "d99", 3u32)]));
        let out = run_pass(
            &OracleBackend::new(qrels),
            &query(),
            &passages(100),
            &PassOptions::default(),
        )
        .unwrap();
        assert_eq!(out.list[0].id, "d99");
    }

    #[test]
    fn strict_pass_aborts_on_failure_with_partial_list() {
        // two scripted windows, then exhaustion on the third of nine
        let backend = ScriptedBackend::from_steps([
            ("q1", (1..=20).rev().collect::<Vec<_>>()),
            ("q1", (1..=20).collect::<Vec<_>>()),
        ]);
        let out = run_pass(&backend, &query(), &passages(100), &PassOptions::default()).unwrap();
        assert!(matches!(out.failure, Some(BackendFailure::ScriptExhausted { .. })));
        assert_eq!(out.calls, 3);
        assert_eq!(out.trace.len(), 2);
        // first window (80..100) was reversed and nothing later touched it
        assert_eq!(out.list[80].id, "d99");
    }

    #[test]
    fn lenient_pass_substitutes_identity_and_finishes() {
        let backend = ScriptedBackend::from_steps([("q1", (1..=20).rev().collect::<Vec<_>>())]);
        let options = PassOptions {
            lenient: true,
            ..PassOptions::default()
        };
        let out = run_pass(&backend, &query(), &passages(100), &options).unwrap();
        assert!(out.is_complete());
        assert_eq!(out.calls, 9);
        assert_eq!(out.substituted, 8);
        assert_eq!(out.trace.len(), 9);
        assert!(out.trace[1].perm.windows(2).all(|w| w[0] + 1 == w[1]));
    }

    proptest! {
        #[test]
        fn schedule_covers_whole_list(n in 1usize..240, window in 1usize..40, step in 1usize..40) {
            prop_assume!(step <= window);
            let s = schedule(n, window, step).unwrap();
            let windows = s.windows();
            // head and tail covered, widths within bounds, starts strictly decreasing
            prop_assert_eq!(windows.first().unwrap().1, n);
            prop_assert_eq!(windows.last().unwrap().0, 0);
            for &(a, b) in windows {
                prop_assert!(a < b && b <= n && b - a <= window);
            }
            for pair in windows.windows(2) {
                prop_assert!(pair[1].0 < pair[0].0);
                // no gaps: each window at least touches its predecessor
                // (step == window tiles, step < window overlaps)
                prop_assert!(pair[1].1 >= pair[0].0);
            }
        }

        #[test]
        fn pass_output_is_permutation_of_input(
            n in 1usize..80,
            window in 1usize..25,
            step in 1usize..25,
            seed in 0u64..1000,
        ) {
            prop_assume!(step <= window);
            let qrels = Arc::new(Qrels::from_triples(
                (0..n).map(|i| ("q1".to_string(), format!("d{i}"), (i % 4) as u32)),
            ));
            let backend = BiasedBackend::new(
                qrels,
                BiasModel::none().with_sigma(1.0).with_seed(seed),
            );
            let input = passages(n);
            let options = PassOptions { window, step, lenient: false };
            let out = run_pass(&backend, &query(), &input, &options).unwrap();
            prop_assert!(out.is_complete());
            let mut got: Vec<&str> = out.list.iter().map(|p| p.id.as_str()).collect();
            let mut want: Vec<&str> = input.iter().map(|p| p.id.as_str()).collect();
            got.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(got, want);
            prop_assert_eq!(out.calls, schedule(n, window, step).unwrap().len());
        }
    }
}
