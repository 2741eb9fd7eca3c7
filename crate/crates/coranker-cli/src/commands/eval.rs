//! `eval`: score a run file against qrels and print per-query NDCG@k plus
//! the mean, sorted by query id.

use std::path::Path;

use coranker::metrics::MetricReport;

use crate::error::CliError;
use crate::io;

/// Render the report as TSV: one `qid<TAB>ndcg` line per query in id
/// order, then a `mean` line over all scored queries.
pub fn format_report(report: &MetricReport) -> String {
    let mut out = String::new();
    for (qid, value) in &report.per_query {
        out.push_str(&format!("{qid}\t{:.6}\n", value.value));
    }
    out.push_str(&format!("mean\t{:.6}\n", report.mean()));
    out
}

pub fn run(
    run_path: &Path,
    qrels_path: &Path,
    k: usize,
    output: Option<&Path>,
) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::usage("k must be at least 1"));
    }
    let run = io::read_run(run_path)?;
    let qrels = io::read_qrels(qrels_path)?;

    let mut report = MetricReport::new(k);
    let mut unjudged = Vec::new();
    for (qid, entries) in &run {
        if !qrels.contains_query(qid) {
            unjudged.push(qid.clone());
            continue;
        }
        let value = coranker::metrics::ndcg_at_k(
            &qrels,
            qid,
            entries.iter().map(|e| e.passage_id.as_str()),
            k,
        );
        report.insert(qid.clone(), value);
    }
    if !unjudged.is_empty() {
        eprintln!(
            "note: {} run queries have no judgments and were excluded: {}",
            unjudged.len(),
            unjudged.join(", ")
        );
    }
    let zero_ideal = report.zero_ideal_queries();
    if !zero_ideal.is_empty() {
        eprintln!(
            "note: {} queries have no relevant judgments and score 0: {}",
            zero_ideal.len(),
            zero_ideal.join(", ")
        );
    }
    if report.per_query.is_empty() {
        return Err(CliError::io(format!(
            "{}: no run query has judgments in {}",
            run_path.display(),
            qrels_path.display()
        )));
    }

    let text = format_report(&report);
    match output {
        Some(path) => io::write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
