//! Readers and writers for the on-disk dataset formats.
//!
//! Queries are TSV (`qid<TAB>text`), the corpus is JSONL
//! (`{"id": ..., "text": ...}`), runs are six-column TREC
//! (`qid Q0 docid rank score tag`), and qrels are the four-column graded
//! form (`qid 0 docid grade`). All errors carry file and line context.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use coranker::{CandidateList, Passage, Qrels, Query};
use coranker::core::RunEntry;

use crate::error::CliError;

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn data_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::io(format!("{}:{line}: {msg}", path.display()))
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>, CliError> {
    let mut queries = Vec::new();
    let mut seen = HashMap::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((qid, text)) = line.split_once('\t') else {
            return Err(data_err(path, idx + 1, "expected qid<TAB>text"));
        };
        if seen.insert(qid.to_string(), ()).is_some() {
            return Err(data_err(path, idx + 1, format!("duplicate query id {qid}")));
        }
        queries.push(Query::new(qid, text));
    }
    if queries.is_empty() {
        return Err(CliError::io(format!("{}: no queries", path.display())));
    }
    Ok(queries)
}

pub fn write_queries(path: &Path, queries: &[Query]) -> Result<(), CliError> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&format!("{}\t{}\n", q.id, q.text));
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusDoc {
    id: String,
    text: String,
}

pub fn read_corpus(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let mut corpus = HashMap::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: CorpusDoc =
            serde_json::from_str(line).map_err(|e| data_err(path, idx + 1, e))?;
        if corpus.insert(doc.id.clone(), doc.text).is_some() {
            return Err(data_err(path, idx + 1, format!("duplicate passage id {}", doc.id)));
        }
    }
    if corpus.is_empty() {
        return Err(CliError::io(format!("{}: no passages", path.display())));
    }
    Ok(corpus)
}

pub fn write_corpus(path: &Path, docs: &[(String, String)]) -> Result<(), CliError> {
    let mut out = String::new();
    for (id, text) in docs {
        let doc = CorpusDoc { id: id.clone(), text: text.clone() };
        out.push_str(&serde_json::to_string(&doc).expect("corpus doc serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Run entries grouped per query in first-seen order, each group sorted by
/// rank and checked for contiguous ranks `1..=K` and unique passage ids.
pub fn read_run(path: &Path) -> Result<Vec<(String, Vec<RunEntry>)>, CliError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<RunEntry>> = HashMap::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(data_err(
                path,
                idx + 1,
                format!("expected 6 columns (qid Q0 docid rank score tag), got {}", cols.len()),
            ));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| data_err(path, idx + 1, format!("bad rank {:?}", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| data_err(path, idx + 1, format!("bad score {:?}", cols[4])))?;
        let qid = cols[0].to_string();
        if !groups.contains_key(&qid) {
            order.push(qid.clone());
        }
        groups.entry(qid).or_default().push(RunEntry {
            query_id: cols[0].to_string(),
            passage_id: cols[2].to_string(),
            rank,
            score,
        });
    }
    if order.is_empty() {
        return Err(CliError::io(format!("{}: run file has no entries", path.display())));
    }
    let mut out = Vec::with_capacity(order.len());
    for qid in order {
        let mut entries = groups.remove(&qid).expect("group exists");
        entries.sort_by_key(|e| e.rank);
        let mut ids = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            if entry.rank != i + 1 {
                return Err(CliError::io(format!(
                    "{}: query {qid}: ranks are not contiguous from 1 (found {} at position {})",
                    path.display(),
                    entry.rank,
                    i + 1
                )));
            }
            if ids.insert(entry.passage_id.clone(), ()).is_some() {
                return Err(CliError::io(format!(
                    "{}: query {qid}: duplicate passage {}",
                    path.display(),
                    entry.passage_id
                )));
            }
        }
        out.push((qid, entries));
    }
    Ok(out)
}

pub fn format_run(entries: &[RunEntry], tag: &str) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{} Q0 {} {} {} {}\n",
            e.query_id, e.passage_id, e.rank, e.score, tag
        ));
    }
    out
}

pub fn write_run(path: &Path, entries: &[RunEntry], tag: &str) -> Result<(), CliError> {
    fs::write(path, format_run(entries, tag))
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn read_qrels(path: &Path) -> Result<Qrels, CliError> {
    let mut qrels = Qrels::new();
    let mut any = false;
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(data_err(
                path,
                idx + 1,
                format!("expected 4 columns (qid 0 docid grade), got {}", cols.len()),
            ));
        }
        let grade: u32 = cols[3]
            .parse()
            .map_err(|_| data_err(path, idx + 1, format!("bad grade {:?}", cols[3])))?;
        qrels.insert(cols[0], cols[2], grade);
        any = true;
    }
    if !any {
        return Err(CliError::io(format!("{}: no judgments", path.display())));
    }
    Ok(qrels)
}

pub fn write_qrels(path: &Path, triples: &[(String, String, u32)]) -> Result<(), CliError> {
    let mut out = String::new();
    for (qid, pid, grade) in triples {
        out.push_str(&format!("{qid} 0 {pid} {grade}\n"));
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Join queries, corpus, and first-stage run into per-query candidate
/// lists, keeping the run's query order and taking the top `depth` ranks.
/// Returns the lists plus the count of run queries dropped for having no
/// query text.
pub fn assemble_candidates(
    queries: &[Query],
    corpus: &HashMap<String, String>,
    run: &[(String, Vec<RunEntry>)],
    depth: usize,
) -> Result<(Vec<CandidateList>, usize), CliError> {
    let text_of: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut lists = Vec::new();
    let mut dropped = 0usize;
    for (qid, entries) in run {
        let Some(query) = text_of.get(qid.as_str()) else {
            dropped += 1;
            continue;
        };
        let mut passages = Vec::new();
        for entry in entries.iter().take(depth) {
            let Some(text) = corpus.get(&entry.passage_id) else {
                return Err(CliError::io(format!(
                    "query {qid}: passage {} is in the run but not in the corpus",
                    entry.passage_id
                )));
            };
            passages.push(Passage::new(entry.passage_id.clone(), text.clone()));
        }
        let list = CandidateList::new((*query).clone(), passages)
            .map_err(|e| CliError::io(format!("query {qid}: {e}")))?;
        lists.push(list);
    }
    if lists.is_empty() {
        return Err(CliError::io(
            "no run query matched the queries file".to_string(),
        ));
    }
    Ok((lists, dropped))
}

pub fn create_output_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Serialize records as JSONL through one buffered writer.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}
