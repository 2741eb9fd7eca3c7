//! Listwise ranking prompt rendering and output parsing.
//!
//! Rendering is deterministic and byte-exact for identical inputs. Parsing
//! must accept arbitrary model text and always produce a valid [`Ranking`]:
//! bracketed integers are extracted left to right, duplicates dropped
//! (keeping the first occurrence), out-of-range ids dropped, and missing ids
//! appended in ascending order so a degenerate output degrades toward the
//! identity permutation. Both `[a] > [b]` and `[a] [b]` separators go
//! through the same extractor.

use std::path::Path;

use thiserror::Error;

use crate::core::{Passage, Query, Ranking};
use crate::defaults;

/// The stock listwise ranking prompt (RankGPT lineage).
pub const DEFAULT_TEMPLATE: &str = include_str!("rank_listwise.txt");

const PASSAGE_MARKER: &str = "{passages}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template is missing the {PASSAGE_MARKER} marker")]
    MissingPassageMarker,
    #[error("failed to read template file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("window of {n} passages exceeds template maximum {max}")]
    WindowTooLarge { n: usize, max: usize },
    #[error("cannot render an empty window")]
    EmptyWindow,
}

/// A prompt template: free text with `{num}` / `{query}` placeholders and a
/// `{passages}` marker where the identifier block goes.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    head: String,
    tail: String,
    /// Largest window this template may render.
    pub max_window: usize,
    /// Per-passage word budget; `None` disables truncation.
    pub word_budget: Option<usize>,
}

impl PromptTemplate {
    /// The default template with stock limits (window 20, 300-word budget).
    pub fn rank_llm() -> Self {
        Self::from_text(DEFAULT_TEMPLATE).expect("bundled template has a passage marker")
    }

    pub fn from_text(text: &str) -> Result<Self, TemplateError> {
        let Some(idx) = text.find(PASSAGE_MARKER) else {
            return Err(TemplateError::MissingPassageMarker);
        };
        Ok(Self {
            head: text[..idx].to_string(),
            tail: text[idx + PASSAGE_MARKER.len()..].to_string(),
            max_window: defaults::WINDOW,
            word_budget: Some(defaults::TRUNCATE_WORDS),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_text(&text)
    }

    pub fn with_max_window(mut self, max_window: usize) -> Self {
        self.max_window = max_window;
        self
    }

    pub fn with_word_budget(mut self, word_budget: Option<usize>) -> Self {
        self.word_budget = word_budget;
        self
    }

    /// Render the message for one window. Emits exactly `n` identifier lines
    /// `[1]`..`[n]` in order; `{num}` and `{query}` are substituted in the
    /// surrounding text only, so passage content can never inject
    /// placeholders.
    pub fn render(&self, query: &Query, passages: &[Passage]) -> Result<String, RenderError> {
        let n = passages.len();
        if n == 0 {
            return Err(RenderError::EmptyWindow);
        }
        if n > self.max_window {
            return Err(RenderError::WindowTooLarge {
                n,
                max: self.max_window,
            });
        }
        let block = passages
            .iter()
            .enumerate()
            .map(|(i, p)| format!("[{}] {}", i + 1, normalize_text(&p.text, self.word_budget)))
            .collect::<Vec<_>>()
            .join("\n");
        let num = n.to_string();
        let substitute =
            |s: &str| s.replace("{num}", &num).replace("{query}", query.text.trim());
        Ok(format!(
            "{}{}{}",
            substitute(&self.head),
            block,
            substitute(&self.tail)
        ))
    }
}

/// Collapse whitespace runs to single spaces and optionally truncate to the
/// first `word_budget` words. Keeps identifier lines single-line.
pub fn normalize_text(text: &str, word_budget: Option<usize>) -> String {
    let words = text.split_whitespace();
    match word_budget {
        Some(budget) => words.take(budget).collect::<Vec<_>>().join(" "),
        None => words.collect::<Vec<_>>().join(" "),
    }
}

/// What [`parse_ranking`] saw and how it repaired the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReport {
    /// Raw model text.
    pub raw: String,
    /// Bracketed integers as extracted, in order, before repair.
    pub extracted: Vec<usize>,
    pub duplicates_dropped: usize,
    pub out_of_range_dropped: usize,
    pub missing_appended: usize,
    /// No usable id survived; the result is the pure identity permutation.
    pub fallback: bool,
    /// Always a valid permutation of `{1..n}`.
    pub ranking: Ranking,
}

/// Parse arbitrary model text into a valid ranking over `n` window slots.
pub fn parse_ranking(raw: &str, n: usize) -> ParseReport {
    let mut extracted = Vec::new();
    let mut out_of_range_dropped = 0usize;

    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j > start && j < bytes.len() && bytes[j] == b']' {
                match raw[start..j].parse::<usize>() {
                    Ok(v) => extracted.push(v),
                    // absurdly long digit runs overflow; treat as out of range
                    Err(_) => out_of_range_dropped += 1,
                }
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }

    let mut seen = vec![false; n];
    let mut duplicates_dropped = 0usize;
    let mut perm = Vec::with_capacity(n);
    for &id in &extracted {
        if id < 1 || id > n {
            out_of_range_dropped += 1;
        } else if seen[id - 1] {
            duplicates_dropped += 1;
        } else {
            seen[id - 1] = true;
            perm.push(id);
        }
    }
    let fallback = perm.is_empty();
    let missing_appended = n - perm.len();
    for id in 1..=n {
        if !seen[id - 1] {
            perm.push(id);
        }
    }

    let ranking = Ranking::new(perm, n).expect("repair always yields a valid permutation");
    ParseReport {
        raw: raw.to_string(),
        extracted,
        duplicates_dropped,
        out_of_range_dropped,
        missing_appended,
        fallback,
        ranking,
    }
}
