//! Document collections: loading, segmentation, validation, persistence.
//!
//! The interchange format is JSONL, one document per line. A record either
//! carries pre-segmented text:
//!
//! ```text
//! {"id": "d1", "meta": {"source": "train"}, "segments": ["first", "second"]}
//! ```
//!
//! or raw text to be segmented at load time per the configured strategy:
//!
//! ```text
//! {"id": "d2", "text": "first paragraph\n\nsecond paragraph"}
//! ```
//!
//! Corpora are immutable after load and safe to share across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("empty corpus file: {path}")]
    EmptyFile { path: String },
    #[error("empty document {id}")]
    EmptyDocument { id: String },
    #[error("empty segment {index} in document {id}")]
    EmptySegment { id: String, index: usize },
    #[error("duplicate document id {id} at line {line}")]
    DuplicateDocument { id: String, line: usize },
    #[error("segment index {k} out of range 1..={len} for document {id}")]
    IndexOutOfRange { id: String, k: usize, len: usize },
    #[error("window size must be even, got {0}")]
    OddWindow(usize),
}

/// One contiguous span of a document. Indices are 1-based and dense.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
}

/// A segmented document plus free-form metadata (source, task name, gold
/// answer when present).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub meta: BTreeMap<String, String>,
    pub segments: Vec<Segment>,
}

impl Document {
    /// Build a document from segment texts, normalizing and validating.
    pub fn new(
        id: impl Into<String>,
        meta: BTreeMap<String, String>,
        texts: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        if texts.is_empty() {
            return Err(CorpusError::EmptyDocument { id });
        }
        let mut segments = Vec::with_capacity(texts.len());
        for (i, raw) in texts.into_iter().enumerate() {
            let text = normalize_whitespace(&raw);
            if text.is_empty() {
                return Err(CorpusError::EmptySegment { id, index: i + 1 });
            }
            segments.push(Segment {
                doc_id: id.clone(),
                index: i + 1,
                text,
            });
        }
        Ok(Document { id, meta, segments })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// An ordered collection of documents. Record order is load order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn num_segments(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// All segments in document order.
    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.documents.iter().flat_map(|d| d.segments.iter())
    }
}

/// How raw `text` records are split into segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentationMode {
    /// Records must carry a `segments` array; `text` records are rejected.
    PreSegmented,
    /// Split on blank lines.
    BlankLine,
    /// Split at lines that open with a step number ("1.", "2)", "Step 3:").
    NumberedStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationStrategy {
    pub mode: SegmentationMode,
    /// Fragments shorter than this merge into the previous segment.
    pub min_chars: usize,
}

impl Default for SegmentationStrategy {
    fn default() -> Self {
        SegmentationStrategy {
            mode: SegmentationMode::PreSegmented,
            min_chars: 1,
        }
    }
}

/// Context window size for the E-step: the total number of neighbouring
/// segments (half before, half after the target).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Limited(usize),
    Unlimited,
}

impl Window {
    /// A limited window must be even: half the neighbours sit on each side.
    pub fn limited(w: usize) -> Result<Self, CorpusError> {
        if !w.is_multiple_of(2) {
            return Err(CorpusError::OddWindow(w));
        }
        Ok(Window::Limited(w))
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        match self {
            Window::Limited(w) if !w.is_multiple_of(2) => Err(CorpusError::OddWindow(*w)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Limited(w) => write!(f, "{w}"),
            Window::Unlimited => write!(f, "unlimited"),
        }
    }
}

/// Collapse runs of spaces/tabs to a single space and trim both ends.
/// Newlines inside the segment are preserved.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_blank = false;
    for ch in text.chars() {
        if ch == ' ' || ch == '\t' {
            if !in_blank {
                out.push(' ');
            }
            in_blank = true;
        } else {
            in_blank = false;
            out.push(ch);
        }
    }
    out.trim().to_string()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    #[serde(default)]
    segments: Option<Vec<String>>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    meta: &'a BTreeMap<String, String>,
    segments: Vec<&'a str>,
}

/// Load a JSONL corpus, segmenting raw-text records per `strategy`.
///
/// Record order is preserved. Errors name the offending line.
pub fn load_corpus(path: &Path, strategy: SegmentationStrategy) -> Result<Corpus, CorpusError> {
    let data = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let corpus = parse_corpus(&data, strategy)?;
    if corpus.documents.is_empty() {
        return Err(CorpusError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(corpus)
}

/// Parse corpus records from an in-memory JSONL string.
pub fn parse_corpus(data: &str, strategy: SegmentationStrategy) -> Result<Corpus, CorpusError> {
    let mut documents = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in data.lines().enumerate() {
        let line_num = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                line: line_num,
                message: e.to_string(),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateDocument {
                id: record.id,
                line: line_num,
            });
        }
        let texts = match (record.segments, record.text) {
            (Some(_), Some(_)) => {
                return Err(CorpusError::MalformedRecord {
                    line: line_num,
                    message: format!("record {} has both segments and text", record.id),
                })
            }
            (None, None) => {
                return Err(CorpusError::MalformedRecord {
                    line: line_num,
                    message: format!("record {} has neither segments nor text", record.id),
                })
            }
            (Some(segments), None) => segments,
            (None, Some(text)) => match strategy.mode {
                SegmentationMode::PreSegmented => {
                    return Err(CorpusError::MalformedRecord {
                        line: line_num,
                        message: format!(
                            "record {} has raw text but the strategy is pre-segmented",
                            record.id
                        ),
                    })
                }
                SegmentationMode::BlankLine => split_blank_line(&text, strategy.min_chars),
                SegmentationMode::NumberedStep => split_numbered(&text, strategy.min_chars),
            },
        };
        documents.push(Document::new(record.id, record.meta, texts)?);
    }
    Ok(Corpus { documents })
}

/// Persist a corpus as JSONL with explicit segment arrays.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    for doc in &corpus.documents {
        let record = OutRecord {
            id: &doc.id,
            meta: &doc.meta,
            segments: doc.segments.iter().map(|s| s.text.as_str()).collect(),
        };
        serde_json::to_writer(&mut out, &record).expect("corpus record serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

fn merge_short(fragments: Vec<String>, min_chars: usize) -> Vec<String> {
    let mut merged: Vec<String> = Vec::new();
    for frag in fragments {
        match merged.last_mut() {
            Some(prev) if frag.chars().count() < min_chars => {
                prev.push('\n');
                prev.push_str(&frag);
            }
            _ => merged.push(frag),
        }
    }
    // A short leading fragment has no previous segment; fold it forward.
    if merged.len() >= 2 && merged[0].chars().count() < min_chars {
        let head = merged.remove(0);
        merged[0] = format!("{head}\n{}", merged[0]);
    }
    merged
}

fn split_blank_line(text: &str, min_chars: usize) -> Vec<String> {
    let mut fragments = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                fragments.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        fragments.push(current.join("\n"));
    }
    merge_short(fragments, min_chars)
}

fn is_step_marker(line: &str) -> bool {
    let trimmed = line.trim_start();
    let rest = trimmed
        .strip_prefix("Step ")
        .or_else(|| trimmed.strip_prefix("step "))
        .unwrap_or(trimmed);
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return false;
    }
    matches!(rest.chars().nth(digits), Some('.' | ')' | ':'))
}

fn split_numbered(text: &str, min_chars: usize) -> Vec<String> {
    let mut fragments = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if is_step_marker(line) && !current.is_empty() {
            fragments.push(current.join("\n"));
            current.clear();
        }
        if !line.trim().is_empty() || !current.is_empty() {
            current.push(line);
        }
    }
    if !current.is_empty() {
        fragments.push(current.join("\n"));
    }
    merge_short(fragments, min_chars)
}

/// The neighbours of segment `k`: up to `W` segments centred on `k` (half on
/// each side), truncated at document boundaries and never including `k`
/// itself. `Window::Unlimited` returns every other segment in order.
pub fn context_window(
    doc: &Document,
    k: usize,
    window: Window,
) -> Result<Vec<&Segment>, CorpusError> {
    let len = doc.len();
    if k == 0 || k > len {
        return Err(CorpusError::IndexOutOfRange {
            id: doc.id.clone(),
            k,
            len,
        });
    }
    window.validate()?;
    let (lo, hi) = match window {
        Window::Unlimited => (1, len),
        Window::Limited(w) => {
            let half = w / 2;
            (k.saturating_sub(half).max(1), (k + half).min(len))
        }
    };
    Ok(doc.segments[lo - 1..hi]
        .iter()
        .filter(|s| s.index != k)
        .collect())
}
