//! Bigram dynamic model over tag sequences.
//!
//! Sequences are counted with a virtual START before the first tag and an
//! absorbing END after the last, giving the factorization
//! `p(t_1) * p(t_2|t_1) * ... * p(END|t_l)`. Additive smoothing keeps every
//! transition reachable so the model can drive sampling. A Figure-style
//! transition graph exports to Graphviz DOT.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::TagId;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("tag {tag} out of range 1..={num_tags} in sequence {seq_index}")]
    TagOutOfRange {
        seq_index: usize,
        tag: TagId,
        num_tags: u32,
    },
    #[error("sequence {seq_index} is empty")]
    EmptySequence { seq_index: usize },
    #[error("no sequences to fit")]
    NoSequences,
    #[error("zero-probability step at position {position} (unsmoothed model)")]
    ZeroProbability { position: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(String),
}

/// Successor of a tag: another tag or the absorbing END.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Successor {
    Tag(TagId),
    End,
}

/// Counts plus smoothing. Probabilities are computed on demand as
/// `(count + λ) / (row_total + λ·(num_tags+1))`, with END as the extra
/// column of every transition row. The start distribution ranges over tags
/// only (a sequence is never empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramModel {
    pub num_tags: u32,
    pub smoothing: f64,
    /// START -> tag counts, indexed by tag-1.
    pub start_counts: Vec<f64>,
    /// `trans_counts[from-1][to-1]`, with column `num_tags` for END.
    pub trans_counts: Vec<Vec<f64>>,
}

impl BigramModel {
    /// `p(t_1 = tag)` with smoothing.
    pub fn start_prob(&self, tag: TagId) -> f64 {
        let total: f64 = self.start_counts.iter().sum();
        let n = f64::from(self.num_tags);
        (self.start_counts[(tag - 1) as usize] + self.smoothing)
            / (total + self.smoothing * n)
    }

    /// `p(next | from)` with smoothing; END is the extra column.
    pub fn trans_prob(&self, from: TagId, next: Successor) -> f64 {
        let row = &self.trans_counts[(from - 1) as usize];
        let total: f64 = row.iter().sum();
        let cols = f64::from(self.num_tags) + 1.0;
        let count = match next {
            Successor::Tag(t) => row[(t - 1) as usize],
            Successor::End => row[self.num_tags as usize],
        };
        (count + self.smoothing) / (total + self.smoothing * cols)
    }

    /// The full smoothed start distribution over tags.
    pub fn start_distribution(&self) -> Vec<f64> {
        (1..=self.num_tags).map(|t| self.start_prob(t)).collect()
    }

    /// The full smoothed successor distribution of `from`: tags then END.
    pub fn successor_distribution(&self, from: TagId) -> Vec<f64> {
        let mut row: Vec<f64> = (1..=self.num_tags)
            .map(|t| self.trans_prob(from, Successor::Tag(t)))
            .collect();
        row.push(self.trans_prob(from, Successor::End));
        row
    }
}

/// Accumulate bigram counts over tag sequences.
pub fn fit_bigram(
    sequences: &[Vec<TagId>],
    num_tags: u32,
    smoothing: f64,
) -> Result<BigramModel, DynamicsError> {
    if sequences.is_empty() {
        return Err(DynamicsError::NoSequences);
    }
    let mut start_counts = vec![0.0; num_tags as usize];
    let mut trans_counts = vec![vec![0.0; num_tags as usize + 1]; num_tags as usize];
    for (seq_index, seq) in sequences.iter().enumerate() {
        if seq.is_empty() {
            return Err(DynamicsError::EmptySequence { seq_index });
        }
        for &tag in seq {
            if tag < 1 || tag > num_tags {
                return Err(DynamicsError::TagOutOfRange {
                    seq_index,
                    tag,
                    num_tags,
                });
            }
        }
        start_counts[(seq[0] - 1) as usize] += 1.0;
        for pair in seq.windows(2) {
            trans_counts[(pair[0] - 1) as usize][(pair[1] - 1) as usize] += 1.0;
        }
        trans_counts[(seq[seq.len() - 1] - 1) as usize][num_tags as usize] += 1.0;
    }
    Ok(BigramModel {
        num_tags,
        smoothing,
        start_counts,
        trans_counts,
    })
}

/// `log p(t_1) + Σ log p(t_k|t_{k-1}) + log p(END|t_l)`.
pub fn sequence_log_prob(model: &BigramModel, sequence: &[TagId]) -> Result<f64, DynamicsError> {
    if sequence.is_empty() {
        return Err(DynamicsError::EmptySequence { seq_index: 0 });
    }
    for (i, &tag) in sequence.iter().enumerate() {
        if tag < 1 || tag > model.num_tags {
            return Err(DynamicsError::TagOutOfRange {
                seq_index: i,
                tag,
                num_tags: model.num_tags,
            });
        }
    }
    let mut total = 0.0;
    let mut step = |p: f64, position: usize| -> Result<(), DynamicsError> {
        if p <= 0.0 {
            return Err(DynamicsError::ZeroProbability { position });
        }
        total += p.ln();
        Ok(())
    };
    step(model.start_prob(sequence[0]), 0)?;
    for (i, pair) in sequence.windows(2).enumerate() {
        step(model.trans_prob(pair[0], Successor::Tag(pair[1])), i + 1)?;
    }
    step(
        model.trans_prob(sequence[sequence.len() - 1], Successor::End),
        sequence.len(),
    )?;
    Ok(total)
}

/// The `k` most probable successors of `tag`, descending by probability,
/// ties broken by ascending tag id with END last.
pub fn top_k_next(model: &BigramModel, tag: TagId, k: usize) -> Vec<(Successor, f64)> {
    let mut successors: Vec<(Successor, f64)> = (1..=model.num_tags)
        .map(|t| (Successor::Tag(t), model.trans_prob(tag, Successor::Tag(t))))
        .collect();
    successors.push((Successor::End, model.trans_prob(tag, Successor::End)));
    successors.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("probabilities are finite")
            .then_with(|| order_key(a.0).cmp(&order_key(b.0)))
    });
    successors.truncate(k);
    successors
}

fn order_key(s: Successor) -> u64 {
    match s {
        Successor::Tag(t) => u64::from(t),
        Successor::End => u64::MAX,
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn truncate_chars(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        return s.to_string();
    }
    let cut: String = s.chars().take(max.saturating_sub(1)).collect();
    format!("{cut}…")
}

/// Render the transition graph as Graphviz DOT: each node is a tag with at
/// least one retained edge, labelled with its id and truncated
/// description; edges are each tag's `top_k` successors with probability
/// >= `edge_threshold`, labelled to two decimals.
pub fn export_dot(
    model: &BigramModel,
    descriptions: &dyn Fn(TagId) -> Option<String>,
    edge_threshold: f64,
    top_k: usize,
) -> String {
    const LABEL_CHARS: usize = 60;
    let mut edges: Vec<(TagId, Successor, f64)> = Vec::new();
    for tag in 1..=model.num_tags {
        for (succ, prob) in top_k_next(model, tag, top_k) {
            if prob >= edge_threshold {
                edges.push((tag, succ, prob));
            }
        }
    }
    let mut used: Vec<TagId> = Vec::new();
    let mut uses_end = false;
    for &(from, to, _) in &edges {
        if !used.contains(&from) {
            used.push(from);
        }
        match to {
            Successor::Tag(t) => {
                if !used.contains(&t) {
                    used.push(t);
                }
            }
            Successor::End => uses_end = true,
        }
    }
    used.sort_unstable();

    let mut out = String::from("digraph tag_dynamics {\n");
    out.push_str("    rankdir=LR;\n");
    out.push_str("    node [shape=box];\n");
    for tag in used {
        let label = match descriptions(tag) {
            Some(desc) => format!("Tag {tag}: {}", truncate_chars(&desc, LABEL_CHARS)),
            None => format!("Tag {tag}"),
        };
        let _ = writeln!(out, "    t{tag} [label=\"{}\"];", dot_escape(&label));
    }
    if uses_end {
        out.push_str("    end [label=\"END\" shape=doublecircle];\n");
    }
    for (from, to, prob) in edges {
        let target = match to {
            Successor::Tag(t) => format!("t{t}"),
            Successor::End => "end".to_string(),
        };
        let _ = writeln!(out, "    t{from} -> {target} [label=\"{prob:.2}\"];");
    }
    out.push_str("}\n");
    out
}

/// Persist the model (counts and smoothing) as JSON.
pub fn save_bigram(model: &BigramModel, path: &Path) -> Result<(), DynamicsError> {
    let data = serde_json::to_string_pretty(model).expect("model serializes");
    std::fs::write(path, data).map_err(|source| DynamicsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_bigram(path: &Path) -> Result<BigramModel, DynamicsError> {
    let data = std::fs::read_to_string(path).map_err(|source| DynamicsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&data).map_err(|e| DynamicsError::Malformed(e.to_string()))
}
