//! Classical PLSA fitted by numerical EM.
//!
//! Documents are bags of words; the model is the mixture
//! `p(w|d) = sum_t p(t|d) p(w|t)`, fitted by alternating the exact
//! posterior `p(t|w,d)` with the closed-form M-step until the
//! log-likelihood gain drops below tolerance. This is the verifiable
//! numerical baseline next to the LLM-driven EM in [`crate::flsa`], and
//! its E/M semantics are what that module generalizes.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

/// Probability floor applied before logs and divisions during fitting.
/// PLSA EM keeps zeros once created; the floor avoids NaN cascades.
const PROB_FLOOR: f64 = 1e-12;

/// Default absolute likelihood-gain tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 200;

#[derive(Debug, Error)]
pub enum PlsaError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate posterior for document {doc}, word {word}: zero denominator")]
    DegeneratePosterior { doc: usize, word: usize },
    #[error("word {word:?} has zero probability under every topic")]
    ZeroProbabilityWord { word: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(String),
}

/// Bag-of-words corpus: dense vocabulary plus per-document sparse counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowCorpus {
    /// Index -> word.
    pub vocab: Vec<String>,
    /// Per document: (word index, count), count >= 1.
    pub counts: Vec<Vec<(usize, f64)>>,
}

impl BowCorpus {
    /// Build from token lists; vocabulary in first-seen order.
    pub fn from_tokens<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self, PlsaError> {
        let mut vocab = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut counts = Vec::with_capacity(docs.len());
        for (d, tokens) in docs.iter().enumerate() {
            if tokens.is_empty() {
                return Err(PlsaError::Config(format!("document {d} has no tokens")));
            }
            let mut doc: BTreeMap<usize, f64> = BTreeMap::new();
            for token in tokens {
                let token = token.as_ref();
                let w = *index.entry(token.to_string()).or_insert_with(|| {
                    vocab.push(token.to_string());
                    vocab.len() - 1
                });
                *doc.entry(w).or_insert(0.0) += 1.0;
            }
            counts.push(doc.into_iter().collect());
        }
        if vocab.is_empty() {
            return Err(PlsaError::Config("empty vocabulary".into()));
        }
        Ok(BowCorpus { vocab, counts })
    }

    /// Lowercased whitespace tokenization of every segment, one bag per
    /// document.
    pub fn from_corpus(corpus: &Corpus) -> Result<Self, PlsaError> {
        let docs: Vec<Vec<String>> = corpus
            .documents
            .iter()
            .map(|d| {
                d.segments
                    .iter()
                    .flat_map(|s| s.text.split_whitespace())
                    .map(|t| t.to_lowercase())
                    .collect()
            })
            .collect();
        Self::from_tokens(&docs)
    }

    pub fn num_docs(&self) -> usize {
        self.counts.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// Dense PLSA parameters. Rows are probability distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsaModel {
    pub num_topics: usize,
    /// `p_t_given_d[d][t]`
    pub p_t_given_d: Vec<Vec<f64>>,
    /// `p_w_given_t[t][w]`
    pub p_w_given_t: Vec<Vec<f64>>,
}

fn normalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

/// Floor entries that fell below `PROB_FLOOR`, renormalizing only if a
/// floor actually fired so untouched rows stay bit-identical. Applied by
/// the fit loop before the next round of logs and divisions; the M-step
/// itself keeps the exact zeros the closed form produces.
fn guard_model(model: &mut PlsaModel) {
    for row in model
        .p_t_given_d
        .iter_mut()
        .chain(model.p_w_given_t.iter_mut())
    {
        if row.iter().any(|&v| v < PROB_FLOOR) {
            for v in row.iter_mut() {
                *v = v.max(PROB_FLOOR);
            }
            normalize(row);
        }
    }
}

/// Random initialization: each row drawn from a symmetric Dirichlet(1).
/// Deterministic given the seed.
pub fn plsa_init(corpus: &BowCorpus, num_topics: usize, seed: u64) -> Result<PlsaModel, PlsaError> {
    if num_topics < 1 {
        return Err(PlsaError::Config(format!(
            "num_topics must be >= 1, got {num_topics}"
        )));
    }
    if corpus.vocab.is_empty() {
        return Err(PlsaError::Config("empty vocabulary".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Dirichlet(1,...,1) == normalized iid Exp(1) draws.
    let mut dirichlet_row = |n: usize| -> Vec<f64> {
        let mut row: Vec<f64> = (0..n)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        normalize(&mut row);
        row
    };
    let p_t_given_d = (0..corpus.num_docs())
        .map(|_| dirichlet_row(num_topics))
        .collect();
    let p_w_given_t = (0..num_topics)
        .map(|_| dirichlet_row(corpus.vocab_size()))
        .collect();
    Ok(PlsaModel {
        num_topics,
        p_t_given_d,
        p_w_given_t,
    })
}

/// The E-step posterior `p(t|w,d) = p(t|d)p(w|t) / sum_t' p(t'|d)p(w|t')`.
pub fn plsa_posterior(model: &PlsaModel, d: usize, w: usize) -> Result<Vec<f64>, PlsaError> {
    let mut post: Vec<f64> = (0..model.num_topics)
        .map(|t| model.p_t_given_d[d][t] * model.p_w_given_t[t][w])
        .collect();
    let denom: f64 = post.iter().sum();
    if denom <= 0.0 {
        return Err(PlsaError::DegeneratePosterior { doc: d, word: w });
    }
    for v in &mut post {
        *v /= denom;
    }
    Ok(post)
}

/// Posteriors for every (document, word) pair with a nonzero count,
/// aligned with the corpus' sparse structure.
pub fn compute_posteriors(
    model: &PlsaModel,
    corpus: &BowCorpus,
) -> Result<Vec<Vec<Vec<f64>>>, PlsaError> {
    corpus
        .counts
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            doc.iter()
                .map(|&(w, _)| plsa_posterior(model, d, w))
                .collect()
        })
        .collect()
}

/// Closed-form M-step: `p(w|t) ∝ Σ_d n(d,w)·p(t|w,d)` and
/// `p(t|d) ∝ Σ_w n(d,w)·p(t|w,d)`.
///
/// A topic that accumulates zero total word mass is re-seeded with a
/// uniform word row (logged) so EM can continue.
pub fn plsa_m_step(corpus: &BowCorpus, posteriors: &[Vec<Vec<f64>>]) -> PlsaModel {
    let num_topics = posteriors
        .iter()
        .flat_map(|d| d.iter())
        .map(Vec::len)
        .next()
        .expect("posteriors non-empty");
    let vocab_size = corpus.vocab_size();
    let mut p_t_given_d = vec![vec![0.0; num_topics]; corpus.num_docs()];
    let mut p_w_given_t = vec![vec![0.0; vocab_size]; num_topics];
    for (d, doc) in corpus.counts.iter().enumerate() {
        for (i, &(w, n)) in doc.iter().enumerate() {
            for t in 0..num_topics {
                let mass = n * posteriors[d][i][t];
                p_t_given_d[d][t] += mass;
                p_w_given_t[t][w] += mass;
            }
        }
    }
    for row in &mut p_t_given_d {
        normalize(row);
    }
    for (t, row) in p_w_given_t.iter_mut().enumerate() {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            log::warn!("topic {t} lost all word mass; re-seeding uniformly");
            row.iter_mut().for_each(|v| *v = 1.0 / vocab_size as f64);
        } else {
            normalize(row);
        }
    }
    PlsaModel {
        num_topics,
        p_t_given_d,
        p_w_given_t,
    }
}

/// The objective `Σ_{d,w} n(d,w) · log Σ_t p(t|d)p(w|t)`. Always <= 0.
pub fn plsa_log_likelihood(model: &PlsaModel, corpus: &BowCorpus) -> Result<f64, PlsaError> {
    let mut total = 0.0;
    for (d, doc) in corpus.counts.iter().enumerate() {
        for &(w, n) in doc {
            let p: f64 = (0..model.num_topics)
                .map(|t| model.p_t_given_d[d][t] * model.p_w_given_t[t][w])
                .sum();
            if p <= 0.0 {
                return Err(PlsaError::ZeroProbabilityWord {
                    word: corpus.vocab[w].clone(),
                });
            }
            total += n * p.ln();
        }
    }
    Ok(total)
}

/// A fitted model plus its per-iteration likelihood trace. `trace[0]` is
/// the likelihood of the initial model; one entry follows per EM
/// iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlsaFit {
    pub model: PlsaModel,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

/// Run EM to convergence: stop at `max_iters` or when the likelihood gain
/// drops below `tol`.
pub fn plsa_fit(
    corpus: &BowCorpus,
    num_topics: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<PlsaFit, PlsaError> {
    if max_iters < 1 {
        return Err(PlsaError::Config("max_iters must be >= 1".into()));
    }
    let mut model = plsa_init(corpus, num_topics, seed)?;
    let mut trace = vec![plsa_log_likelihood(&model, corpus)?];
    let mut iterations = 0;
    for _ in 0..max_iters {
        let posteriors = compute_posteriors(&model, corpus)?;
        model = plsa_m_step(corpus, &posteriors);
        guard_model(&mut model);
        let ll = plsa_log_likelihood(&model, corpus)?;
        let gain = ll - trace.last().expect("trace non-empty");
        trace.push(ll);
        iterations += 1;
        if gain < tol {
            break;
        }
    }
    Ok(PlsaFit {
        model,
        trace,
        iterations,
        seed,
    })
}

#[derive(Serialize, Deserialize)]
struct PersistedPlsa {
    vocab: Vec<String>,
    num_topics: usize,
    p_t_given_d: Vec<Vec<f64>>,
    p_w_given_t: Vec<Vec<f64>>,
    seed: u64,
    iterations: usize,
    final_log_likelihood: f64,
}

/// Persist a fit as JSON together with the vocabulary and fit metadata.
pub fn save_plsa(fit: &PlsaFit, vocab: &[String], path: &Path) -> Result<(), PlsaError> {
    let persisted = PersistedPlsa {
        vocab: vocab.to_vec(),
        num_topics: fit.model.num_topics,
        p_t_given_d: fit.model.p_t_given_d.clone(),
        p_w_given_t: fit.model.p_w_given_t.clone(),
        seed: fit.seed,
        iterations: fit.iterations,
        final_log_likelihood: *fit.trace.last().expect("trace non-empty"),
    };
    let data = serde_json::to_string_pretty(&persisted).expect("model serializes");
    std::fs::write(path, data).map_err(|source| PlsaError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a persisted model (vocabulary and parameters).
pub fn load_plsa(path: &Path) -> Result<(Vec<String>, PlsaModel), PlsaError> {
    let data = std::fs::read_to_string(path).map_err(|source| PlsaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let persisted: PersistedPlsa =
        serde_json::from_str(&data).map_err(|e| PlsaError::Malformed(e.to_string()))?;
    Ok((
        persisted.vocab,
        PlsaModel {
            num_topics: persisted.num_topics,
            p_t_given_d: persisted.p_t_given_d,
            p_w_given_t: persisted.p_w_given_t,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus() -> BowCorpus {
        BowCorpus::from_tokens(&[
            vec!["a", "a", "b"],
            vec!["b", "c"],
            vec!["c", "c", "d"],
        ])
        .unwrap()
    }

    fn assert_rows_normalized(model: &PlsaModel, tol: f64) {
        for row in model.p_t_given_d.iter().chain(model.p_w_given_t.iter()) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < tol, "row sums to {sum}");
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn init_is_deterministic_and_normalized() {
        let corpus = tiny_corpus();
        let a = plsa_init(&corpus, 2, 7).unwrap();
        let b = plsa_init(&corpus, 2, 7).unwrap();
        assert_eq!(a, b);
        assert_rows_normalized(&a, 1e-12);
        let c = plsa_init(&corpus, 2, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_topic_init_is_certain() {
        let corpus = tiny_corpus();
        let model = plsa_init(&corpus, 1, 0).unwrap();
        assert!(model.p_t_given_d.iter().all(|row| row == &vec![1.0]));
    }

    #[test]
    fn invalid_topic_count_rejected() {
        let corpus = tiny_corpus();
        assert!(matches!(
            plsa_init(&corpus, 0, 0),
            Err(PlsaError::Config(_))
        ));
    }

    #[test]
    fn posterior_single_topic_is_point_mass() {
        let corpus = tiny_corpus();
        let model = plsa_init(&corpus, 1, 0).unwrap();
        assert_eq!(plsa_posterior(&model, 0, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn posterior_symmetry() {
        let model = PlsaModel {
            num_topics: 2,
            p_t_given_d: vec![vec![0.5, 0.5]],
            p_w_given_t: vec![vec![0.2, 0.8], vec![0.2, 0.8]],
        };
        let post = plsa_posterior(&model, 0, 0).unwrap();
        assert!((post[0] - 0.5).abs() < 1e-12);
        assert!((post[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn posterior_hand_evaluated() {
        // p(t|d) = [0.9, 0.1]; p(w|t1) = 0.1, p(w|t2) = 0.9
        // posterior = 0.09 / (0.09 + 0.09) = 0.5 each.
        let model = PlsaModel {
            num_topics: 2,
            p_t_given_d: vec![vec![0.9, 0.1]],
            p_w_given_t: vec![vec![0.1, 0.9], vec![0.9, 0.1]],
        };
        let post = plsa_posterior(&model, 0, 0).unwrap();
        assert!((post[0] - 0.5).abs() < 1e-12);
        assert!((post[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn posterior_zero_denominator_errors() {
        let model = PlsaModel {
            num_topics: 2,
            p_t_given_d: vec![vec![1.0, 0.0]],
            p_w_given_t: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        assert!(matches!(
            plsa_posterior(&model, 0, 0),
            Err(PlsaError::DegeneratePosterior { doc: 0, word: 0 })
        ));
    }

    #[test]
    fn m_step_point_mass_concentrates() {
        let corpus = tiny_corpus();
        let point = |_: usize| vec![1.0, 0.0];
        let posteriors: Vec<Vec<Vec<f64>>> = corpus
            .counts
            .iter()
            .map(|doc| doc.iter().map(|&(w, _)| point(w)).collect())
            .collect();
        let model = plsa_m_step(&corpus, &posteriors);
        for row in &model.p_t_given_d {
            assert!((row[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn m_step_count_normalization() {
        // Single doc "a a b", one topic: p(w|t) = {a: 2/3, b: 1/3}.
        let corpus = BowCorpus::from_tokens(&[vec!["a", "a", "b"]]).unwrap();
        let posteriors = vec![vec![vec![1.0], vec![1.0]]];
        let model = plsa_m_step(&corpus, &posteriors);
        assert!((model.p_w_given_t[0][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((model.p_w_given_t[0][1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn m_step_disjoint_posteriors_give_disjoint_supports() {
        // Docs over disjoint vocabularies, separated point-mass posteriors.
        let corpus = BowCorpus::from_tokens(&[vec!["a", "b"], vec!["c", "d"]]).unwrap();
        let posteriors = vec![
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ];
        let model = plsa_m_step(&corpus, &posteriors);
        assert_eq!(model.p_w_given_t[0][2], 0.0);
        assert_eq!(model.p_w_given_t[0][3], 0.0);
        assert_eq!(model.p_w_given_t[1][0], 0.0);
        assert_eq!(model.p_w_given_t[1][1], 0.0);
    }

    #[test]
    fn log_likelihood_certain_event_is_zero() {
        let corpus = BowCorpus::from_tokens(&[vec!["a"]]).unwrap();
        let model = PlsaModel {
            num_topics: 1,
            p_t_given_d: vec![vec![1.0]],
            p_w_given_t: vec![vec![1.0]],
        };
        assert_eq!(plsa_log_likelihood(&model, &corpus).unwrap(), 0.0);
    }

    #[test]
    fn log_likelihood_hand_evaluated() {
        let corpus = BowCorpus::from_tokens(&[vec!["a", "b"]]).unwrap();
        let model = PlsaModel {
            num_topics: 1,
            p_t_given_d: vec![vec![1.0]],
            p_w_given_t: vec![vec![0.5, 0.5]],
        };
        let ll = plsa_log_likelihood(&model, &corpus).unwrap();
        assert!((ll - 2.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_zero_word_errors() {
        let corpus = BowCorpus::from_tokens(&[vec!["a", "b"]]).unwrap();
        let model = PlsaModel {
            num_topics: 1,
            p_t_given_d: vec![vec![1.0]],
            p_w_given_t: vec![vec![1.0, 0.0]],
        };
        assert!(matches!(
            plsa_log_likelihood(&model, &corpus),
            Err(PlsaError::ZeroProbabilityWord { .. })
        ));
    }

    #[test]
    fn fit_trace_is_monotone_and_deterministic() {
        let corpus = tiny_corpus();
        let fit = plsa_fit(&corpus, 2, 50, DEFAULT_TOL, 3).unwrap();
        for pair in fit.trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9, "trace decreased: {pair:?}");
        }
        assert!(fit.trace.iter().all(|&l| l <= 1e-12));
        let again = plsa_fit(&corpus, 2, 50, DEFAULT_TOL, 3).unwrap();
        assert_eq!(fit.model, again.model);
        assert_eq!(fit.trace, again.trace);
        assert_rows_normalized(&fit.model, 1e-9);
    }

    #[test]
    fn infinite_tol_runs_exactly_one_iteration() {
        let corpus = tiny_corpus();
        let fit = plsa_fit(&corpus, 2, 50, f64::INFINITY, 0).unwrap();
        assert_eq!(fit.iterations, 1);
        assert_eq!(fit.trace.len(), 2);
    }

    #[test]
    fn planted_clusters_separate() {
        // Two groups of docs over disjoint vocabularies; T=2 must put each
        // doc's argmax topic with its group.
        let corpus = BowCorpus::from_tokens(&[
            vec!["a", "b", "a"],
            vec!["b", "a", "b"],
            vec!["a", "a", "b"],
            vec!["x", "y", "x"],
            vec!["y", "x", "y"],
            vec!["x", "x", "y"],
        ])
        .unwrap();
        let fit = plsa_fit(&corpus, 2, 200, 1e-10, 11).unwrap();
        let argmax = |row: &Vec<f64>| -> usize {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let topics: Vec<usize> = fit.model.p_t_given_d.iter().map(argmax).collect();
        assert_eq!(topics[0], topics[1]);
        assert_eq!(topics[0], topics[2]);
        assert_eq!(topics[3], topics[4]);
        assert_eq!(topics[3], topics[5]);
        assert_ne!(topics[0], topics[3]);
    }

    #[test]
    fn save_load_round_trip() {
        let corpus = tiny_corpus();
        let fit = plsa_fit(&corpus, 2, 10, DEFAULT_TOL, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plsa.json");
        save_plsa(&fit, &corpus.vocab, &path).unwrap();
        let (vocab, model) = load_plsa(&path).unwrap();
        assert_eq!(vocab, corpus.vocab);
        assert_eq!(model, fit.model);
    }
}
