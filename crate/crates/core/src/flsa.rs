//! The fLSA EM engine.
//!
//! The model's "parameters" are textual: one description per tag plus a
//! tag assignment per segment. Each iteration runs an E-step that prompts
//! the model to greedily assign every segment a tag (given all current tag
//! descriptions and the segment's document context) and an M-step that
//! regenerates every description by summarizing a sample of the segments
//! assigned to it. The first iteration assigns tags uniformly at random
//! because no descriptions exist yet.
//!
//! Within an iteration, E-step assignments are independent and may run
//! concurrently; the iteration boundary is a barrier, and the model is
//! only updated once a full step completes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use rand::SeedableRng;
use rand::{seq::index::sample as index_sample, Rng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{context_window, Corpus, CorpusError, Segment, Window};
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::prompts::{numbered_list, render, PromptError, PromptSet};
use crate::seed;
use crate::TagId;

/// Description stored for a tag whose cluster was empty at the M-step. The
/// tag stays selectable at the next E-step.
pub const UNUSED_DESCRIPTION: &str = "UNUSED";

/// Token cap for regenerated tag descriptions.
pub const DESCRIBE_MAX_TOKENS: u32 = 120;
/// Token cap for tag-choice responses.
pub const ASSIGN_MAX_TOKENS: u32 = 32;

pub const E_STEP_SYSTEM: &str = "You assign tags to document segments.";
pub const M_STEP_SYSTEM: &str = "You describe groups of document segments.";

#[derive(Debug, Error)]
pub enum FlsaError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot parse a tag choice from response {response:?}")]
    AssignmentParse { response: String },
    #[error("model backend returned an empty description")]
    EmptyDescription,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("E-step failed at iteration {iteration}, document {doc_id}, segment {segment}: {source}")]
    EStep {
        iteration: usize,
        doc_id: String,
        segment: usize,
        #[source]
        source: Box<FlsaError>,
    },
    #[error("M-step failed at iteration {iteration}, tag {tag}: {source}")]
    MStep {
        iteration: usize,
        tag: TagId,
        #[source]
        source: Box<FlsaError>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlsaConfig {
    pub num_tags: u32,
    pub max_iters: usize,
    pub window: Window,
    pub m_step_sample: usize,
    pub convergence_frac: f64,
    pub seed: u64,
}

impl Default for FlsaConfig {
    fn default() -> Self {
        FlsaConfig {
            num_tags: 100,
            max_iters: 30,
            window: Window::Limited(2),
            m_step_sample: 10,
            convergence_frac: 0.02,
            seed: 0,
        }
    }
}

/// Per-dataset presets: the story preset uses a small context window, the
/// solution presets pass the whole document as context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Story,
    Math,
    Bbh,
}

impl FlsaConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Story => FlsaConfig {
                num_tags: 100,
                window: Window::Limited(2),
                ..FlsaConfig::default()
            },
            Preset::Math => FlsaConfig {
                num_tags: 100,
                window: Window::Unlimited,
                ..FlsaConfig::default()
            },
            Preset::Bbh => FlsaConfig {
                num_tags: 50,
                window: Window::Unlimited,
                ..FlsaConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<(), FlsaError> {
        if self.num_tags < 2 {
            return Err(FlsaError::Config(format!(
                "num_tags must be >= 2, got {}",
                self.num_tags
            )));
        }
        if self.m_step_sample < 1 {
            return Err(FlsaError::Config("m_step_sample must be >= 1".into()));
        }
        if self.max_iters < 1 {
            return Err(FlsaError::Config("max_iters must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.convergence_frac) {
            return Err(FlsaError::Config(
                "convergence_frac must be in [0, 1]".into(),
            ));
        }
        self.window
            .validate()
            .map_err(|e| FlsaError::Config(e.to_string()))
    }
}

/// A segment's identity within a corpus.
pub type SegmentKey = (String, usize);

/// The fLSA parameters: per-tag descriptions plus per-segment assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagModel {
    pub num_tags: u32,
    pub descriptions: BTreeMap<TagId, String>,
    #[serde(with = "assignment_records")]
    pub assignments: BTreeMap<SegmentKey, TagId>,
    pub iteration: usize,
    /// Fraction of segments whose tag changed, per iteration. The first
    /// entry is 1.0 by convention (random initialization).
    pub change_history: Vec<f64>,
    pub config: FlsaConfig,
}

/// JSON can't key an object by (doc, index), so assignments persist as a
/// sorted array of records.
mod assignment_records {
    use super::{SegmentKey, TagId};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Record {
        doc_id: String,
        segment: usize,
        tag: TagId,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<SegmentKey, TagId>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let records: Vec<Record> = map
            .iter()
            .map(|((doc_id, segment), &tag)| Record {
                doc_id: doc_id.clone(),
                segment: *segment,
                tag,
            })
            .collect();
        records.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<SegmentKey, TagId>, D::Error> {
        let records = Vec::<Record>::deserialize(deserializer)?;
        Ok(records
            .into_iter()
            .map(|r| ((r.doc_id, r.segment), r.tag))
            .collect())
    }
}

impl TagModel {
    pub fn tag_of(&self, doc_id: &str, segment: usize) -> Option<TagId> {
        self.assignments
            .get(&(doc_id.to_string(), segment))
            .copied()
    }

    /// Tag sequence of one document, in segment order.
    pub fn sequence_for(&self, doc_id: &str) -> Vec<TagId> {
        self.assignments
            .iter()
            .filter(|((doc, _), _)| doc == doc_id)
            .map(|(_, &tag)| tag)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), FlsaError> {
        let data = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, data).map_err(|source| FlsaError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FlsaError> {
        let data = std::fs::read_to_string(path).map_err(|source| FlsaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&data).map_err(|e| FlsaError::Malformed(e.to_string()))
    }
}

/// A corpus with its per-document tag sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedCorpus {
    pub documents: Vec<DocumentTags>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentTags {
    pub doc_id: String,
    pub tags: Vec<TagId>,
}

impl TaggedCorpus {
    pub fn sequences(&self) -> Vec<Vec<TagId>> {
        self.documents.iter().map(|d| d.tags.clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), FlsaError> {
        let data = serde_json::to_string_pretty(self).expect("tagged corpus serializes");
        std::fs::write(path, data).map_err(|source| FlsaError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FlsaError> {
        let data = std::fs::read_to_string(path).map_err(|source| FlsaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&data).map_err(|e| FlsaError::Malformed(e.to_string()))
    }
}

/// Random first-iteration assignment: every segment gets a uniform tag,
/// deterministic given the seed; descriptions start empty.
pub fn flsa_init(corpus: &Corpus, config: &FlsaConfig) -> Result<TagModel, FlsaError> {
    config.validate()?;
    if corpus.documents.is_empty() {
        return Err(FlsaError::Config("corpus is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(&[config.seed, seed::fnv1a(b"init")]));
    let mut assignments = BTreeMap::new();
    for doc in &corpus.documents {
        for segment in &doc.segments {
            let tag = rng.random_range(1..=config.num_tags);
            assignments.insert((doc.id.clone(), segment.index), tag);
        }
    }
    Ok(TagModel {
        num_tags: config.num_tags,
        descriptions: BTreeMap::new(),
        assignments,
        iteration: 0,
        change_history: Vec::new(),
        config: *config,
    })
}

/// Render the tag list shown at the E-step: every tag, ascending.
fn tag_list(descriptions: &BTreeMap<TagId, String>, num_tags: u32) -> String {
    (1..=num_tags)
        .map(|t| {
            let desc = descriptions
                .get(&t)
                .map(String::as_str)
                .unwrap_or(UNUSED_DESCRIPTION);
            format!("Tag {t}: {desc}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn context_block(context: &[&Segment]) -> String {
    if context.is_empty() {
        return "(none)".to_string();
    }
    context
        .iter()
        .map(|s| format!("[{}] {}", s.index, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The full E-step prompt for one segment. Exposed so tests can check the
/// construction property: exactly the window's segments and all
/// `num_tags` descriptions appear, each once.
pub fn e_step_prompt(
    descriptions: &BTreeMap<TagId, String>,
    num_tags: u32,
    segment: &Segment,
    context: &[&Segment],
    prompts: &PromptSet,
) -> Result<String, PromptError> {
    render(
        "e_step",
        &prompts.e_step,
        &[
            ("tag_list", &tag_list(descriptions, num_tags)),
            ("context", &context_block(context)),
            ("segment", &segment.text),
        ],
    )
}

/// The M-step prompt summarizing one tag's sampled segments.
pub fn m_step_prompt(
    sampled_segments: &[&Segment],
    prompts: &PromptSet,
) -> Result<String, PromptError> {
    let texts: Vec<&str> = sampled_segments.iter().map(|s| s.text.as_str()).collect();
    render("m_step", &prompts.m_step, &[("segments", &numbered_list(&texts))])
}

/// Extract a tag choice: "Tag: N", "Tag N", bare "N", or the first
/// in-range integer anywhere in the response.
pub fn parse_tag_choice(response: &str, num_tags: u32) -> Option<TagId> {
    static TAG_PATTERN: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?i)\btag\b\s*[:#]?\s*(\d+)").expect("static regex"));
    static ANY_INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").expect("static regex"));
    if let Some(caps) = TAG_PATTERN.captures(response) {
        if let Ok(tag) = caps[1].parse::<TagId>() {
            if (1..=num_tags).contains(&tag) {
                return Some(tag);
            }
        }
    }
    ANY_INT
        .find_iter(response)
        .filter_map(|m| m.as_str().parse::<TagId>().ok())
        .find(|tag| (1..=num_tags).contains(tag))
}

/// Greedy tag assignment for one segment: prompt with all descriptions,
/// the segment, and its context; parse the choice; retry once with a
/// stricter instruction before giving up.
pub fn e_step_assign(
    model: &TagModel,
    segment: &Segment,
    context: &[&Segment],
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<TagId, FlsaError> {
    if model.descriptions.is_empty() {
        return Err(FlsaError::Config(
            "tag descriptions are empty; run an M-step first".into(),
        ));
    }
    let prompt = e_step_prompt(
        &model.descriptions,
        model.num_tags,
        segment,
        context,
        prompts,
    )?;
    let request = ChatRequest::greedy(E_STEP_SYSTEM, &prompt, ASSIGN_MAX_TOKENS);
    let response = gateway.complete(&request)?;
    if let Some(tag) = parse_tag_choice(&response.text, model.num_tags) {
        return Ok(tag);
    }
    let strict = format!(
        "{prompt}\n\nYour previous reply could not be parsed. Reply with only the tag id, for example \"Tag: 3\"."
    );
    let retry = gateway.complete(&ChatRequest::greedy(
        E_STEP_SYSTEM,
        &strict,
        ASSIGN_MAX_TOKENS,
    ))?;
    parse_tag_choice(&retry.text, model.num_tags).ok_or(FlsaError::AssignmentParse {
        response: retry.text,
    })
}

/// Regenerate one tag's description from its sampled segments.
pub fn m_step_describe(
    sampled_segments: &[&Segment],
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<String, FlsaError> {
    if sampled_segments.is_empty() {
        return Err(FlsaError::Config(
            "cannot describe a tag with no segments".into(),
        ));
    }
    let prompt = m_step_prompt(sampled_segments, prompts)?;
    let request = ChatRequest::sampling(M_STEP_SYSTEM, &prompt, DESCRIBE_MAX_TOKENS);
    let text = match gateway.complete(&request) {
        Ok(response) => response.text,
        Err(GatewayError::EmptyResponse) => gateway.complete(&request)?.text,
        Err(e) => return Err(e.into()),
    };
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(FlsaError::EmptyDescription);
    }
    Ok(text)
}

/// Knobs that belong to the run, not the model: checkpointing and the
/// concurrency bound for gateway calls.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub checkpoint_dir: Option<PathBuf>,
    /// Number of concurrent E-step calls; 0 or 1 means sequential.
    pub parallel: usize,
}

/// Map `f` over items with at most `workers` threads, preserving order.
fn bounded_map<T, R, E, F>(items: &[T], workers: usize, f: F) -> Vec<Result<R, E>>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<R, E>>>> =
        items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                *results[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    results
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot").expect("slot filled"))
        .collect()
}

fn write_checkpoint(model: &TagModel, dir: &Path, iteration: usize) -> Result<(), FlsaError> {
    std::fs::create_dir_all(dir).map_err(|source| FlsaError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    model.save(&dir.join(format!("checkpoint_iter_{iteration:03}.json")))
}

/// Run the fLSA EM loop.
///
/// Iteration 1 uses the random initialization as its E-step equivalent and
/// runs an M-step to produce the first descriptions. Later iterations run
/// a full E-step against the previous descriptions, stop early once fewer
/// than `convergence_frac` of assignments change (the previous iteration's
/// descriptions remain valid), and otherwise refresh all descriptions. A
/// checkpoint is written after every completed iteration, so when a
/// gateway error propagates out of iteration `i`, the checkpoint for
/// `i - 1` is already on disk.
pub fn flsa_fit(
    corpus: &Corpus,
    config: &FlsaConfig,
    gateway: &Gateway,
    prompts: &PromptSet,
    options: &FitOptions,
) -> Result<TagModel, FlsaError> {
    let mut model = flsa_init(corpus, config)?;
    for iteration in 1..=config.max_iters {
        let mut converged = false;
        if iteration == 1 {
            model.change_history.push(1.0);
        } else {
            let new_assignments = run_e_step(&model, corpus, gateway, prompts, options, iteration)?;
            let total = model.assignments.len();
            let changed = new_assignments
                .iter()
                .filter(|(key, tag)| model.assignments.get(*key) != Some(tag))
                .count();
            let change_frac = changed as f64 / total as f64;
            model.assignments = new_assignments;
            model.change_history.push(change_frac);
            converged = change_frac < config.convergence_frac;
        }
        if !converged {
            run_m_step(&mut model, corpus, gateway, prompts, iteration)?;
        }
        model.iteration = iteration;
        if let Some(dir) = &options.checkpoint_dir {
            write_checkpoint(&model, dir, iteration)?;
        }
        if converged {
            break;
        }
    }
    Ok(model)
}

fn run_e_step(
    model: &TagModel,
    corpus: &Corpus,
    gateway: &Gateway,
    prompts: &PromptSet,
    options: &FitOptions,
    iteration: usize,
) -> Result<BTreeMap<SegmentKey, TagId>, FlsaError> {
    let jobs: Vec<(&crate::corpus::Document, &Segment)> = corpus
        .documents
        .iter()
        .flat_map(|doc| doc.segments.iter().map(move |s| (doc, s)))
        .collect();
    let results = bounded_map(&jobs, options.parallel, |(doc, segment)| {
        let context = context_window(doc, segment.index, model.config.window)?;
        e_step_assign(model, segment, &context, gateway, prompts).map_err(|e| FlsaError::EStep {
            iteration,
            doc_id: doc.id.clone(),
            segment: segment.index,
            source: Box::new(e),
        })
    });
    let mut assignments = BTreeMap::new();
    for ((doc, segment), result) in jobs.iter().zip(results) {
        assignments.insert((doc.id.clone(), segment.index), result?);
    }
    Ok(assignments)
}

fn run_m_step(
    model: &mut TagModel,
    corpus: &Corpus,
    gateway: &Gateway,
    prompts: &PromptSet,
    iteration: usize,
) -> Result<(), FlsaError> {
    let mut clusters: BTreeMap<TagId, Vec<&Segment>> = BTreeMap::new();
    for doc in &corpus.documents {
        for segment in &doc.segments {
            let tag = model.assignments[&(doc.id.clone(), segment.index)];
            clusters.entry(tag).or_default().push(segment);
        }
    }
    let mut descriptions = BTreeMap::new();
    for tag in 1..=model.num_tags {
        let members = clusters.get(&tag).map(Vec::as_slice).unwrap_or(&[]);
        if members.is_empty() {
            descriptions.insert(tag, UNUSED_DESCRIPTION.to_string());
            continue;
        }
        let sampled = sample_cluster(
            members,
            model.config.m_step_sample,
            seed::mix(&[
                model.config.seed,
                seed::fnv1a(b"m_step"),
                iteration as u64,
                u64::from(tag),
            ]),
        );
        let description = m_step_describe(&sampled, gateway, prompts).map_err(|e| {
            FlsaError::MStep {
                iteration,
                tag,
                source: Box::new(e),
            }
        })?;
        descriptions.insert(tag, description);
    }
    model.descriptions = descriptions;
    Ok(())
}

/// Sample up to `limit` cluster members without replacement, preserving
/// corpus order so the describe prompt is stable.
fn sample_cluster<'a>(members: &[&'a Segment], limit: usize, seed: u64) -> Vec<&'a Segment> {
    if members.len() <= limit {
        return members.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index_sample(&mut rng, members.len(), limit).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| members[i]).collect()
}

/// Assign a tag to every segment of a (possibly held-out) corpus using a
/// fitted model, returning per-document tag sequences.
pub fn tag_corpus(
    model: &TagModel,
    corpus: &Corpus,
    gateway: &Gateway,
    prompts: &PromptSet,
    options: &FitOptions,
) -> Result<TaggedCorpus, FlsaError> {
    let mut documents = Vec::with_capacity(corpus.documents.len());
    for doc in &corpus.documents {
        let jobs: Vec<&Segment> = doc.segments.iter().collect();
        let results = bounded_map(&jobs, options.parallel, |segment| {
            let context = context_window(doc, segment.index, model.config.window)?;
            e_step_assign(model, segment, &context, gateway, prompts)
        });
        let tags = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        documents.push(DocumentTags {
            doc_id: doc.id.clone(),
            tags,
        });
    }
    Ok(TaggedCorpus { documents })
}
