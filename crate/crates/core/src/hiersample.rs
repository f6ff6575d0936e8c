//! Candidate solution generation.
//!
//! Three samplers share one [`Candidate`] shape:
//!
//! - direct: one call, problem only;
//! - outline-then-solve: one call generates a multi-step outline for the
//!   problem type, a second solves given that outline;
//! - hierarchical: a tag sequence sampled from the bigram dynamic model
//!   becomes the outline (its tag descriptions, numbered), and one call
//!   solves given the plan.
//!
//! Independent samples of the same problem carry distinct request seed
//! hints (the sample index sits in the hint's low 16 bits), so a cache or
//! a deterministic backend still yields K distinct draws.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::BigramModel;
use crate::gateway::{ChatRequest, Gateway, GatewayError, DEFAULT_TOP_P};
use crate::prompts::{numbered_list, render, PromptError, PromptSet};
use crate::seed;
use crate::TagId;

pub const SOLVE_SYSTEM: &str = "You solve problems step by step.";
pub const OUTLINE_SYSTEM: &str = "You write solution outlines.";

pub const SOLUTION_MAX_TOKENS: u32 = 1024;
pub const OUTLINE_MAX_TOKENS: u32 = 256;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("tag {0} has no description")]
    MissingDescription(TagId),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    /// Samples per problem.
    pub k: u32,
    /// Tag-sequence length cap for hierarchical sampling.
    pub max_outline_len: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            k: 50,
            max_outline_len: 12,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.k < 1 {
            return Err(SampleError::Config("K must be >= 1".into()));
        }
        if self.max_outline_len < 1 {
            return Err(SampleError::Config("max_outline_len must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    GenOutline,
    Hier,
}

/// The outline a candidate was conditioned on, when any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outline {
    Tags(Vec<TagId>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub problem_id: String,
    pub method: Method,
    pub outline: Option<Outline>,
    pub solution_text: String,
    pub sample_index: u32,
}

/// Ancestral sampling from the bigram model: draw `t_1`, then successors
/// until END or `max_len`. END never appears in the returned sequence and
/// the length is in `1..=max_len`.
pub fn sample_tag_sequence(
    model: &BigramModel,
    max_len: usize,
    rng: &mut impl Rng,
) -> Vec<TagId> {
    let mut tags = Vec::new();
    let start = weighted_choice(rng, &model.start_distribution());
    tags.push(start as TagId + 1);
    while tags.len() < max_len {
        let current = *tags.last().expect("non-empty");
        let row = model.successor_distribution(current);
        let pick = weighted_choice(rng, &row);
        if pick == model.num_tags as usize {
            break; // END column
        }
        tags.push(pick as TagId + 1);
    }
    tags
}

fn weighted_choice(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn sampling_request(system: &str, user: String, config: &SampleConfig, hint: u64) -> ChatRequest {
    ChatRequest {
        system: system.to_string(),
        user,
        temperature: config.temperature,
        top_p: DEFAULT_TOP_P,
        max_tokens: SOLUTION_MAX_TOKENS,
        seed_hint: Some(hint),
    }
}

fn complete_with_retry(gateway: &Gateway, request: &ChatRequest) -> Result<String, SampleError> {
    match gateway.complete(request) {
        Ok(response) => Ok(response.text),
        Err(GatewayError::EmptyResponse) => Ok(gateway.complete(request)?.text),
        Err(e) => Err(e.into()),
    }
}

/// One-call direct sampling.
pub fn generate_direct(
    problem_id: &str,
    problem: &str,
    sample_index: u32,
    gateway: &Gateway,
    prompts: &PromptSet,
    config: &SampleConfig,
) -> Result<Candidate, SampleError> {
    let user = render("direct", &prompts.direct, &[("problem", problem)])?;
    let hint = seed::sample_hint(config.seed, problem_id, sample_index);
    let text = complete_with_retry(gateway, &sampling_request(SOLVE_SYSTEM, user, config, hint))?;
    Ok(Candidate {
        problem_id: problem_id.to_string(),
        method: Method::Direct,
        outline: None,
        solution_text: text,
        sample_index,
    })
}

/// Render the outline block for a tag sequence: each tag's description as
/// one numbered plan step, in sequence order.
pub fn outline_from_tags(
    tags: &[TagId],
    descriptions: &BTreeMap<TagId, String>,
) -> Result<String, SampleError> {
    let steps: Vec<&str> = tags
        .iter()
        .map(|t| {
            descriptions
                .get(t)
                .map(String::as_str)
                .ok_or(SampleError::MissingDescription(*t))
        })
        .collect::<Result<_, _>>()?;
    Ok(numbered_list(&steps))
}

/// Hierarchical sampling: solve conditioned on a sampled tag-sequence
/// outline. One gateway call; the tag sequence comes from the bigram
/// model, not the model backend.
#[allow(clippy::too_many_arguments)]
pub fn generate_hier(
    problem_id: &str,
    problem: &str,
    tags: &[TagId],
    descriptions: &BTreeMap<TagId, String>,
    sample_index: u32,
    gateway: &Gateway,
    prompts: &PromptSet,
    config: &SampleConfig,
) -> Result<Candidate, SampleError> {
    if tags.is_empty() {
        return Err(SampleError::Config("hier outline has no tags".into()));
    }
    let outline = outline_from_tags(tags, descriptions)?;
    let user = render(
        "solve_with_outline",
        &prompts.solve_with_outline,
        &[("problem", problem), ("outline", &outline)],
    )?;
    let hint = seed::sample_hint(config.seed, problem_id, sample_index);
    let text = complete_with_retry(gateway, &sampling_request(SOLVE_SYSTEM, user, config, hint))?;
    Ok(Candidate {
        problem_id: problem_id.to_string(),
        method: Method::Hier,
        outline: Some(Outline::Tags(tags.to_vec())),
        solution_text: text,
        sample_index,
    })
}

/// Seed of the tag-sequence draw for one (problem, sample) pair.
pub fn hier_sequence_seed(config: &SampleConfig, problem_id: &str, sample_index: u32) -> u64 {
    seed::mix(&[
        config.seed,
        seed::fnv1a(b"tagseq"),
        seed::fnv1a(problem_id.as_bytes()),
        u64::from(sample_index),
    ])
}

/// Sample a fresh tag sequence for this (problem, sample) pair and solve
/// conditioned on it. Sequences are resampled independently per sample.
#[allow(clippy::too_many_arguments)]
pub fn hier_candidate(
    problem_id: &str,
    problem: &str,
    bigram: &BigramModel,
    descriptions: &BTreeMap<TagId, String>,
    sample_index: u32,
    gateway: &Gateway,
    prompts: &PromptSet,
    config: &SampleConfig,
) -> Result<Candidate, SampleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(hier_sequence_seed(config, problem_id, sample_index));
    let tags = sample_tag_sequence(bigram, config.max_outline_len, &mut rng);
    generate_hier(
        problem_id,
        problem,
        &tags,
        descriptions,
        sample_index,
        gateway,
        prompts,
        config,
    )
}

/// Two-step sampling: generate an outline for this problem type, then
/// solve given that outline. Exactly two gateway calls.
pub fn generate_outline_then_solve(
    problem_id: &str,
    problem: &str,
    sample_index: u32,
    gateway: &Gateway,
    prompts: &PromptSet,
    config: &SampleConfig,
) -> Result<Candidate, SampleError> {
    let outline_user = render("outline_gen", &prompts.outline_gen, &[("problem", problem)])?;
    let hint = seed::sample_hint(config.seed, problem_id, sample_index);
    let outline_request = ChatRequest {
        system: OUTLINE_SYSTEM.to_string(),
        user: outline_user,
        temperature: config.temperature,
        top_p: DEFAULT_TOP_P,
        max_tokens: OUTLINE_MAX_TOKENS,
        seed_hint: Some(hint),
    };
    let outline = complete_with_retry(gateway, &outline_request)?.trim().to_string();
    let solve_user = render(
        "solve_with_outline",
        &prompts.solve_with_outline,
        &[("problem", problem), ("outline", &outline)],
    )?;
    let text =
        complete_with_retry(gateway, &sampling_request(SOLVE_SYSTEM, solve_user, config, hint))?;
    Ok(Candidate {
        problem_id: problem_id.to_string(),
        method: Method::GenOutline,
        outline: Some(Outline::Text(outline)),
        solution_text: text,
        sample_index,
    })
}

/// Append candidates to a JSONL file, one object per line.
pub fn save_candidates(candidates: &[Candidate], path: &Path) -> Result<(), SampleError> {
    let io_err = |source| SampleError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    for candidate in candidates {
        serde_json::to_writer(&mut out, candidate).expect("candidate serializes");
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}
