//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use flsa_core::corpus::{
    context_window, load_corpus, save_corpus, Corpus, SegmentationMode, SegmentationStrategy,
    Window,
};
use flsa_core::dynamics::{export_dot, fit_bigram, load_bigram, save_bigram, BigramModel};
use flsa_core::eval::{
    eval_reconstruction, hits_at_k, load_problems, recon_csv, save_json, EvalConfig, GradedProblem,
};
use flsa_core::flsa::{
    e_step_prompt, flsa_fit, m_step_prompt, tag_corpus, FitOptions, FlsaConfig, Preset, TagModel,
    TaggedCorpus,
};
use flsa_core::hiersample::{
    generate_direct, generate_outline_then_solve, hier_candidate, outline_from_tags,
    sample_tag_sequence, SampleConfig,
};
use flsa_core::plsa::{plsa_fit, save_plsa, BowCorpus};
use flsa_core::prompts::{render, PromptSet};

use crate::config::{build_gateway, GatewayArgs, RunConfig};
use crate::CliError;

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::validation(e.to_string())
}

/// Template set for --dry-run paths, which never build a backend.
fn prompts_only(args: &GatewayArgs, config: &RunConfig) -> Result<PromptSet, CliError> {
    match args.templates.as_ref().or(config.templates.as_ref()) {
        Some(dir) => PromptSet::from_dir(dir).map_err(validation),
        None => Ok(PromptSet::default()),
    }
}

fn print_prompt(kind: &str, label: &str, prompt: &str) {
    println!("--- prompt [{kind}] {label} ---");
    println!("{prompt}");
    println!();
}

// ---------------------------------------------------------------- ingest

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Input corpus (JSONL)
    #[arg(long)]
    corpus: PathBuf,
    /// Segmentation for raw-text records
    #[arg(long, value_enum, default_value = "pre-segmented")]
    mode: IngestMode,
    /// Fragments shorter than this merge into the previous segment
    #[arg(long, default_value_t = 1)]
    min_chars: usize,
    /// Normalized corpus output (JSONL)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IngestMode {
    PreSegmented,
    BlankLine,
    NumberedStep,
}

impl From<IngestMode> for SegmentationMode {
    fn from(mode: IngestMode) -> Self {
        match mode {
            IngestMode::PreSegmented => SegmentationMode::PreSegmented,
            IngestMode::BlankLine => SegmentationMode::BlankLine,
            IngestMode::NumberedStep => SegmentationMode::NumberedStep,
        }
    }
}

pub fn ingest(args: IngestArgs) -> Result<(), CliError> {
    if args.min_chars < 1 {
        return Err(CliError::validation("--min-chars must be >= 1"));
    }
    let strategy = SegmentationStrategy {
        mode: args.mode.into(),
        min_chars: args.min_chars,
    };
    let corpus = load_corpus(&args.corpus, strategy).map_err(validation)?;
    save_corpus(&corpus, &args.out)?;
    log::info!(
        "ingested {} documents / {} segments -> {}",
        corpus.documents.len(),
        corpus.num_segments(),
        args.out.display()
    );
    Ok(())
}

// -------------------------------------------------------------- fit-plsa

#[derive(Args, Debug)]
pub struct FitPlsaArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Number of topics
    #[arg(long)]
    topics: usize,
    #[arg(long, default_value_t = flsa_core::plsa::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Absolute likelihood-gain stopping tolerance
    #[arg(long, default_value_t = flsa_core::plsa::DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

pub fn fit_plsa(args: FitPlsaArgs, config: &RunConfig) -> Result<(), CliError> {
    if args.topics < 1 {
        return Err(CliError::validation("--topics must be >= 1"));
    }
    let corpus = load_corpus(&args.corpus, SegmentationStrategy::default()).map_err(validation)?;
    let bow = BowCorpus::from_corpus(&corpus).map_err(validation)?;
    let seed = config.seed.unwrap_or(0);
    let fit = plsa_fit(&bow, args.topics, args.max_iters, args.tol, seed)?;
    save_plsa(&fit, &bow.vocab, &args.out)?;
    log::info!(
        "plsa converged after {} iterations, final log-likelihood {:.4}",
        fit.iterations,
        fit.trace.last().unwrap()
    );
    Ok(())
}

// -------------------------------------------------------------- fit-flsa

#[derive(Args, Debug)]
pub struct FitFlsaArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Start from a named preset, then apply other flags on top
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Tag space size
    #[arg(long)]
    tags: Option<u32>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Even context window size (total neighbours)
    #[arg(long, conflicts_with = "window_unlimited")]
    window: Option<usize>,
    /// Pass the whole document as context
    #[arg(long)]
    window_unlimited: bool,
    /// Segments sampled per tag at the M-step
    #[arg(long)]
    m_step_sample: Option<usize>,
    /// Stop once fewer than this fraction of assignments change
    #[arg(long)]
    convergence_frac: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint directory (default: <out>.checkpoints)
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Story,
    Math,
    Bbh,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Story => Preset::Story,
            PresetArg::Math => Preset::Math,
            PresetArg::Bbh => Preset::Bbh,
        }
    }
}

fn resolve_flsa_config(args: &FitFlsaArgs, config: &RunConfig) -> Result<FlsaConfig, CliError> {
    let mut resolved = match args.preset {
        Some(preset) => FlsaConfig::preset(preset.into()),
        None => config.flsa.unwrap_or_default(),
    };
    if let Some(tags) = args.tags {
        resolved.num_tags = tags;
    }
    if let Some(max_iters) = args.max_iters {
        resolved.max_iters = max_iters;
    }
    if let Some(window) = args.window {
        resolved.window = Window::limited(window).map_err(validation)?;
    }
    if args.window_unlimited {
        resolved.window = Window::Unlimited;
    }
    if let Some(sample) = args.m_step_sample {
        resolved.m_step_sample = sample;
    }
    if let Some(frac) = args.convergence_frac {
        resolved.convergence_frac = frac;
    }
    if let Some(seed) = config.seed {
        resolved.seed = seed;
    }
    resolved.validate().map_err(validation)?;
    Ok(resolved)
}

pub fn fit_flsa(args: FitFlsaArgs, config: &RunConfig) -> Result<(), CliError> {
    let flsa_config = resolve_flsa_config(&args, config)?;
    let corpus = load_corpus(&args.corpus, SegmentationStrategy::default()).map_err(validation)?;
    if args.gateway.dry_run {
        return dry_run_fit_flsa(&corpus, &flsa_config, &prompts_only(&args.gateway, config)?);
    }
    let setup = build_gateway(&args.gateway, config)?;
    let options = FitOptions {
        checkpoint_dir: Some(
            args.checkpoint_dir
                .unwrap_or_else(|| args.out.with_extension("checkpoints")),
        ),
        parallel: setup.parallel,
    };
    let model = flsa_fit(&corpus, &flsa_config, &setup.gateway, &setup.prompts, &options)?;
    model.save(&args.out)?;
    let stats = setup.gateway.stats();
    log::info!(
        "fit stopped after iteration {} (last change {:.4}); {} backend calls, {} cache hits",
        model.iteration,
        model.change_history.last().copied().unwrap_or(1.0),
        stats.backend_calls,
        stats.cache_hits
    );
    Ok(())
}

/// Everything renderable without any model responses: the first
/// iteration's M-step prompts over the random initialization.
fn dry_run_fit_flsa(
    corpus: &Corpus,
    config: &FlsaConfig,
    prompts: &PromptSet,
) -> Result<(), CliError> {
    let model = flsa_core::flsa::flsa_init(corpus, config)?;
    let mut clusters: BTreeMap<u32, Vec<&flsa_core::corpus::Segment>> = BTreeMap::new();
    for doc in &corpus.documents {
        for segment in &doc.segments {
            let tag = model.tag_of(&doc.id, segment.index).expect("total init");
            clusters.entry(tag).or_default().push(segment);
        }
    }
    for tag in 1..=config.num_tags {
        let members = clusters.get(&tag).map(Vec::as_slice).unwrap_or(&[]);
        if members.is_empty() {
            continue;
        }
        let shown: Vec<_> = members.iter().take(config.m_step_sample).copied().collect();
        let prompt = m_step_prompt(&shown, prompts).map_err(validation)?;
        print_prompt("m_step", &format!("iteration 1, tag {tag}"), &prompt);
    }
    Ok(())
}

// ------------------------------------------------------------------- tag

#[derive(Args, Debug)]
pub struct TagArgs {
    /// Fitted fLSA model (JSON)
    #[arg(long)]
    flsa_model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Tagged corpus output (JSON)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
}

pub fn tag(args: TagArgs, config: &RunConfig) -> Result<(), CliError> {
    let model = TagModel::load(&args.flsa_model).map_err(validation)?;
    if model.descriptions.is_empty() {
        return Err(CliError::validation(
            "model has no tag descriptions; fit it first",
        ));
    }
    let corpus = load_corpus(&args.corpus, SegmentationStrategy::default()).map_err(validation)?;
    if args.gateway.dry_run {
        let prompts = prompts_only(&args.gateway, config)?;
        for doc in &corpus.documents {
            for segment in &doc.segments {
                let context = context_window(doc, segment.index, model.config.window)
                    .map_err(validation)?;
                let prompt = e_step_prompt(
                    &model.descriptions,
                    model.num_tags,
                    segment,
                    &context,
                    &prompts,
                )
                .map_err(validation)?;
                print_prompt(
                    "e_step",
                    &format!("{}#{}", doc.id, segment.index),
                    &prompt,
                );
            }
        }
        return Ok(());
    }
    let setup = build_gateway(&args.gateway, config)?;
    let options = FitOptions {
        checkpoint_dir: None,
        parallel: setup.parallel,
    };
    let tagged = tag_corpus(&model, &corpus, &setup.gateway, &setup.prompts, &options)?;
    tagged.save(&args.out)?;
    log::info!("tagged {} documents -> {}", tagged.documents.len(), args.out.display());
    Ok(())
}

// -------------------------------------------------------------- dynamics

#[derive(Args, Debug)]
pub struct DynamicsFitArgs {
    /// Fitted fLSA model: provides num_tags, and training sequences when
    /// --tagged is absent
    #[arg(long)]
    flsa_model: PathBuf,
    /// Tagged corpus to fit on instead of the model's stored assignments
    #[arg(long)]
    tagged: Option<PathBuf>,
    /// Additive smoothing lambda
    #[arg(long)]
    smoothing: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

pub const DEFAULT_SMOOTHING: f64 = 0.1;

pub fn dynamics_fit(args: DynamicsFitArgs, config: &RunConfig) -> Result<(), CliError> {
    let model = TagModel::load(&args.flsa_model).map_err(validation)?;
    let sequences: Vec<Vec<u32>> = match &args.tagged {
        Some(path) => TaggedCorpus::load(path).map_err(validation)?.sequences(),
        None => {
            let mut by_doc: BTreeMap<&str, Vec<(usize, u32)>> = BTreeMap::new();
            for ((doc_id, index), &tag) in &model.assignments {
                by_doc.entry(doc_id).or_default().push((*index, tag));
            }
            by_doc
                .into_values()
                .map(|mut entries| {
                    entries.sort_unstable();
                    entries.into_iter().map(|(_, tag)| tag).collect()
                })
                .collect()
        }
    };
    let smoothing = args
        .smoothing
        .or(config.bigram_smoothing)
        .unwrap_or(DEFAULT_SMOOTHING);
    if smoothing < 0.0 {
        return Err(CliError::validation("--smoothing must be >= 0"));
    }
    let bigram = fit_bigram(&sequences, model.num_tags, smoothing).map_err(validation)?;
    save_bigram(&bigram, &args.out)?;
    log::info!(
        "bigram model over {} tags from {} sequences -> {}",
        bigram.num_tags,
        sequences.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct DynamicsDotArgs {
    /// Bigram model (JSON)
    #[arg(long)]
    model: PathBuf,
    /// fLSA model supplying tag descriptions for node labels
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    /// Drop edges below this probability
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Write DOT here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn dynamics_dot(args: DynamicsDotArgs) -> Result<(), CliError> {
    let bigram = load_bigram(&args.model).map_err(validation)?;
    let descriptions = match &args.descriptions {
        Some(path) => Some(TagModel::load(path).map_err(validation)?.descriptions),
        None => None,
    };
    let lookup = move |tag: u32| -> Option<String> {
        descriptions.as_ref().and_then(|d| d.get(&tag).cloned())
    };
    let dot = export_dot(&bigram, &lookup, args.threshold, args.top_k);
    match &args.out {
        Some(path) => std::fs::write(path, dot).map_err(|e| CliError::Runtime(e.into()))?,
        None => print!("{dot}"),
    }
    Ok(())
}

// ---------------------------------------------------------------- sample

/// Problems for sampling; the gold answer is optional here (grading only
/// happens under `eval hitsk`).
#[derive(Debug, Deserialize)]
struct SampleProblem {
    id: String,
    problem: String,
    #[serde(default)]
    #[allow(dead_code)]
    answer: Option<String>,
}

fn load_sample_problems(path: &PathBuf) -> Result<Vec<SampleProblem>, CliError> {
    let data = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut problems = Vec::new();
    for (lineno, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let problem: SampleProblem = serde_json::from_str(line).map_err(|e| {
            CliError::validation(format!("malformed problem at line {}: {e}", lineno + 1))
        })?;
        problems.push(problem);
    }
    if problems.is_empty() {
        return Err(CliError::validation("problems file is empty"));
    }
    Ok(problems)
}

/// Candidates stream to disk as they are generated, one JSON object per
/// line, so an interrupted run keeps what it paid for.
struct CandidateStream {
    file: std::fs::File,
    count: usize,
}

impl CandidateStream {
    fn create(path: &PathBuf) -> Result<Self, CliError> {
        let file = std::fs::File::create(path).map_err(|e| CliError::Runtime(e.into()))?;
        Ok(CandidateStream { file, count: 0 })
    }

    fn write(&mut self, candidate: &flsa_core::hiersample::Candidate) -> Result<(), CliError> {
        use std::io::Write as _;
        let mut line = serde_json::to_vec(candidate).expect("candidate serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|()| self.file.flush())
            .map_err(|e| CliError::Runtime(e.into()))?;
        self.count += 1;
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Problems file (JSONL: {"id", "problem", "answer"?})
    #[arg(long)]
    problems: PathBuf,
    /// Samples per problem
    #[arg(long)]
    k: Option<u32>,
    /// Candidates output (JSONL)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Args, Debug)]
pub struct SampleHierArgs {
    #[arg(long)]
    problems: PathBuf,
    /// Bigram model over tags (JSON)
    #[arg(long)]
    bigram: PathBuf,
    /// fLSA model supplying tag descriptions
    #[arg(long)]
    flsa_model: PathBuf,
    #[arg(long)]
    k: Option<u32>,
    /// Tag-sequence length cap
    #[arg(long)]
    max_outline_len: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Clone, Copy)]
pub enum FlatMethod {
    Direct,
    Outline,
}

fn resolve_sample_config(
    k: Option<u32>,
    max_outline_len: Option<usize>,
    config: &RunConfig,
) -> Result<SampleConfig, CliError> {
    let mut resolved = config.sample.unwrap_or_default();
    if let Some(k) = k {
        resolved.k = k;
    }
    if let Some(len) = max_outline_len {
        resolved.max_outline_len = len;
    }
    if let Some(seed) = config.seed {
        resolved.seed = seed;
    }
    resolved.validate().map_err(validation)?;
    Ok(resolved)
}

pub fn sample_flat(
    args: SampleArgs,
    method: FlatMethod,
    config: &RunConfig,
) -> Result<(), CliError> {
    let problems = load_sample_problems(&args.problems)?;
    let sample_config = resolve_sample_config(args.k, None, config)?;
    if args.gateway.dry_run {
        let prompts = prompts_only(&args.gateway, config)?;
        for problem in &problems {
            let (kind, template) = match method {
                FlatMethod::Direct => ("direct", &prompts.direct),
                FlatMethod::Outline => ("outline_gen", &prompts.outline_gen),
            };
            let prompt =
                render(kind, template, &[("problem", problem.problem.as_str())])
                    .map_err(validation)?;
            print_prompt(kind, &problem.id, &prompt);
        }
        return Ok(());
    }
    let setup = build_gateway(&args.gateway, config)?;
    let mut stream = CandidateStream::create(&args.out)?;
    for problem in &problems {
        for index in 0..sample_config.k {
            let candidate = match method {
                FlatMethod::Direct => generate_direct(
                    &problem.id,
                    &problem.problem,
                    index,
                    &setup.gateway,
                    &setup.prompts,
                    &sample_config,
                ),
                FlatMethod::Outline => generate_outline_then_solve(
                    &problem.id,
                    &problem.problem,
                    index,
                    &setup.gateway,
                    &setup.prompts,
                    &sample_config,
                ),
            }?;
            stream.write(&candidate)?;
        }
    }
    log::info!("wrote {} candidates -> {}", stream.count, args.out.display());
    Ok(())
}

pub fn sample_hier(args: SampleHierArgs, config: &RunConfig) -> Result<(), CliError> {
    let problems = load_sample_problems(&args.problems)?;
    let bigram = load_bigram(&args.bigram).map_err(validation)?;
    let model = TagModel::load(&args.flsa_model).map_err(validation)?;
    let sample_config = resolve_sample_config(args.k, args.max_outline_len, config)?;
    if args.gateway.dry_run {
        let prompts = prompts_only(&args.gateway, config)?;
        for problem in &problems {
            for index in 0..sample_config.k {
                let mut rng = dry_run_sequence_rng(&sample_config, &problem.id, index);
                let tags = sample_tag_sequence(&bigram, sample_config.max_outline_len, &mut rng);
                let outline =
                    outline_from_tags(&tags, &model.descriptions).map_err(validation)?;
                let prompt = render(
                    "solve_with_outline",
                    &prompts.solve_with_outline,
                    &[("problem", problem.problem.as_str()), ("outline", &outline)],
                )
                .map_err(validation)?;
                print_prompt("hier", &format!("{}[{index}]", problem.id), &prompt);
            }
        }
        return Ok(());
    }
    let setup = build_gateway(&args.gateway, config)?;
    let mut stream = CandidateStream::create(&args.out)?;
    for problem in &problems {
        for index in 0..sample_config.k {
            stream.write(&hier_candidate(
                &problem.id,
                &problem.problem,
                &bigram,
                &model.descriptions,
                index,
                &setup.gateway,
                &setup.prompts,
                &sample_config,
            )?)?;
        }
    }
    log::info!("wrote {} candidates -> {}", stream.count, args.out.display());
    Ok(())
}

/// The same derivation `hier_candidate` uses, reproduced for dry-run
/// rendering.
fn dry_run_sequence_rng(config: &SampleConfig, problem_id: &str, index: u32) -> ChaCha8Rng {
    // Matches hier_candidate's internal seeding; pinned by a CLI test.
    ChaCha8Rng::seed_from_u64(flsa_core::hiersample::hier_sequence_seed(
        config, problem_id, index,
    ))
}

// ------------------------------------------------------------------ eval

#[derive(Args, Debug)]
pub struct EvalReconArgs {
    /// Fitted fLSA model (JSON)
    #[arg(long)]
    flsa_model: PathBuf,
    /// Held-out corpus (JSONL)
    #[arg(long)]
    corpus: PathBuf,
    /// Number of (document, position) test cases to sample
    #[arg(long, default_value_t = 100)]
    num_cases: usize,
    /// Alternatives sampled per case
    #[arg(long)]
    s: Option<usize>,
    /// Repeated trials per case
    #[arg(long)]
    t_trials: Option<usize>,
    /// Distractors per trial
    #[arg(long)]
    c: Option<usize>,
    /// Smoothing alpha
    #[arg(long)]
    alpha: Option<f64>,
    /// Report output (JSON); stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-case rows as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

fn resolve_eval_config(args: &EvalReconArgs, config: &RunConfig) -> Result<EvalConfig, CliError> {
    let mut resolved = config.eval.unwrap_or_default();
    if let Some(s) = args.s {
        resolved.s = s;
    }
    if let Some(t) = args.t_trials {
        resolved.t_trials = t;
    }
    if let Some(c) = args.c {
        resolved.c = c;
    }
    if let Some(alpha) = args.alpha {
        resolved.alpha = alpha;
    }
    if let Some(seed) = config.seed {
        resolved.seed = seed;
    }
    resolved.validate().map_err(validation)?;
    Ok(resolved)
}

/// Sample distinct (document index, position) cases in a seeded shuffle
/// order.
fn draw_cases(corpus: &Corpus, num_cases: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize)> = corpus
        .documents
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| (1..=doc.len()).map(move |k| (d, k)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(num_cases);
    all
}

pub fn eval_recon(args: EvalReconArgs, config: &RunConfig) -> Result<(), CliError> {
    let model = TagModel::load(&args.flsa_model).map_err(validation)?;
    if model.descriptions.is_empty() {
        return Err(CliError::validation(
            "model has no tag descriptions; fit it first",
        ));
    }
    let corpus = load_corpus(&args.corpus, SegmentationStrategy::default()).map_err(validation)?;
    let eval_config = resolve_eval_config(&args, config)?;
    if args.num_cases < 1 {
        return Err(CliError::validation("--num-cases must be >= 1"));
    }
    let case_indices = draw_cases(&corpus, args.num_cases, eval_config.seed);
    let cases: Vec<(&flsa_core::corpus::Document, usize)> = case_indices
        .iter()
        .map(|&(d, k)| (&corpus.documents[d], k))
        .collect();
    if args.gateway.dry_run {
        let prompts = prompts_only(&args.gateway, config)?;
        for &(doc, k) in &cases {
            let segment = &doc.segments[k - 1];
            let context = context_window(doc, k, model.config.window).map_err(validation)?;
            let assign = e_step_prompt(&model.descriptions, model.num_tags, segment, &context, &prompts)
                .map_err(validation)?;
            print_prompt("e_step", &format!("{}#{k}", doc.id), &assign);
            let prefix: Vec<&str> = doc.segments[..k - 1]
                .iter()
                .map(|s| s.text.as_str())
                .collect();
            let prefix_text = if prefix.is_empty() {
                "(the document starts here)".to_string()
            } else {
                prefix.join("\n\n")
            };
            let continuation = render(
                "continuation",
                &prompts.continuation,
                &[("prefix", prefix_text.as_str())],
            )
            .map_err(validation)?;
            print_prompt("continuation", &format!("{}#{k}", doc.id), &continuation);
        }
        return Ok(());
    }
    let setup = build_gateway(&args.gateway, config)?;
    let report = eval_reconstruction(&cases, &model, &setup.gateway, &setup.prompts, &eval_config)?;
    log::info!(
        "reconstruction: with-tag {:.4}, no-tag {:.4} over {} cases ({} excluded)",
        report.mean_log_prob_with_tag,
        report.mean_log_prob_no_tag,
        report.cases.len(),
        report.excluded
    );
    if let Some(csv_path) = &args.csv {
        std::fs::write(csv_path, recon_csv(&report))
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    match &args.out {
        Some(path) => save_json(&report, path)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalHitskArgs {
    /// Problems file (JSONL with gold answers)
    #[arg(long)]
    problems: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Samples per problem
    #[arg(long)]
    k: Option<u32>,
    /// Bigram model (hier method)
    #[arg(long)]
    bigram: Option<PathBuf>,
    /// fLSA model supplying descriptions (hier method)
    #[arg(long)]
    flsa_model: Option<PathBuf>,
    #[arg(long)]
    max_outline_len: Option<usize>,
    /// Report output (JSON); stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-problem rows as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Direct,
    Outline,
    Hier,
}

pub fn eval_hitsk(args: EvalHitskArgs, config: &RunConfig) -> Result<(), CliError> {
    let problems = load_problems(&args.problems).map_err(validation)?;
    let sample_config = resolve_sample_config(args.k, args.max_outline_len, config)?;
    let hier_inputs = match args.method {
        MethodArg::Hier => {
            let bigram_path = args
                .bigram
                .as_ref()
                .ok_or_else(|| CliError::validation("hier method needs --bigram"))?;
            let model_path = args
                .flsa_model
                .as_ref()
                .ok_or_else(|| CliError::validation("hier method needs --flsa-model"))?;
            Some((
                load_bigram(bigram_path).map_err(validation)?,
                TagModel::load(model_path).map_err(validation)?,
            ))
        }
        _ => None,
    };
    if args.gateway.dry_run {
        return dry_run_hitsk(&args, &problems, &sample_config, &hier_inputs, config);
    }
    let setup = build_gateway(&args.gateway, config)?;
    let gateway = &setup.gateway;
    let prompts = &setup.prompts;
    let generator = |problem: &GradedProblem, index: u32| match (&args.method, &hier_inputs) {
        (MethodArg::Direct, _) => generate_direct(
            &problem.id,
            &problem.problem,
            index,
            gateway,
            prompts,
            &sample_config,
        ),
        (MethodArg::Outline, _) => generate_outline_then_solve(
            &problem.id,
            &problem.problem,
            index,
            gateway,
            prompts,
            &sample_config,
        ),
        (MethodArg::Hier, Some((bigram, model))) => hier_candidate(
            &problem.id,
            &problem.problem,
            bigram,
            &model.descriptions,
            index,
            gateway,
            prompts,
            &sample_config,
        ),
        (MethodArg::Hier, None) => unreachable!("validated above"),
    };
    let report = hits_at_k(&problems, generator, &sample_config)?;
    log::info!(
        "hits@{}: {:.4} over {} problems",
        report.config.k,
        report.accuracy,
        report.rows.len()
    );
    if let Some(csv_path) = &args.csv {
        std::fs::write(csv_path, flsa_core::eval::hits_csv(&report))
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    match &args.out {
        Some(path) => save_json(&report, path)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(())
}

fn dry_run_hitsk(
    args: &EvalHitskArgs,
    problems: &[GradedProblem],
    sample_config: &SampleConfig,
    hier_inputs: &Option<(BigramModel, TagModel)>,
    config: &RunConfig,
) -> Result<(), CliError> {
    let prompts = prompts_only(&args.gateway, config)?;
    for problem in problems {
        match (&args.method, hier_inputs) {
            (MethodArg::Direct, _) => {
                let prompt = render("direct", &prompts.direct, &[("problem", problem.problem.as_str())])
                    .map_err(validation)?;
                print_prompt("direct", &problem.id, &prompt);
            }
            (MethodArg::Outline, _) => {
                let prompt = render(
                    "outline_gen",
                    &prompts.outline_gen,
                    &[("problem", problem.problem.as_str())],
                )
                .map_err(validation)?;
                print_prompt("outline_gen", &problem.id, &prompt);
            }
            (MethodArg::Hier, Some((bigram, model))) => {
                for index in 0..sample_config.k {
                    let mut rng = dry_run_sequence_rng(sample_config, &problem.id, index);
                    let tags = sample_tag_sequence(bigram, sample_config.max_outline_len, &mut rng);
                    let outline =
                        outline_from_tags(&tags, &model.descriptions).map_err(validation)?;
                    let prompt = render(
                        "solve_with_outline",
                        &prompts.solve_with_outline,
                        &[("problem", problem.problem.as_str()), ("outline", &outline)],
                    )
                    .map_err(validation)?;
                    print_prompt("hier", &format!("{}[{index}]", problem.id), &prompt);
                }
            }
            (MethodArg::Hier, None) => unreachable!("validated above"),
        }
    }
    Ok(())
}

