//! The two evaluation metrics.
//!
//! Reconstruction log-likelihood: for a held-out segment at position `k`,
//! predict its tag, sample `S` alternative continuations of the prefix,
//! and run `T` multiple-choice trials (`C` sampled distractors plus the
//! true segment, shuffled). From the number of correct choices `c` the
//! estimate is `log((c + α) / (T + α·S))`. The No-Tag baseline reruns the
//! identical trials with the tag line omitted: both variants share the
//! same alternatives and the same per-trial draws (paired design), so the
//! tag is the only difference.
//!
//! Hits@K: per problem, draw `K` independent candidate solutions and score
//! 1 if any of them grades correct against the gold answer.

use std::path::Path;
use std::sync::LazyLock;

use rand::seq::index::sample as index_sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{context_window, Document, Segment};
use crate::flsa::{e_step_assign, FlsaError, TagModel};
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::hiersample::{Candidate, SampleConfig, SampleError};
use crate::prompts::{lettered_options, render, PromptError, PromptSet};
use crate::seed;
use crate::TagId;

pub const CONTINUATION_SYSTEM: &str = "You continue documents.";
pub const CHOICE_SYSTEM: &str = "You identify the true continuation.";

pub const CONTINUATION_MAX_TOKENS: u32 = 256;
pub const CHOICE_MAX_TOKENS: u32 = 16;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Flsa(#[from] Box<FlsaError>),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("every case failed; nothing to report")]
    NoCases,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed problems file at line {line}: {message}")]
    MalformedProblem { line: usize, message: String },
}

impl From<FlsaError> for EvalError {
    fn from(e: FlsaError) -> Self {
        EvalError::Flsa(Box::new(e))
    }
}

/// Estimator parameters: `S` alternatives, `T_trials` repeats, `C`
/// distractors per trial, smoothing `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub s: usize,
    pub t_trials: usize,
    pub c: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            s: 10,
            t_trials: 20,
            c: 3,
            alpha: 0.1,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.c < 1 || self.c > self.s {
            return Err(EvalError::Config(format!(
                "need 1 <= C <= S, got C={} S={}",
                self.c, self.s
            )));
        }
        if self.c > 25 {
            return Err(EvalError::Config("C is capped at 25 (option letters)".into()));
        }
        if self.t_trials < 1 {
            return Err(EvalError::Config("T_trials must be >= 1".into()));
        }
        if self.alpha <= 0.0 {
            return Err(EvalError::Config("alpha must be > 0".into()));
        }
        Ok(())
    }
}

/// `log((c + α) / (T + α·S))`.
pub fn smoothed_log_prob(c: usize, t_trials: usize, s: usize, alpha: f64) -> f64 {
    ((c as f64 + alpha) / (t_trials as f64 + alpha * s as f64)).ln()
}

/// A problem with its gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedProblem {
    pub id: String,
    pub problem: String,
    pub answer: String,
}

/// Load problems from JSONL: `{"id": ..., "problem": ..., "answer": ...}`.
pub fn load_problems(path: &Path) -> Result<Vec<GradedProblem>, EvalError> {
    let data = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut problems = Vec::new();
    for (lineno, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let problem: GradedProblem =
            serde_json::from_str(line).map_err(|e| EvalError::MalformedProblem {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if problem.answer.trim().is_empty() {
            return Err(EvalError::MalformedProblem {
                line: lineno + 1,
                message: format!("problem {} has an empty gold answer", problem.id),
            });
        }
        problems.push(problem);
    }
    Ok(problems)
}

fn prefix_block(prefix: &[&Segment]) -> String {
    if prefix.is_empty() {
        return "(the document starts here)".to_string();
    }
    prefix
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Sample `s` independent alternative continuations of the prefix. Each
/// draw carries its own seed hint, so the samples stay distinct under a
/// cache or a deterministic backend.
pub fn sample_alternatives(
    prefix: &[&Segment],
    s: usize,
    gateway: &Gateway,
    prompts: &PromptSet,
    config: &EvalConfig,
    case_key: &str,
) -> Result<Vec<String>, EvalError> {
    let user = render(
        "continuation",
        &prompts.continuation,
        &[("prefix", &prefix_block(prefix))],
    )?;
    let mut alternatives = Vec::with_capacity(s);
    for i in 0..s {
        let request = ChatRequest::sampling(CONTINUATION_SYSTEM, &user, CONTINUATION_MAX_TOKENS)
            .with_seed_hint(seed::sample_hint(config.seed, case_key, i as u32));
        alternatives.push(gateway.complete(&request)?.text);
    }
    Ok(alternatives)
}

/// The randomness of one trial, drawn once and replayed for both the
/// with-tag and no-tag variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPlan {
    /// Indices into the alternatives pool.
    pub distractors: Vec<usize>,
    /// Option order: entry 0 is the true segment, entry `j >= 1` is
    /// `distractors[j-1]`. Position in this vector = letter position.
    pub order: Vec<usize>,
}

impl TrialPlan {
    pub fn draw(rng: &mut impl Rng, s: usize, c: usize) -> Self {
        let distractors = index_sample(rng, s, c).into_vec();
        let mut order: Vec<usize> = (0..=c).collect();
        order.shuffle(rng);
        TrialPlan { distractors, order }
    }

    /// Letter position of the true segment.
    pub fn true_position(&self) -> usize {
        self.order
            .iter()
            .position(|&o| o == 0)
            .expect("plan contains the true option")
    }
}

/// Outcome of one multiple-choice trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub chose_true: bool,
    /// Set when the response was unparseable even after the retry; such a
    /// trial is recorded as incorrect rather than discarded.
    pub flagged: bool,
    pub plan: TrialPlan,
}

fn parse_letter_choice(response: &str, num_options: usize) -> Option<usize> {
    static LABELLED: LazyLock<Regex> = LazyLock::new(|| {
        Regex::new(r"(?i)\bchoice\b\s*[:#]?\s*([A-Za-z])\b").expect("static regex")
    });
    static STANDALONE: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"\b([A-Za-z])\b").expect("static regex"));
    let in_range = |ch: char| -> Option<usize> {
        let idx = (ch.to_ascii_uppercase() as u8).wrapping_sub(b'A') as usize;
        (idx < num_options).then_some(idx)
    };
    if let Some(caps) = LABELLED.captures(response) {
        if let Some(idx) = in_range(caps[1].chars().next().expect("single letter")) {
            return Some(idx);
        }
    }
    STANDALONE
        .captures_iter(response)
        .filter_map(|caps| in_range(caps[1].chars().next().expect("single letter")))
        .next()
}

/// Present the true segment among `C` distractors in the plan's shuffled
/// order and ask which option is the true continuation. `tag` switches
/// between the with-tag prompt and the No-Tag variant.
#[allow(clippy::too_many_arguments)]
pub fn choice_trial(
    prefix: &[&Segment],
    true_segment: &str,
    alternatives: &[String],
    plan: &TrialPlan,
    tag: Option<&str>,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<ChoiceOutcome, EvalError> {
    let option_text = |origin: usize| -> &str {
        if origin == 0 {
            true_segment
        } else {
            &alternatives[plan.distractors[origin - 1]]
        }
    };
    let options: Vec<&str> = plan.order.iter().map(|&o| option_text(o)).collect();
    let options_block = lettered_options(&options);
    let prefix_text = prefix_block(prefix);
    let user = match tag {
        Some(description) => render(
            "choice",
            &prompts.choice,
            &[
                ("prefix", prefix_text.as_str()),
                ("tag", description),
                ("options", &options_block),
            ],
        )?,
        None => render(
            "choice_no_tag",
            &prompts.choice_no_tag,
            &[("prefix", prefix_text.as_str()), ("options", &options_block)],
        )?,
    };
    let request = ChatRequest::greedy(CHOICE_SYSTEM, &user, CHOICE_MAX_TOKENS);
    let response = gateway.complete(&request)?;
    let num_options = options.len();
    let mut picked = parse_letter_choice(&response.text, num_options);
    let mut flagged = false;
    if picked.is_none() {
        let strict = format!(
            "{user}\n\nYour previous reply could not be parsed. Reply with only the option letter, for example \"Choice: A\"."
        );
        let retry = gateway.complete(&ChatRequest::greedy(CHOICE_SYSTEM, &strict, CHOICE_MAX_TOKENS))?;
        picked = parse_letter_choice(&retry.text, num_options);
        if picked.is_none() {
            flagged = true;
        }
    }
    let chose_true = picked == Some(plan.true_position());
    Ok(ChoiceOutcome {
        chose_true,
        flagged,
        plan: plan.clone(),
    })
}

/// Per-case results: correct-choice counts with and without the tag, plus
/// the audit trail of every trial under each variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconTrialRecord {
    pub case_id: String,
    pub predicted_tag: TagId,
    pub c_k: usize,
    pub c_k_prime: usize,
    pub log_prob_with_tag: f64,
    pub log_prob_no_tag: f64,
    pub with_tag_trials: Vec<ChoiceOutcome>,
    pub no_tag_trials: Vec<ChoiceOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub config: EvalConfig,
    pub cases: Vec<ReconTrialRecord>,
    pub excluded: usize,
    pub mean_log_prob_with_tag: f64,
    pub mean_log_prob_no_tag: f64,
}

/// Run the reconstruction estimator over held-out (document, k) cases.
///
/// Failed cases are excluded with a warning and counted in the report.
pub fn eval_reconstruction(
    cases: &[(&Document, usize)],
    tag_model: &TagModel,
    gateway: &Gateway,
    prompts: &PromptSet,
    config: &EvalConfig,
) -> Result<ReconReport, EvalError> {
    config.validate()?;
    let mut records = Vec::new();
    let mut excluded = 0;
    for &(doc, k) in cases {
        match eval_one_case(doc, k, tag_model, gateway, prompts, config) {
            Ok(record) => records.push(record),
            Err(e) => {
                log::warn!("excluding case {}#{k}: {e}", doc.id);
                excluded += 1;
            }
        }
    }
    if records.is_empty() {
        return Err(EvalError::NoCases);
    }
    let mean = |f: &dyn Fn(&ReconTrialRecord) -> f64| -> f64 {
        records.iter().map(f).sum::<f64>() / records.len() as f64
    };
    Ok(ReconReport {
        config: *config,
        mean_log_prob_with_tag: mean(&|r| r.log_prob_with_tag),
        mean_log_prob_no_tag: mean(&|r| r.log_prob_no_tag),
        cases: records,
        excluded,
    })
}

fn eval_one_case(
    doc: &Document,
    k: usize,
    tag_model: &TagModel,
    gateway: &Gateway,
    prompts: &PromptSet,
    config: &EvalConfig,
) -> Result<ReconTrialRecord, EvalError> {
    let case_id = format!("{}#{k}", doc.id);
    let segment = doc
        .segments
        .get(k - 1)
        .ok_or_else(|| EvalError::Config(format!("case {case_id} out of range")))?;
    let context = context_window(doc, k, tag_model.config.window)
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let predicted_tag = e_step_assign(tag_model, segment, &context, gateway, prompts)?;
    let tag_description = tag_model
        .descriptions
        .get(&predicted_tag)
        .cloned()
        .unwrap_or_default();

    let prefix: Vec<&Segment> = doc.segments[..k - 1].iter().collect();
    let alternatives = sample_alternatives(&prefix, config.s, gateway, prompts, config, &case_id)?;

    // All trial randomness is drawn up front from the per-case seed, then
    // replayed for both variants: the paired design.
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(&[
        config.seed,
        seed::fnv1a(b"recon"),
        seed::fnv1a(case_id.as_bytes()),
    ]));
    let plans: Vec<TrialPlan> = (0..config.t_trials)
        .map(|_| TrialPlan::draw(&mut rng, config.s, config.c))
        .collect();

    let run_variant = |tag: Option<&str>| -> Result<Vec<ChoiceOutcome>, EvalError> {
        plans
            .iter()
            .map(|plan| {
                choice_trial(
                    &prefix,
                    &segment.text,
                    &alternatives,
                    plan,
                    tag,
                    gateway,
                    prompts,
                )
            })
            .collect()
    };
    let with_tag_trials = run_variant(Some(&tag_description))?;
    let no_tag_trials = run_variant(None)?;
    let c_k = with_tag_trials.iter().filter(|o| o.chose_true).count();
    let c_k_prime = no_tag_trials.iter().filter(|o| o.chose_true).count();
    Ok(ReconTrialRecord {
        case_id,
        predicted_tag,
        c_k,
        c_k_prime,
        log_prob_with_tag: smoothed_log_prob(c_k, config.t_trials, config.s, config.alpha),
        log_prob_no_tag: smoothed_log_prob(c_k_prime, config.t_trials, config.s, config.alpha),
        with_tag_trials,
        no_tag_trials,
    })
}

/// Pull the final answer out of a solution: an "Answer:" line first, then
/// a boxed expression, then the last standalone number or option letter.
pub fn extract_answer(solution_text: &str) -> Option<String> {
    static ANSWER_LINE: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?i)answer\s*:\s*(.+)").expect("static regex"));
    static TOKEN: LazyLock<Regex> = LazyLock::new(|| {
        Regex::new(r"(?i)\b(-?\d+(?:\.\d+)?(?:/\d+)?|[a-e])\b").expect("static regex")
    });
    if let Some(caps) = ANSWER_LINE.captures_iter(solution_text).last() {
        let candidate = caps[1].trim();
        if !candidate.is_empty() {
            return Some(candidate.to_string());
        }
    }
    if let Some(boxed) = extract_boxed(solution_text) {
        return Some(boxed);
    }
    TOKEN
        .captures_iter(solution_text)
        .last()
        .map(|caps| caps[1].to_string())
}

fn extract_boxed(text: &str) -> Option<String> {
    let start = text.rfind("\\boxed{")?;
    let inner = &text[start + "\\boxed{".len()..];
    let mut depth = 1;
    for (i, ch) in inner.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(inner[..i].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

/// Canonical comparison form: trimmed, lowercased, trailing punctuation
/// stripped, and numeric values (integers, decimals, fractions) reduced
/// to a canonical rational so "6/8", "0.75", and "3/4" all agree.
pub fn normalize_answer(answer: &str) -> String {
    let mut s = answer.trim().to_string();
    while let Some(stripped) = s.strip_suffix(['.', ',', '!', '?', ';', ':']) {
        s = stripped.trim_end().to_string();
    }
    while s.len() > 2 && s.starts_with('(') && s.ends_with(')') {
        s = s[1..s.len() - 1].trim().to_string();
    }
    s = s.trim_matches('$').trim().to_lowercase();
    let numeric = s.replace(',', "");
    if let Some(canonical) = canonical_rational(&numeric) {
        return canonical;
    }
    s
}

fn canonical_rational(s: &str) -> Option<String> {
    let (num_str, den_str) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (s, None),
    };
    let (mut num, mut den): (i128, i128) = match den_str {
        Some(d) => (num_str.parse().ok()?, d.parse().ok()?),
        None => {
            if let Ok(int) = num_str.parse::<i128>() {
                (int, 1)
            } else {
                // Decimal: shift the point into a fraction.
                let (whole, frac) = num_str.split_once('.')?;
                if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                let scale = 10i128.checked_pow(u32::try_from(frac.len()).ok()?)?;
                let whole_part: i128 = if whole.is_empty() || whole == "-" || whole == "+" {
                    0
                } else {
                    whole.parse().ok()?
                };
                let frac_part: i128 = frac.parse().ok()?;
                let negative = whole.starts_with('-');
                let magnitude = whole_part.checked_abs()?.checked_mul(scale)?.checked_add(frac_part)?;
                (if negative { -magnitude } else { magnitude }, scale)
            }
        }
    };
    if den == 0 {
        return None;
    }
    if den < 0 {
        num = -num;
        den = -den;
    }
    let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i128;
    num /= g;
    den /= g;
    Some(if den == 1 {
        num.to_string()
    } else {
        format!("{num}/{den}")
    })
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Rule-based grading: extract, normalize, compare. Missing answers grade
/// false.
pub fn grade_answer(solution_text: &str, gold: &str) -> bool {
    match extract_answer(solution_text) {
        Some(answer) => normalize_answer(&answer) == normalize_answer(gold),
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitsRow {
    pub problem_id: String,
    pub hit: bool,
    /// Sample index of the first correct candidate, when any.
    pub first_hit_index: Option<u32>,
    /// Candidates whose generation failed (counted incorrect).
    pub failures: u32,
    /// Candidates with no extractable answer.
    pub unextractable: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitsReport {
    pub config: SampleConfig,
    pub rows: Vec<HitsRow>,
    pub accuracy: f64,
}

/// Hits@K: per problem, generate `K` candidates and score 1 if any grades
/// correct. The generator is one of the samplers in
/// [`crate::hiersample`], partially applied. Generation stops at the
/// first correct candidate; because candidates are deterministic per
/// (problem, index), the score equals the generate-all-K protocol at a
/// fraction of the call cost.
pub fn hits_at_k<F>(
    problems: &[GradedProblem],
    mut generator: F,
    config: &SampleConfig,
) -> Result<HitsReport, EvalError>
where
    F: FnMut(&GradedProblem, u32) -> Result<Candidate, SampleError>,
{
    config.validate()?;
    if problems.is_empty() {
        return Err(EvalError::Config("no problems to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(problems.len());
    for problem in problems {
        let mut first_hit_index = None;
        let mut failures = 0;
        let mut unextractable = 0;
        for index in 0..config.k {
            match generator(problem, index) {
                Ok(candidate) => {
                    if extract_answer(&candidate.solution_text).is_none() {
                        unextractable += 1;
                    }
                    if grade_answer(&candidate.solution_text, &problem.answer) {
                        first_hit_index = Some(index);
                        break;
                    }
                }
                Err(e) => {
                    log::warn!(
                        "candidate {index} for problem {} failed: {e}",
                        problem.id
                    );
                    failures += 1;
                }
            }
        }
        rows.push(HitsRow {
            problem_id: problem.id.clone(),
            hit: first_hit_index.is_some(),
            first_hit_index,
            failures,
            unextractable,
        });
    }
    let accuracy = rows.iter().filter(|r| r.hit).count() as f64 / rows.len() as f64;
    Ok(HitsReport {
        config: *config,
        rows,
        accuracy,
    })
}

/// Persist a report as pretty JSON.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), EvalError> {
    let data = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, data).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Export per-case reconstruction rows as CSV.
pub fn recon_csv(report: &ReconReport) -> String {
    let mut out = String::from("case_id,predicted_tag,c_k,c_k_prime,log_prob_with_tag,log_prob_no_tag\n");
    for case in &report.cases {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            case.case_id,
            case.predicted_tag,
            case.c_k,
            case.c_k_prime,
            case.log_prob_with_tag,
            case.log_prob_no_tag
        ));
    }
    out
}

/// Export per-problem hits rows as CSV.
pub fn hits_csv(report: &HitsReport) -> String {
    let mut out = String::from("problem_id,hit,first_hit_index,failures,unextractable\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.problem_id,
            row.hit,
            row.first_hit_index
                .map(|i| i.to_string())
                .unwrap_or_default(),
            row.failures,
            row.unextractable
        ));
    }
    out
}
