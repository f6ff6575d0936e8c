//! End-to-end library walkthrough on a planted corpus with a scripted
//! backend: fit tags, learn the bigram dynamics, print the transition
//! graph, and sample one hierarchical solution.
//!
//! Run with `cargo run --example planted_demo`.

use std::collections::BTreeMap;

use flsa_core::corpus::{Corpus, Document, Window};
use flsa_core::dynamics::fit_bigram;
use flsa_core::flsa::{flsa_fit, FitOptions, FlsaConfig};
use flsa_core::gateway::{Gateway, ScriptedBackend, ScriptedRule};
use flsa_core::hiersample::{hier_candidate, SampleConfig};
use flsa_core::prompts::PromptSet;

const KEYWORDS: [&str; 3] = ["setup", "derivation", "conclusion"];

fn rule(pattern: &str, template: &str, priority: i64) -> ScriptedRule {
    ScriptedRule {
        pattern: pattern.to_string(),
        response_template: template.to_string(),
        priority,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Nine documents whose segments follow a setup -> derivation ->
    // conclusion arc, marked by keywords a scripted backend can key on.
    let documents = (0..9)
        .map(|d| {
            let texts = (0..3)
                .map(|j| format!("{} part of solution {d}", KEYWORDS[j]))
                .collect();
            Document::new(format!("sol{d}"), BTreeMap::new(), texts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let corpus = Corpus { documents };

    let mut rules = Vec::new();
    for (i, keyword) in KEYWORDS.iter().enumerate() {
        rules.push(rule(
            &format!(r"Segment:\n[^\n]*{keyword}"),
            &format!("Tag: {}", i + 1),
            10,
        ));
        rules.push(rule(
            &format!("assigned to the same tag.*{keyword}"),
            &format!("The {keyword} step of a worked solution."),
            (6 - i) as i64,
        ));
    }
    rules.push(rule("High-level plan:", "Following the plan... Answer: 42", 3));
    rules.push(rule(".*", "Tag: 1", -100));
    let gateway = Gateway::new(Box::new(ScriptedBackend::from_rules(rules)?));
    let prompts = PromptSet::default();

    let config = FlsaConfig {
        num_tags: 3,
        window: Window::Limited(2),
        seed: 7,
        ..FlsaConfig::default()
    };
    let model = flsa_fit(&corpus, &config, &gateway, &prompts, &FitOptions::default())?;
    println!("converged after iteration {}:", model.iteration);
    for (tag, description) in &model.descriptions {
        println!("  tag {tag}: {description}");
    }

    let sequences: Vec<Vec<u32>> = corpus
        .documents
        .iter()
        .map(|d| model.sequence_for(&d.id))
        .collect();
    let bigram = fit_bigram(&sequences, config.num_tags, 0.1)?;
    let lookup = |tag| model.descriptions.get(&tag).cloned();
    println!("\n{}", flsa_core::dynamics::export_dot(&bigram, &lookup, 0.05, 3));

    let candidate = hier_candidate(
        "demo-problem",
        "What is 6 times 7?",
        &bigram,
        &model.descriptions,
        0,
        &gateway,
        &prompts,
        &SampleConfig::default(),
    )?;
    println!("sampled outline: {:?}", candidate.outline);
    println!("solution: {}", candidate.solution_text);
    Ok(())
}
