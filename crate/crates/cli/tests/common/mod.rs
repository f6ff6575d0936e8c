//! Shared fixtures for CLI and acceptance tests.
#![allow(dead_code)] // each test target compiles its own copy

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const KEYWORDS: [&str; 3] = ["alpha", "beta", "gamma"];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_flsa")
}

pub fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

/// Planted corpus: 12 documents x 5 segments, cluster of segment j in
/// document i is (i + j) % 3, i.e. 20 segments per keyword.
pub fn planted_corpus_jsonl() -> String {
    let mut lines = Vec::new();
    for d in 0..12 {
        let segments: Vec<String> = (0..5)
            .map(|j| {
                let cluster = (d + j) % 3;
                format!("\"{} statement {d}-{j} about topic {cluster}\"", KEYWORDS[cluster])
            })
            .collect();
        lines.push(format!(
            "{{\"id\":\"doc{d:02}\",\"segments\":[{}]}}",
            segments.join(",")
        ));
    }
    lines.join("\n") + "\n"
}

/// Rules for the full pipeline: keyword-anchored assignment, keyword
/// descriptions, a fixed solver for outline-conditioned prompts, and a
/// catch-all.
pub fn pipeline_rules_jsonl() -> String {
    let mut lines = Vec::new();
    for (i, keyword) in KEYWORDS.iter().enumerate() {
        lines.push(format!(
            "{{\"pattern\": \"Segment:\\\\n[^\\\\n]*{keyword}\", \"response_template\": \"Tag: {}\", \"priority\": 10}}",
            i + 1
        ));
        lines.push(format!(
            "{{\"pattern\": \"assigned to the same tag.*{keyword}\", \"response_template\": \"Segments about {keyword}.\", \"priority\": {}}}",
            6 - i
        ));
    }
    lines.push(
        "{\"pattern\": \"High-level plan:\", \"response_template\": \"Answer: 7\", \"priority\": 3}"
            .to_string(),
    );
    lines.push(
        "{\"pattern\": \".*\", \"response_template\": \"Tag: 1\", \"priority\": -100}".to_string(),
    );
    lines.join("\n") + "\n"
}

pub fn problems_jsonl() -> String {
    (0..4)
        .map(|i| {
            format!(
                "{{\"id\":\"p{i}\",\"problem\":\"work out quantity {i}\",\"answer\":\"7\"}}"
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}
