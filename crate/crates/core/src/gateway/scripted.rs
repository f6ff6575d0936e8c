//! Deterministic scripted backend.
//!
//! Rules are regex → template pairs loaded from a JSONL file. A rule's
//! pattern is matched against the full prompt haystack:
//!
//! ```text
//! <system>
//! <user>
//! seed: <seed_hint>        (line present only when a hint is set)
//! ```
//!
//! Patterns compile with dot-matches-newline, so `.*foo.*bar.*` spans the
//! system/user boundary. The highest-priority matching rule wins; ties go
//! to the rule that appears first in the file. Templates may reference
//! capture groups (`$1`, `${name}`).
//!
//! A catch-all rule (one that matches any prompt) is required, checked
//! against probe strings at load time.

use std::fs;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, ChatRequest, GatewayError};

/// One scripted rule as stored in the rule file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedRule {
    pub pattern: String,
    pub response_template: String,
    #[serde(default)]
    pub priority: i64,
}

#[derive(Debug)]
struct CompiledRule {
    regex: Regex,
    template: String,
    priority: i64,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Vec<CompiledRule>,
}

fn haystack(request: &ChatRequest) -> String {
    match request.seed_hint {
        Some(seed) => format!("{}\n{}\nseed: {seed}", request.system, request.user),
        None => format!("{}\n{}", request.system, request.user),
    }
}

impl ScriptedBackend {
    pub fn from_rules(rules: Vec<ScriptedRule>) -> Result<Self, GatewayError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for (i, rule) in rules.into_iter().enumerate() {
            let regex = RegexBuilder::new(&rule.pattern)
                .dot_matches_new_line(true)
                .build()
                .map_err(|e| GatewayError::MalformedRule {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            compiled.push(CompiledRule {
                regex,
                template: rule.response_template,
                priority: rule.priority,
            });
        }
        let backend = ScriptedBackend { rules: compiled };
        // Patterns like `^$` match the empty probe but nothing real, hence
        // the second probe.
        let probes = ["", "probe\nprobe body\nseed: 0"];
        if !probes
            .iter()
            .all(|p| backend.rules.iter().any(|r| r.regex.is_match(p)))
        {
            return Err(GatewayError::Config(
                "scripted rule file has no catch-all rule".into(),
            ));
        }
        Ok(backend)
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let data = fs::read_to_string(path).map_err(|e| {
            GatewayError::Config(format!("cannot read rule file {}: {e}", path.display()))
        })?;
        let mut rules = Vec::new();
        for (lineno, line) in data.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule: ScriptedRule =
                serde_json::from_str(line).map_err(|e| GatewayError::MalformedRule {
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            rules.push(rule);
        }
        Self::from_rules(rules)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let hay = haystack(request);
        let best = self
            .rules
            .iter()
            .enumerate()
            .filter(|(_, rule)| rule.regex.is_match(&hay))
            .max_by(|(ia, a), (ib, b)| {
                a.priority
                    .cmp(&b.priority)
                    // File order breaks ties: earlier wins.
                    .then(ib.cmp(ia))
            })
            .map(|(_, rule)| rule);
        let rule = best.ok_or(GatewayError::NoMatchingRule)?;
        let captures = rule
            .regex
            .captures(&hay)
            .expect("is_match and captures agree");
        let mut out = String::new();
        captures.expand(&rule.template, &mut out);
        Ok(out)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}
