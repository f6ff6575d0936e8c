//! Prompt templates.
//!
//! Templates are plain text files with `{placeholder}` slots, shipped under
//! `templates/` and embedded at build time. A directory of overrides can be
//! loaded at runtime (`PromptSet::from_dir`), replacing any template whose
//! file name matches. Golden tests pin the rendering of every template so
//! wording changes are deliberate.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {name} left placeholder {placeholder} unfilled")]
    Unfilled { name: String, placeholder: String },
    #[error("cannot read template override {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// All templates used by the pipeline.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub e_step: String,
    pub m_step: String,
    pub direct: String,
    pub solve_with_outline: String,
    pub outline_gen: String,
    pub continuation: String,
    pub choice: String,
    pub choice_no_tag: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            e_step: include_str!("../templates/e_step.txt").to_string(),
            m_step: include_str!("../templates/m_step.txt").to_string(),
            direct: include_str!("../templates/direct.txt").to_string(),
            solve_with_outline: include_str!("../templates/solve_with_outline.txt").to_string(),
            outline_gen: include_str!("../templates/outline_gen.txt").to_string(),
            continuation: include_str!("../templates/continuation.txt").to_string(),
            choice: include_str!("../templates/choice.txt").to_string(),
            choice_no_tag: include_str!("../templates/choice_no_tag.txt").to_string(),
        }
    }
}

impl PromptSet {
    /// Load overrides from a directory; files not present keep the
    /// built-in template.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = PromptSet::default();
        let slots: [(&str, &mut String); 8] = [
            ("e_step.txt", &mut set.e_step),
            ("m_step.txt", &mut set.m_step),
            ("direct.txt", &mut set.direct),
            ("solve_with_outline.txt", &mut set.solve_with_outline),
            ("outline_gen.txt", &mut set.outline_gen),
            ("continuation.txt", &mut set.continuation),
            ("choice.txt", &mut set.choice),
            ("choice_no_tag.txt", &mut set.choice_no_tag),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
        }
        Ok(set)
    }
}

/// Substitute `{name}` placeholders. Every slot named in `fills` must be
/// consumed and no `{...}` may remain unfilled; literal braces in the
/// *template* are not supported, but braces inside fill values pass through
/// untouched.
pub fn render(name: &str, template: &str, fills: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| PromptError::Unfilled {
            name: name.to_string(),
            placeholder: "{".to_string(),
        })?;
        let key = &after[..close];
        let value = fills
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::Unfilled {
                name: name.to_string(),
                placeholder: format!("{{{key}}}"),
            })?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out.trim_end().to_string())
}

/// Render a numbered list, one item per line.
pub fn numbered_list<S: AsRef<str>>(items: &[S]) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, item.as_ref());
    }
    out.trim_end().to_string()
}

/// Render options labelled A., B., ...
pub fn lettered_options<S: AsRef<str>>(items: &[S]) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        let letter = (b'A' + i as u8) as char;
        let _ = writeln!(out, "{letter}. {}", item.as_ref());
    }
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_each_slot() {
        let out = render("t", "a {x} b {y} c {x}", &[("x", "1"), ("y", "2")]).unwrap();
        assert_eq!(out, "a 1 b 2 c 1");
    }

    #[test]
    fn unfilled_placeholder_is_an_error() {
        let err = render("t", "a {missing}", &[]).unwrap_err();
        assert!(matches!(err, PromptError::Unfilled { .. }));
    }

    #[test]
    fn braces_in_fill_values_pass_through() {
        let out = render("t", "{x}", &[("x", "{not a slot}")]).unwrap();
        assert_eq!(out, "{not a slot}");
    }

    // Golden renderings: any wording change in a shipped template must
    // show up here as a deliberate diff.
    #[test]
    fn golden_e_step() {
        let set = PromptSet::default();
        let out = render(
            "e_step",
            &set.e_step,
            &[
                ("tag_list", "Tag 1: greetings\nTag 2: farewells"),
                ("context", "[1] hi there"),
                ("segment", "goodbye now"),
            ],
        )
        .unwrap();
        assert_eq!(
            out,
            "You are assigning a tag to one segment of a document. Each tag has a description of what its segments share in common.\n\
             \n\
             Available tags:\n\
             Tag 1: greetings\n\
             Tag 2: farewells\n\
             \n\
             Document context (neighbouring segments):\n\
             [1] hi there\n\
             \n\
             Segment:\n\
             goodbye now\n\
             \n\
             Choose the single tag that best fits the segment. Reply in the exact format \"Tag: <id>\"."
        );
    }

    #[test]
    fn golden_m_step() {
        let set = PromptSet::default();
        let out = render(
            "m_step",
            &set.m_step,
            &[("segments", "1. first\n2. second")],
        )
        .unwrap();
        assert_eq!(
            out,
            "The following text segments were all assigned to the same tag.\n\
             \n\
             Segments:\n\
             1. first\n\
             2. second\n\
             \n\
             Write a single paragraph describing what these segments share in common. Be specific about themes, structure, or purpose. Reply with the description only."
        );
    }

    #[test]
    fn golden_solve_with_outline() {
        let set = PromptSet::default();
        let out = render(
            "solve_with_outline",
            &set.solve_with_outline,
            &[("problem", "What is 2+2?"), ("outline", "1. add")],
        )
        .unwrap();
        assert_eq!(
            out,
            "Solve the following problem.\n\
             \n\
             Problem:\n\
             What is 2+2?\n\
             \n\
             High-level plan:\n\
             1. add\n\
             \n\
             Follow the plan step by step, then end with a line \"Answer: <final answer>\"."
        );
    }

    #[test]
    fn golden_choice_templates() {
        let set = PromptSet::default();
        let with_tag = render(
            "choice",
            &set.choice,
            &[
                ("prefix", "Once upon a time."),
                ("tag", "a storm scene"),
                ("options", "A. rain\nB. sun"),
            ],
        )
        .unwrap();
        assert!(with_tag.contains("described by this tag: a storm scene"));
        let no_tag = render(
            "choice_no_tag",
            &set.choice_no_tag,
            &[("prefix", "Once upon a time."), ("options", "A. rain\nB. sun")],
        )
        .unwrap();
        assert!(!no_tag.contains("tag"));
        assert!(no_tag.contains("Options:\nA. rain\nB. sun"));
    }

    #[test]
    fn directory_overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("direct.txt"), "custom {problem}").unwrap();
        let set = PromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.direct, "custom {problem}");
        assert_eq!(set.m_step, PromptSet::default().m_step);
    }

    #[test]
    fn helpers() {
        assert_eq!(numbered_list(&["a", "b"]), "1. a\n2. b");
        assert_eq!(lettered_options(&["x", "y", "z"]), "A. x\nB. y\nC. z");
    }
}
