//! Stage prompt templates and slot rendering.
//!
//! A slot is written `__NAME__` in a template body. The question slot is
//! written `__INSERT_NEW_QUESTION__` and filled from `NEW_QUESTION`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initialization,
    Generation,
    Execution,
    Repair,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Initialization => "initialization",
            Stage::Generation => "generation",
            Stage::Execution => "execution",
            Stage::Repair => "repair",
        }
    }
}

pub const SLOT_NAMES: &[&str] = &[
    "MODULE_SIGNATURES",
    "MODULE_LIST",
    "NEW_QUESTION",
    "MODULE_NAME",
    "MODULE_HEAD",
    "ERROR_REPORT",
    "API_DOC",
    "EXAMPLES",
];

pub type Slots = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub body: String,
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"__([A-Z][A-Z_]*[A-Z])__").unwrap())
}

fn slot_for_marker(marker: &str) -> &str {
    if marker == "INSERT_NEW_QUESTION" {
        "NEW_QUESTION"
    } else {
        marker
    }
}

impl PromptTemplate {
    pub fn new(stage: Stage, body: impl Into<String>) -> Self {
        Self {
            stage,
            body: body.into(),
        }
    }

    /// The template shipped for `stage`.
    pub fn shipped(stage: Stage) -> Self {
        let body = match stage {
            Stage::Initialization => include_str!("../../data/prompts/initialization.txt"),
            Stage::Generation => include_str!("../../data/prompts/generation.txt"),
            Stage::Execution => include_str!("../../data/prompts/execution.txt"),
            Stage::Repair => include_str!("../../data/prompts/repair.txt"),
        };
        Self::new(stage, body)
    }

    /// Distinct slot names referenced by the body, in first-use order.
    pub fn slots(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in marker_re().captures_iter(&self.body) {
            let s = slot_for_marker(&c[1]).to_string();
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }
}

pub fn api_doc() -> &'static str {
    include_str!("../../data/prompts/api_doc.txt")
}

pub fn generation_example() -> &'static str {
    include_str!("../../data/prompts/generation_example.txt")
}

pub fn initialization_examples() -> &'static str {
    include_str!("../../data/prompts/initialization_examples.txt")
}

pub fn execution_examples() -> &'static str {
    include_str!("../../data/prompts/execution_examples.txt")
}

/// Substitute every slot in one pass. Values are inserted verbatim and never
/// rescanned.
pub fn render_prompt(t: &PromptTemplate, slots: &Slots) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(t.body.len());
    let mut last = 0;
    for c in marker_re().captures_iter(&t.body) {
        let whole = c.get(0).unwrap();
        let name = slot_for_marker(&c[1]);
        let value = slots
            .get(name)
            .ok_or_else(|| GatewayError::MissingSlot(format!("{name} ({} prompt)", t.stage.as_str())))?;
        out.push_str(&t.body[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&t.body[last..]);
    Ok(out)
}

/// Slot map from pairs.
pub fn slots<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> Slots {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn init_slots(q: &str) -> Slots {
        slots([
            ("MODULE_SIGNATURES", "class LOC():\n".to_string()),
            ("MODULE_LIST", "LOC, COUNT".to_string()),
            ("EXAMPLES", initialization_examples().to_string()),
            ("NEW_QUESTION", q.to_string()),
        ])
    }

    #[test]
    fn stage_one_ends_with_question() {
        let t = PromptTemplate::shipped(Stage::Initialization);
        let p = render_prompt(&t, &init_slots("Is the coat thick or thin?")).unwrap();
        assert!(p.ends_with("Question: Is the coat thick or thin?\n"));
        assert!(p.contains("Yes. The program is:"));
    }

    #[test]
    fn missing_slot_is_reported() {
        let t = PromptTemplate::shipped(Stage::Generation);
        let s = slots([
            ("API_DOC", api_doc().to_string()),
            ("EXAMPLES", String::new()),
            ("MODULE_NAME", "X".to_string()),
        ]);
        let e = render_prompt(&t, &s).unwrap_err();
        assert!(matches!(e, GatewayError::MissingSlot(ref m) if m.starts_with("MODULE_HEAD")));
    }

    #[test]
    fn empty_examples_render() {
        let t = PromptTemplate::new(Stage::Execution, "A\n__EXAMPLES__\nB __INSERT_NEW_QUESTION__");
        let p = render_prompt(&t, &slots([("EXAMPLES", String::new()), ("NEW_QUESTION", "q".into())])).unwrap();
        assert_eq!(p, "A\n\nB q");
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::new(Stage::Execution, "[__EXAMPLES__]");
        let p = render_prompt(&t, &slots([("EXAMPLES", "__NEW_QUESTION__".to_string())])).unwrap();
        assert_eq!(p, "[__NEW_QUESTION__]");
    }

    #[test]
    fn shipped_templates_use_known_slots() {
        for st in [Stage::Initialization, Stage::Generation, Stage::Execution, Stage::Repair] {
            for s in PromptTemplate::shipped(st).slots() {
                assert!(SLOT_NAMES.contains(&s.as_str()), "{s}");
            }
        }
        assert!(PromptTemplate::shipped(Stage::Repair).slots().contains(&"ERROR_REPORT".to_string()));
    }
}
