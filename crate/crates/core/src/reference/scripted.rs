//! A deterministic completion endpoint that answers stage prompts the way the
//! shipped examples do. Selected with `LLM_API_URL=fixture://[options]`.
//!
//! Options are `&`-separated: `mutate=NAME` serves a broken first draft of
//! NAME until a repair prompt quotes its failures, `adversarial=NAME` and
//! `timeout=NAME` serve hostile candidates for NAME.

use std::collections::BTreeSet;

use crate::executor::is_builtin;
use crate::harness::plan_query;
use crate::llm::{CompletionEndpoint, CompletionRequest, GatewayError};
use crate::tools::fixture_text;

use super::{adversarial_source, fixture_signature, fixture_source, looping_source, mutated_compare_color};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptedOptions {
    pub mutate: BTreeSet<String>,
    pub adversarial: BTreeSet<String>,
    pub timeout: BTreeSet<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    pub options: ScriptedOptions,
}

const REPAIR_MARKER: &str = "A previous implementation failed";

impl ScriptedLlm {
    pub fn new(options: ScriptedOptions) -> Self {
        Self { options }
    }

    /// Parse the part of a `fixture://` URL after the scheme.
    pub fn from_spec(spec: &str) -> Result<Self, GatewayError> {
        let mut options = ScriptedOptions::default();
        for part in spec.split(['&', '?', '/']).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| GatewayError::Config(format!("fixture option `{part}` lacks a value")))?;
            let set = match k {
                "mutate" => &mut options.mutate,
                "adversarial" => &mut options.adversarial,
                "timeout" => &mut options.timeout,
                _ => return Err(GatewayError::Config(format!("unknown fixture option `{k}`"))),
            };
            if v != "COMPARE_COLOR" && k == "mutate" {
                return Err(GatewayError::Config(format!("no mutated fixture for {v}")));
            }
            set.insert(v.to_string());
        }
        Ok(Self { options })
    }

    pub fn respond(&self, prompt: &str) -> String {
        if prompt.contains("Pre-defined modules:") {
            self.initialization(prompt)
        } else if prompt.contains("Pre-defined APIs:") {
            self.generation(prompt)
        } else if prompt.contains("Only these modules may be used:") {
            self.execution(prompt)
        } else {
            fixture_text(prompt).unwrap_or_else(|| prompt.to_string())
        }
    }

    fn initialization(&self, prompt: &str) -> String {
        let q = last_question(prompt);
        let available: BTreeSet<String> = prompt
            .lines()
            .find_map(|l| l.split_once("can answer it: ").map(|(_, r)| r))
            .map(|r| r.trim().trim_end_matches('.').split(',').map(|s| s.trim().to_string()).collect())
            .unwrap_or_default();
        let Some(plan) = plan_query(&q) else {
            return "I am not sure how to answer that.".into();
        };
        let missing: Vec<&str> = plan.needs.iter().copied().filter(|n| !available.contains(*n)).collect();
        if missing.is_empty() {
            return format!("Yes. The program is:\n{}\n", plan.program);
        }
        let mut out = String::new();
        for (i, name) in missing.iter().enumerate() {
            let Some(mut sig) = fixture_signature(name) else {
                return "I am not sure how to answer that.".into();
            };
            sig.usage_examples = vec![format!("Question: {q}\n{}", plan.program)];
            let lead = if i == 0 { "No. We need" } else { "We also need" };
            out.push_str(&format!(
                "{lead} to make a new module \"{name}\" first. Here is the header of the class:\n{}",
                sig.header_text()
            ));
        }
        out
    }

    fn generation(&self, prompt: &str) -> String {
        let Some(name) = prompt
            .lines()
            .find_map(|l| l.split_once("write the module ").map(|(_, r)| r))
            .and_then(|r| r.split_whitespace().next())
        else {
            return "I cannot write that module.".into();
        };
        let repair = prompt.contains(REPAIR_MARKER);
        let source = if self.options.adversarial.contains(name) {
            adversarial_source(name)
        } else if self.options.timeout.contains(name) {
            looping_source(name)
        } else if self.options.mutate.contains(name) {
            let bad = mutated_compare_color();
            // the fix is only offered once the failures are quoted back
            let quoted = repair && prompt.contains(&bad) && prompt.contains("wrong_output");
            Some(if quoted { fixture_source(name).unwrap().to_string() } else { bad })
        } else {
            fixture_source(name).map(str::to_string)
        };
        match source {
            Some(s) => format!("```rhai\n{s}```\n"),
            None => "I cannot write that module.".into(),
        }
    }

    fn execution(&self, prompt: &str) -> String {
        let q = last_question(prompt);
        let available: BTreeSet<&str> = prompt
            .split_once("Only these modules may be used:")
            .map(|(_, rest)| {
                rest.lines()
                    .skip(1)
                    .map(str::trim)
                    .take_while(|l| !l.is_empty() && crate::dsl::is_identifier(l))
                    .collect()
            })
            .unwrap_or_default();
        let Some(plan) = plan_query(&q) else {
            return "I do not know.".into();
        };
        let usable = |n: &&str| is_builtin(n) || available.contains(*n);
        if plan.needs.iter().all(usable) {
            format!("{}\n", plan.program)
        } else {
            match plan.fallback {
                Some(f) => format!("{f}\n"),
                None => "None of the listed modules can answer this.".into(),
            }
        }
    }
}

fn last_question(prompt: &str) -> String {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Question: "))
        .unwrap_or("")
        .trim()
        .to_string()
}

impl CompletionEndpoint for ScriptedLlm {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        Ok(self.respond(&req.prompt))
    }
}
