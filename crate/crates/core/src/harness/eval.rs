//! Stage-3 evaluation: ask for a program per instance, run it, judge it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{counts_for, judge, Prf, TagMatcher};
use super::{TaskInstance, TaskKind};
use crate::dsl::{check_program, parse_program};
use crate::executor::{execute_program, ExecutionResult};
use crate::llm::{execution_examples, parse_program_response, render_prompt, slots, Gateway, PromptTemplate, Stage};
use crate::registry::Library;
use crate::tools::SharedBackend;

/// One executed statement, without timing so reports are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub line_no: usize,
    pub statement: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub query: String,
    pub program: Option<String>,
    pub correct: bool,
    pub predicted: String,
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Prf>,
    pub trace: Vec<TraceLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Pooled over instances, for tasks judged on regions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Prf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

impl Metrics {
    pub fn from_outcomes(outcomes: &[InstanceOutcome]) -> Self {
        let total = outcomes.len();
        let correct = outcomes.iter().filter(|o| o.correct).count();
        let counts = outcomes.iter().filter_map(|o| o.counts).fold(None, |acc: Option<Prf>, c| {
            let mut a = acc.unwrap_or_default();
            a.add(c);
            Some(a)
        });
        Self {
            total,
            correct,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            counts,
            precision: counts.map(|c| c.precision()),
            recall: counts.map(|c| c.recall()),
            f1: counts.map(|c| c.f1()),
        }
    }

    /// The headline number: F1 for tagging, accuracy otherwise.
    pub fn headline(&self, task: TaskKind) -> f64 {
        match (task, self.f1) {
            (TaskKind::Tagging, Some(f)) => f,
            _ => self.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub model_id: String,
    pub library: Vec<String>,
    pub config_digest: String,
    pub metrics: Metrics,
    pub outcomes: Vec<InstanceOutcome>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:<8} {:<40} {}", "id", "result", "predicted", "gold");
        for o in &self.outcomes {
            let predicted = o.error.as_deref().unwrap_or(&o.predicted);
            let _ = writeln!(
                out,
                "{:<24} {:<8} {:<40} {}",
                o.id,
                if o.correct { "ok" } else { "wrong" },
                clip(predicted, 40),
                clip(&o.gold, 60)
            );
        }
        let m = &self.metrics;
        let _ = writeln!(out, "accuracy {}/{} = {:.4}", m.correct, m.total, m.accuracy);
        if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.f1) {
            let _ = writeln!(out, "precision {p:.4} recall {r:.4} f1 {f:.4}");
        }
        out
    }
}

fn clip(s: &str, n: usize) -> String {
    let one_line = s.replace('\n', " ");
    if one_line.chars().count() <= n {
        one_line
    } else {
        one_line.chars().take(n - 3).collect::<String>() + "..."
    }
}

/// The stage-3 prompt for `query` over `lib`.
pub fn execution_prompt(lib: &Library, query: &str) -> String {
    let t = PromptTemplate::shipped(Stage::Execution);
    render_prompt(
        &t,
        &slots([
            ("MODULE_LIST", lib.module_list_text()),
            ("EXAMPLES", execution_examples().to_string()),
            ("NEW_QUESTION", query.to_string()),
        ]),
    )
    .expect("shipped execution template uses known slots")
}

/// Validate and run `source` on an instance's inputs. Validation problems
/// come back as `Err` with one line per diagnostic.
pub fn run_program(inst: &TaskInstance, source: &str, lib: &Library, backend: &SharedBackend) -> Result<ExecutionResult, String> {
    let env = inst.environment();
    let diags = check_program(source, lib, &env.types());
    if diags.iter().any(|d| d.is_error()) {
        return Err(diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"));
    }
    let p = parse_program(source).map_err(|f| format!("{f:?}"))?;
    Ok(execute_program(&p, &env, lib, backend))
}

/// Ask the model for a program for `inst`, run it and judge the result.
pub fn run_instance(inst: &TaskInstance, lib: &Library, gateway: &Gateway, backend: &SharedBackend, matcher: &TagMatcher) -> InstanceOutcome {
    let mut out = InstanceOutcome {
        id: inst.id.clone(),
        query: inst.query.clone(),
        program: None,
        correct: false,
        predicted: String::new(),
        gold: inst.gold.summary(),
        error: None,
        counts: counts_for(&inst.gold, None, matcher),
        trace: Vec::new(),
    };
    let reply = match gateway.complete(&gateway.request(execution_prompt(lib, &inst.query))) {
        Ok(r) => r,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let source = match parse_program_response(&reply) {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.program = Some(source.clone());
    match run_program(inst, &source, lib, backend) {
        Err(diag) => out.error = Some(diag),
        Ok(res) => {
            out.trace = res
                .trace
                .iter()
                .map(|s| TraceLine {
                    line_no: s.line_no,
                    statement: s.statement.clone(),
                    output: s.output.clone(),
                })
                .collect();
            if let Some(e) = &res.error {
                out.error = Some(e.to_string());
            } else {
                out.predicted = res.final_value.summary();
                out.correct = judge(&inst.gold, &res.final_value, matcher);
                out.counts = counts_for(&inst.gold, Some(&res.final_value), matcher);
            }
        }
    }
    out
}

/// Digest of everything an evaluation depends on.
pub fn config_digest(task: &str, lib: &Library, model_id: &str, instances: &[TaskInstance]) -> String {
    let mut h = Sha256::new();
    h.update(task.as_bytes());
    for r in lib.records() {
        h.update(r.name().as_bytes());
        h.update([0]);
        h.update(r.source.as_bytes());
    }
    h.update(model_id.as_bytes());
    for i in instances {
        h.update(serde_json::to_string(i).expect("serializable").as_bytes());
    }
    hex::encode(h.finalize())
}

/// Evaluate `lib` on `instances`. Outcomes are sorted by instance id.
pub fn evaluate(
    instances: &[TaskInstance],
    lib: &Library,
    gateway: &Gateway,
    backend: &SharedBackend,
    matcher: &TagMatcher,
) -> EvalReport {
    let mut outcomes: Vec<InstanceOutcome> = instances
        .iter()
        .map(|i| run_instance(i, lib, gateway, backend, matcher))
        .collect();
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    let task = match instances.first() {
        Some(f) if instances.iter().all(|i| i.task == f.task) => f.task.to_string(),
        Some(_) => "mixed".to_string(),
        None => "none".to_string(),
    };
    EvalReport {
        config_digest: config_digest(&task, lib, gateway.model_id(), instances),
        task,
        model_id: gateway.model_id().to_string(),
        library: lib.names().to_vec(),
        metrics: Metrics::from_outcomes(&outcomes),
        outcomes,
    }
}
