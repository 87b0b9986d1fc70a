//! Growing a library from training examples: propose modules, write them,
//! and keep only the ones that pass their test cases.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{check_program, parse_program, serialize_statement, ModuleSignature, Program, SignatureLookup, FINAL_TARGET};
use crate::executor::{execute_program, is_builtin, ErrorKind, ModuleKind, ModuleResolver, StepFault, Value};
use crate::harness::{judge, Gold, TagMatcher, TaskInstance};
use crate::llm::{
    api_doc, extract_module_source, generation_example, initialization_examples, parse_initialization_response, render_prompt,
    slots, Gateway, GatewayError, PromptTemplate, Proposal, Stage,
};
use crate::registry::{Library, ModuleRecord, RegistryError};
use crate::sandbox::{invoke_candidate, load_candidate, CandidateHandle, CapturedError, CapturedErrorKind, Limits};
use crate::tools::SharedBackend;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("{0}")]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Registry(#[from] RegistryError),
}

impl SynthesisError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthesisError::Gateway(e) => e.code(),
            SynthesisError::Registry(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Acceptance threshold on the pass rate.
    pub eta: f64,
    /// Candidates sampled per round.
    pub k: usize,
    /// Repair rounds after the first.
    pub repairs: usize,
    pub temperature: f64,
    pub limits: Limits,
    /// `created_at` of accepted records.
    pub timestamp: u64,
    /// Score candidates of a round on separate threads.
    pub parallel: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            eta: 0.8,
            k: 5,
            repairs: 3,
            temperature: 0.7,
            limits: Limits::default(),
            timestamp: 0,
            parallel: true,
        }
    }
}

/// Stage-1 outcome over a set of examples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Initialization {
    /// Distinct proposals in first-mention order.
    pub proposals: Vec<Proposal>,
    /// Program per example id: the direct answer, or the usage example of
    /// the first module proposed for it.
    pub programs: BTreeMap<String, String>,
    /// Examples the current library already covers.
    pub feasible: Vec<String>,
    /// Examples whose answer could not be used, with the reason.
    pub errors: Vec<(String, String)>,
}

pub fn initialization_prompt(lib: &Library, query: &str) -> String {
    render_prompt(
        &PromptTemplate::shipped(Stage::Initialization),
        &slots([
            ("MODULE_SIGNATURES", lib.signature_prompt_text()),
            ("MODULE_LIST", lib.names().join(", ")),
            ("EXAMPLES", initialization_examples().to_string()),
            ("NEW_QUESTION", query.to_string()),
        ]),
    )
    .expect("shipped initialization template uses known slots")
}

/// Ask, for every example, whether the library suffices and collect the
/// modules proposed when it does not. Gateway failures abort.
pub fn initialize_modules(examples: &[TaskInstance], lib: &Library, gateway: &Gateway) -> Result<Initialization, SynthesisError> {
    let mut out = Initialization::default();
    for ex in examples {
        let reply = gateway.complete(&gateway.request(initialization_prompt(lib, &ex.query)))?;
        let decision = match parse_initialization_response(&reply) {
            Ok(d) => d,
            Err(e) => {
                out.errors.push((ex.id.clone(), e.to_string()));
                continue;
            }
        };
        if decision.feasible {
            out.feasible.push(ex.id.clone());
            if let Some(p) = decision.program {
                out.programs.insert(ex.id.clone(), p);
            }
            continue;
        }
        let first_program = decision.proposals.first().and_then(|p| p.signature.usage_examples.first().cloned());
        match first_program {
            Some(p) => {
                out.programs.insert(ex.id.clone(), p);
            }
            None => out.errors.push((ex.id.clone(), "proposal carries no example program".into())),
        }
        for p in decision.proposals {
            if !out.proposals.iter().any(|q| q.signature.name == p.signature.name) {
                out.proposals.push(p);
            }
        }
    }
    Ok(out)
}

/// A program exercising the module under test, with the expected result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub program: String,
    pub expected: Gold,
    /// Index into the example list the case runs on.
    pub example: usize,
}

fn available(name: &str, lib: &Library, proposal: &str) -> bool {
    name == proposal || is_builtin(name) || lib.contains(name)
}

/// `p` cut after the last call of `module`, returning that call's result.
fn truncate_after(p: &Program, module: &str) -> Option<String> {
    let last = p.statements.iter().rposition(|s| s.module_name == module)?;
    let mut lines: Vec<String> = p.statements[..=last].iter().map(serialize_statement).collect();
    lines.push(format!("{FINAL_TARGET}=RESULT(var={})", p.statements[last].target));
    Some(lines.join("\n"))
}

/// Test cases for `proposal` from the examples whose program calls it. A
/// program whose other modules all exist is checked end to end; otherwise
/// it is cut after the proposal's last call and checked against the
/// example's intermediate label for the proposal, if it has one.
pub fn build_test_cases(proposal: &str, examples: &[TaskInstance], programs: &BTreeMap<String, String>, lib: &Library) -> Vec<TestCase> {
    let mut cases = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let Some(src) = programs.get(&ex.id) else { continue };
        let Ok(p) = parse_program(src) else { continue };
        if !p.mentions_module(proposal) {
            continue;
        }
        let complete = p.modules_used().iter().all(|m| available(m, lib, proposal));
        let case = if complete {
            Some((src.clone(), ex.gold.clone()))
        } else {
            match (truncate_after(&p, proposal), ex.labels.get(proposal)) {
                (Some(t), Some(label)) => Some((t, label.clone())),
                _ => None,
            }
        };
        if let Some((program, expected)) = case {
            cases.push(TestCase {
                id: ex.id.clone(),
                program,
                expected,
                example: i,
            });
        }
    }
    cases
}

/// The library seen through one extra, not yet registered module.
struct OverlayResolver<'a> {
    lib: &'a Library,
    handle: &'a CandidateHandle,
    signature: &'a ModuleSignature,
    limits: Limits,
    last_error: Mutex<Option<CapturedError>>,
}

impl SignatureLookup for OverlayResolver<'_> {
    fn signature(&self, name: &str) -> Option<&ModuleSignature> {
        if name == self.signature.name {
            Some(self.signature)
        } else {
            SignatureLookup::signature(self.lib, name)
        }
    }
}

impl ModuleResolver for OverlayResolver<'_> {
    fn signature(&self, name: &str) -> Option<&ModuleSignature> {
        SignatureLookup::signature(self, name)
    }

    fn invoke(&self, name: &str, args: &[Value], backend: &SharedBackend) -> Result<Value, StepFault> {
        if name != self.signature.name {
            return self.lib.invoke(name, args, backend);
        }
        invoke_candidate(self.handle, args, backend, &self.limits).map_err(|e| {
            let fault = StepFault::new(ErrorKind::Sandbox, e.to_string());
            *self.last_error.lock().unwrap() = Some(e);
            fault
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<CapturedError>,
}

/// Run every case against `handle` layered over `lib`.
pub fn compute_pass_rate(
    handle: &CandidateHandle,
    signature: &ModuleSignature,
    cases: &[TestCase],
    examples: &[TaskInstance],
    lib: &Library,
    backend: &SharedBackend,
    limits: Limits,
) -> (f64, Vec<CaseResult>) {
    let matcher = TagMatcher::default();
    let results: Vec<CaseResult> = cases
        .iter()
        .map(|case| {
            let resolver = OverlayResolver {
                lib,
                handle,
                signature,
                limits,
                last_error: Mutex::new(None),
            };
            let ex = &examples[case.example];
            let env = ex.environment();
            let fail = |e: CapturedError| CaseResult {
                id: case.id.clone(),
                passed: false,
                error: Some(e),
            };
            let diags = check_program(&case.program, &resolver, &env.types());
            if let Some(d) = diags.iter().find(|d| d.is_error()) {
                return fail(CapturedError::new(CapturedErrorKind::Runtime, format!("test program rejected: {d}")));
            }
            let p = parse_program(&case.program).expect("checked above");
            let res = execute_program(&p, &env, &resolver, backend);
            if let Some(err) = res.error {
                let captured = resolver.last_error.lock().unwrap().take();
                return fail(captured.unwrap_or_else(|| CapturedError::new(CapturedErrorKind::Runtime, err.to_string())));
            }
            if judge(&case.expected, &res.final_value, &matcher) {
                CaseResult {
                    id: case.id.clone(),
                    passed: true,
                    error: None,
                }
            } else {
                let mut e = CapturedError::new(CapturedErrorKind::WrongOutput, "final result differs from the expected answer");
                e.expected = Some(case.expected.summary());
                e.actual = Some(res.final_value.summary());
                fail(e)
            }
        })
        .collect();
    let passed = results.iter().filter(|r| r.passed).count();
    let rate = if cases.is_empty() { 0.0 } else { passed as f64 / cases.len() as f64 };
    (rate, results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub round: usize,
    pub index: usize,
    pub pass_rate: f64,
    /// Error kinds raised, one entry per failing case or load failure.
    pub error_kinds: Vec<String>,
    #[serde(skip)]
    pub source: Option<String>,
    #[serde(skip)]
    pub errors: Vec<(String, CapturedError)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub round: usize,
    pub best_pass_rate: f64,
    /// The report handed to the next repair round.
    pub error_report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalReport {
    pub name: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_rate: Option<f64>,
    pub cases: usize,
    pub rounds: usize,
    pub candidates: Vec<CandidateOutcome>,
    pub failures: Vec<FailureReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl ProposalReport {
    fn skipped(name: &str, why: &str) -> Self {
        Self {
            name: name.to_string(),
            accepted: false,
            pass_rate: None,
            cases: 0,
            rounds: 0,
            candidates: Vec::new(),
            failures: Vec::new(),
            skipped: Some(why.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub task: String,
    pub examples: usize,
    pub proposed: Vec<String>,
    pub accepted: Vec<String>,
    pub feasible: usize,
    pub initialization_errors: Vec<(String, String)>,
    pub proposals: Vec<ProposalReport>,
}

impl SynthesisReport {
    /// At least one module was proposed and none survived.
    pub fn nothing_accepted(&self) -> bool {
        !self.proposed.is_empty() && self.accepted.is_empty()
    }
}

fn generation_prompt(sig: &ModuleSignature, error_report: Option<&str>) -> String {
    let stage = if error_report.is_some() { Stage::Repair } else { Stage::Generation };
    let mut s = slots([
        ("API_DOC", api_doc().to_string()),
        ("EXAMPLES", generation_example().to_string()),
        ("MODULE_NAME", sig.name.clone()),
        ("MODULE_HEAD", sig.header_text()),
    ]);
    if let Some(r) = error_report {
        s.insert("ERROR_REPORT".into(), r.to_string());
    }
    render_prompt(&PromptTemplate::shipped(stage), &s).expect("shipped generation templates use known slots")
}

fn describe(case: &str, e: &CapturedError) -> String {
    let mut s = format!("case {case}: {}: {}", e.kind.as_str(), e.message);
    if let Some(l) = e.location {
        s.push_str(&format!(" (line {l})"));
    }
    if let (Some(x), Some(y)) = (&e.expected, &e.actual) {
        s.push_str(&format!(" (expected {x}, got {y})"));
    }
    s
}

const MAX_REPORTED_ERRORS: usize = 12;

/// Source of the best failing candidate of a round and every distinct error
/// the round raised.
fn error_report(round: &[CandidateOutcome]) -> Option<String> {
    let best = round
        .iter()
        .filter(|c| c.source.is_some())
        .fold(None::<&CandidateOutcome>, |b, c| match b {
            Some(b) if b.pass_rate >= c.pass_rate => Some(b),
            _ => Some(c),
        })
        .or_else(|| round.first())?;
    let mut seen: Vec<(CapturedErrorKind, String, Option<String>, Option<String>)> = Vec::new();
    let mut lines = Vec::new();
    for c in round {
        for (case, e) in &c.errors {
            let key = (e.kind, e.message.clone(), e.expected.clone(), e.actual.clone());
            if seen.contains(&key) || lines.len() >= MAX_REPORTED_ERRORS {
                continue;
            }
            seen.push(key);
            lines.push(describe(case, e));
        }
    }
    let mut out = String::new();
    if let Some(src) = &best.source {
        out.push_str("```rhai\n");
        out.push_str(src);
        if !src.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("```\n");
    }
    out.push_str("Errors:\n");
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    Some(out)
}

struct Scored {
    outcome: CandidateOutcome,
    handle: Option<CandidateHandle>,
}

fn score_candidate(
    round: usize,
    index: usize,
    reply: Result<String, GatewayError>,
    sig: &ModuleSignature,
    ctx: &Ctx<'_>,
) -> Result<Scored, GatewayError> {
    let reply = reply?;
    let mut outcome = CandidateOutcome {
        round,
        index,
        pass_rate: 0.0,
        error_kinds: Vec::new(),
        source: None,
        errors: Vec::new(),
    };
    let source = match extract_module_source(&reply) {
        Ok(s) => s.source,
        Err(e) => {
            let ce = CapturedError::new(CapturedErrorKind::Compile, e.to_string());
            outcome.error_kinds.push(ce.kind.as_str().into());
            outcome.errors.push(("load".into(), ce));
            return Ok(Scored { outcome, handle: None });
        }
    };
    outcome.source = Some(source.clone());
    let handle = match load_candidate(&source, sig) {
        Ok(h) => h,
        Err(ce) => {
            outcome.error_kinds.push(ce.kind.as_str().into());
            outcome.errors.push(("load".into(), ce));
            return Ok(Scored { outcome, handle: None });
        }
    };
    let (rate, results) = compute_pass_rate(&handle, sig, ctx.cases, ctx.examples, ctx.lib, ctx.backend, ctx.cfg.limits);
    outcome.pass_rate = rate;
    for r in results {
        if let Some(e) = r.error {
            outcome.error_kinds.push(e.kind.as_str().into());
            outcome.errors.push((r.id, e));
        }
    }
    Ok(Scored {
        outcome,
        handle: Some(handle),
    })
}

struct Ctx<'a> {
    cases: &'a [TestCase],
    examples: &'a [TaskInstance],
    lib: &'a Library,
    backend: &'a SharedBackend,
    cfg: &'a SynthesisConfig,
}

/// Write `proposal` until a candidate passes at least `eta` of `cases` or
/// the repair budget runs out. An accepted module is registered in `lib`.
#[allow(clippy::too_many_arguments)]
pub fn generate_module(
    proposal: &Proposal,
    cases: &[TestCase],
    examples: &[TaskInstance],
    lib: &mut Library,
    gateway: &Gateway,
    backend: &SharedBackend,
    cfg: &SynthesisConfig,
    origin_task: &str,
) -> Result<ProposalReport, SynthesisError> {
    let mut sig = proposal.signature.clone();
    let mut programs: Vec<String> = Vec::new();
    for c in cases {
        if !programs.contains(&c.program) && programs.len() < 2 {
            programs.push(c.program.clone());
        }
    }
    if !programs.is_empty() {
        sig.usage_examples = programs;
    }
    let mut report = ProposalReport {
        name: sig.name.clone(),
        accepted: false,
        pass_rate: None,
        cases: cases.len(),
        rounds: 0,
        candidates: Vec::new(),
        failures: Vec::new(),
        skipped: None,
    };
    let mut feedback: Option<String> = None;
    for round in 0..=cfg.repairs {
        report.rounds = round + 1;
        let prompt = generation_prompt(&sig, feedback.as_deref());
        let replies: Vec<Result<String, GatewayError>> = (0..cfg.k)
            .map(|i| gateway.complete(&gateway.request(prompt.clone()).without_stop().sampled(cfg.temperature, i as u32)))
            .collect();
        let ctx = Ctx {
            cases,
            examples,
            lib,
            backend,
            cfg,
        };
        let scored: Vec<Result<Scored, GatewayError>> = if cfg.parallel && cfg.k > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = replies
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let (ctx, sig) = (&ctx, &sig);
                        s.spawn(move || score_candidate(round, i, r, sig, ctx))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
            })
        } else {
            replies.into_iter().enumerate().map(|(i, r)| score_candidate(round, i, r, &sig, &ctx)).collect()
        };
        let scored: Vec<Scored> = scored.into_iter().collect::<Result<_, _>>()?;

        let best = scored
            .iter()
            .enumerate()
            .filter(|(_, s)| s.handle.is_some() && s.outcome.pass_rate >= cfg.eta)
            .fold(None::<(usize, f64)>, |b, (i, s)| match b {
                Some((_, r)) if r >= s.outcome.pass_rate => b,
                _ => Some((i, s.outcome.pass_rate)),
            });
        let outcomes: Vec<CandidateOutcome> = scored.iter().map(|s| s.outcome.clone()).collect();
        report.candidates.extend(outcomes.iter().cloned());
        if let Some((i, rate)) = best {
            let winner = &scored[i];
            let rec = ModuleRecord {
                signature: sig.clone(),
                source: winner.outcome.source.clone().expect("loaded candidates have source"),
                kind: ModuleKind::Generated,
                origin_task: origin_task.to_string(),
                pass_rate: rate,
                eta_at_acceptance: cfg.eta,
                created_at: cfg.timestamp,
                version: 1,
                test_case_ids: cases.iter().map(|c| c.id.clone()).collect(),
            };
            lib.register(rec)?;
            report.accepted = true;
            report.pass_rate = Some(rate);
            return Ok(report);
        }
        let best_rate = outcomes.iter().map(|o| o.pass_rate).fold(0.0, f64::max);
        feedback = error_report(&outcomes);
        report.failures.push(FailureReport {
            round,
            best_pass_rate: best_rate,
            error_report: feedback.clone().unwrap_or_default(),
        });
        report.pass_rate = Some(report.pass_rate.map_or(best_rate, |r: f64| r.max(best_rate)));
    }
    Ok(report)
}

/// One learning pass over `examples`, starting from `base`, which is left
/// untouched. Returns the grown library and what happened to each
/// proposal.
pub fn learn(
    examples: &[TaskInstance],
    base: &Library,
    gateway: &Gateway,
    backend: &SharedBackend,
    cfg: &SynthesisConfig,
    origin_task: &str,
) -> Result<(Library, SynthesisReport), SynthesisError> {
    let mut lib = base.clone();
    lib.set_limits(cfg.limits);
    let init = initialize_modules(examples, &lib, gateway)?;
    let mut report = SynthesisReport {
        task: origin_task.to_string(),
        examples: examples.len(),
        proposed: init.proposals.iter().map(|p| p.signature.name.clone()).collect(),
        accepted: Vec::new(),
        feasible: init.feasible.len(),
        initialization_errors: init.errors.clone(),
        proposals: Vec::new(),
    };
    for p in &init.proposals {
        let name = p.signature.name.as_str();
        if lib.contains(name) {
            report.proposals.push(ProposalReport::skipped(name, "already in the library"));
            continue;
        }
        let cases = build_test_cases(name, examples, &init.programs, &lib);
        if cases.is_empty() {
            report.proposals.push(ProposalReport::skipped(name, "NO_CASES: no usable test case"));
            continue;
        }
        let pr = generate_module(p, &cases, examples, &mut lib, gateway, backend, cfg, origin_task)?;
        if pr.accepted {
            report.accepted.push(name.to_string());
        }
        report.proposals.push(pr);
    }
    Ok((lib, report))
}
