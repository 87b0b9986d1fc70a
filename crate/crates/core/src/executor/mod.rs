//! Step-by-step interpretation of programs with a full trace.

mod builtins;
mod template;
mod value;

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dsl::{resolve_name, serialize_statement, Arg, ModuleSignature, NameResolution, Program, SemanticType, FINAL_TARGET};
use crate::tools::{SharedBackend, ToolError};

pub use builtins::{
    builtin_headers, builtin_signature, builtin_signatures, check_location, crop_expanded, crop_side,
    half_box, is_builtin, run_builtin,
};
pub use template::{eval_expression, eval_template, render_literal, substitute, TemplateError};
pub use value::{format_boxes, format_number, AlreadyBound, Environment, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Backend,
    Sandbox,
    Type,
    Template,
    /// Unknown module or unresolvable name; only reachable for programs that
    /// skipped validation.
    Name,
}

impl ErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorKind::Backend => "backend",
            ErrorKind::Sandbox => "sandbox",
            ErrorKind::Type => "type",
            ErrorKind::Template => "template",
            ErrorKind::Name => "name",
        }
    }
}

/// Why a single step failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFault {
    pub kind: ErrorKind,
    pub message: String,
}

impl StepFault {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl From<ToolError> for StepFault {
    fn from(e: ToolError) -> Self {
        StepFault::new(ErrorKind::Backend, e.to_string())
    }
}

impl fmt::Display for StepFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.as_str(), self.message)
    }
}

/// Source of non-builtin modules.
pub trait ModuleResolver {
    fn signature(&self, name: &str) -> Option<&ModuleSignature>;
    fn invoke(&self, name: &str, args: &[Value], backend: &SharedBackend) -> Result<Value, StepFault>;
}

/// Resolver with no generated modules.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinsOnly;

impl ModuleResolver for BuiltinsOnly {
    fn signature(&self, _name: &str) -> Option<&ModuleSignature> {
        None
    }
    fn invoke(&self, name: &str, _args: &[Value], _backend: &SharedBackend) -> Result<Value, StepFault> {
        Err(StepFault::new(ErrorKind::Name, format!("unknown module {name}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    Builtin,
    Generated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub line_no: usize,
    pub statement: String,
    pub module_kind: ModuleKind,
    pub resolved_inputs: Vec<(String, String)>,
    pub output: String,
    pub elapsed_ms: f64,
}

/// Timing is ignored: two runs of the same program compare equal.
impl PartialEq for StepRecord {
    fn eq(&self, o: &Self) -> bool {
        self.line_no == o.line_no
            && self.statement == o.statement
            && self.module_kind == o.module_kind
            && self.resolved_inputs == o.resolved_inputs
            && self.output == o.output
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeError {
    pub line_no: usize,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "RUNTIME_ERROR line {} ({}): {}",
            self.line_no,
            self.kind.as_str(),
            self.message
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub final_value: Value,
    pub trace: Vec<StepRecord>,
    pub status: Status,
    pub error: Option<RuntimeError>,
}

impl ExecutionResult {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    /// One JSON object per step.
    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for step in &self.trace {
            serde_json::to_writer(&mut w, step)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn lookup_signature<'a>(name: &str, resolver: &'a dyn ModuleResolver) -> Option<(&'a ModuleSignature, ModuleKind)> {
    builtin_signature(name)
        .map(|s| (s, ModuleKind::Builtin))
        .or_else(|| resolver.signature(name).map(|s| (s, ModuleKind::Generated)))
}

fn resolve_arg(arg: &Arg, ty: SemanticType, env: &Environment) -> Result<Value, StepFault> {
    match arg {
        Arg::Name(n) => match resolve_name(env.contains(n), ty) {
            NameResolution::Reference => Ok(env.get(n).cloned().unwrap_or(Value::Null)),
            NameResolution::Constant => Ok(Value::text(n.clone())),
            NameResolution::Undefined => Err(StepFault::new(ErrorKind::Name, format!("undefined variable {n}"))),
        },
        Arg::Str(s) | Arg::Template(s) => Ok(Value::text(s.clone())),
        Arg::Number(n) => Ok(Value::Number(n.value)),
    }
}

/// Run `p` statement by statement. Execution stops at the first failing step;
/// the trace keeps every step that completed.
pub fn execute_program(
    p: &Program,
    init: &Environment,
    resolver: &dyn ModuleResolver,
    backend: &SharedBackend,
) -> ExecutionResult {
    let mut env = init.clone();
    let mut trace = Vec::with_capacity(p.statements.len());
    let mut final_value = None;

    for st in &p.statements {
        let started = Instant::now();
        let fail = |fault: StepFault, trace: Vec<StepRecord>| ExecutionResult {
            final_value: Value::Null,
            trace,
            status: Status::Error,
            error: Some(RuntimeError {
                line_no: st.line_no,
                kind: fault.kind,
                message: fault.message,
            }),
        };

        let Some((sig, kind)) = lookup_signature(&st.module_name, resolver) else {
            return fail(
                StepFault::new(ErrorKind::Name, format!("unknown module {}", st.module_name)),
                trace,
            );
        };

        let mut args = Vec::with_capacity(sig.params.len());
        for param in &sig.params {
            let Some(arg) = st.arg(&param.name) else {
                return fail(
                    StepFault::new(ErrorKind::Type, format!("missing argument `{}`", param.name)),
                    trace,
                );
            };
            let v = match resolve_arg(arg, param.ty, &env) {
                Ok(v) => v,
                Err(f) => return fail(f, trace),
            };
            let template_ok = param.ty == SemanticType::Template && matches!(arg, Arg::Template(_));
            if !template_ok && !v.fits(param.ty) {
                return fail(
                    StepFault::new(
                        ErrorKind::Type,
                        format!("`{}` expects {}, got {}", param.name, param.ty, v.tag_name()),
                    ),
                    trace,
                );
            }
            args.push(v);
        }

        let result = match kind {
            ModuleKind::Builtin => run_builtin(&st.module_name, &args, backend.as_ref(), &env),
            ModuleKind::Generated => resolver.invoke(&st.module_name, &args, backend),
        };
        let out = match result {
            Ok(v) => v,
            Err(f) => return fail(f, trace),
        };

        trace.push(StepRecord {
            line_no: st.line_no,
            statement: serialize_statement(st),
            module_kind: kind,
            resolved_inputs: sig
                .params
                .iter()
                .zip(&args)
                .map(|(p, v)| (p.name.clone(), v.summary()))
                .collect(),
            output: out.summary(),
            elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
        if st.target == FINAL_TARGET {
            final_value = Some(out.clone());
        }
        if env.bind(&st.target, out).is_err() {
            return fail(
                StepFault::new(ErrorKind::Name, format!("REASSIGNMENT of {}", st.target)),
                trace,
            );
        }
    }

    match final_value {
        Some(v) => ExecutionResult {
            final_value: v,
            trace,
            status: Status::Ok,
            error: None,
        },
        None => ExecutionResult {
            final_value: Value::Null,
            trace,
            status: Status::Error,
            error: Some(RuntimeError {
                line_no: p.statements.last().map(|s| s.line_no).unwrap_or(0),
                kind: ErrorKind::Name,
                message: "program never bound FINAL_RESULT".into(),
            }),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::geometry::BBox;
    use crate::tools::{ImageHandle, SceneGraph, SceneObject, SyntheticBackend};
    use std::sync::Arc;

    fn synthetic() -> SharedBackend {
        Arc::new(SyntheticBackend)
    }

    const PURSE: &str = "BOX0=LOC(image=IMAGE,object='person')\nIMAGE0=CROP_LEFTOF(image=IMAGE,box=BOX0)\nBOX1=LOC(image=IMAGE0,object='purse')\nANSWER0=COUNT(box=BOX1)\nANSWER1=EVAL(expr=f\"'left' if {ANSWER0} > 0 else 'right'\")\nFINAL_RESULT=RESULT(var=ANSWER1)";

    fn purse_scene(purse_x: i64) -> Environment {
        let scene = SceneGraph::new(200, 100)
            .with_object(SceneObject::new("p", "person", BBox::new(90, 10, 120, 90), 0.5))
            .with_object(SceneObject::new("b", "purse", BBox::new(purse_x, 50, purse_x + 20, 70), 0.4));
        Environment::new().with("IMAGE", Value::Image(ImageHandle::new(scene)))
    }

    #[test]
    fn purse_program_hand_trace() {
        // person center x = 105; purse at [20,40) lies left of it
        let p = parse_program(PURSE).unwrap();
        let r = execute_program(&p, &purse_scene(20), &BuiltinsOnly, &synthetic());
        assert!(r.is_ok(), "{:?}", r.error);
        assert_eq!(r.final_value, Value::text("left"));
        assert_eq!(r.trace.len(), 6);
        assert_eq!(r.trace[3].output, "1");
        let right = execute_program(&p, &purse_scene(160), &BuiltinsOnly, &synthetic());
        assert_eq!(right.final_value, Value::text("right"));
    }

    #[test]
    fn minimal_program() {
        let p = parse_program("FINAL_RESULT=RESULT(var=IMAGE)").unwrap();
        let env = purse_scene(20);
        let r = execute_program(&p, &env, &BuiltinsOnly, &synthetic());
        assert_eq!(&r.final_value, env.get("IMAGE").unwrap());
        assert_eq!(r.trace.len(), 1);
    }

    struct Faulty(ModuleSignature);

    impl ModuleResolver for Faulty {
        fn signature(&self, name: &str) -> Option<&ModuleSignature> {
            (name == self.0.name).then_some(&self.0)
        }
        fn invoke(&self, _: &str, _: &[Value], _: &SharedBackend) -> Result<Value, StepFault> {
            Err(StepFault::new(ErrorKind::Sandbox, "runtime: boom"))
        }
    }

    #[test]
    fn generated_fault_halts_with_partial_trace() {
        let sig = crate::dsl::parse_signature_block(
            "class BOOM():\n\"\"\"\nInput:\n    image: an image object\nOutput:\n    result: a string\n\"\"\"",
        )
        .unwrap();
        let p = parse_program("BOX0=LOC(image=IMAGE,object='person')\nANSWER0=BOOM(image=IMAGE)\nFINAL_RESULT=RESULT(var=ANSWER0)").unwrap();
        let r = execute_program(&p, &purse_scene(20), &Faulty(sig), &synthetic());
        assert_eq!(r.status, Status::Error);
        let e = r.error.unwrap();
        assert_eq!((e.line_no, e.kind), (2, ErrorKind::Sandbox));
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn unvalidated_programs_fail_cleanly() {
        let p = parse_program("ANSWER0=COUNT(box=BOX9)\nFINAL_RESULT=RESULT(var=ANSWER0)").unwrap();
        let r = execute_program(&p, &Environment::new(), &BuiltinsOnly, &synthetic());
        assert_eq!(r.error.unwrap().kind, ErrorKind::Name);
        let p = parse_program("ANSWER0=COUNT(box=IMAGE)\nFINAL_RESULT=RESULT(var=ANSWER0)").unwrap();
        let r = execute_program(&p, &purse_scene(1), &BuiltinsOnly, &synthetic());
        assert_eq!(r.error.unwrap().kind, ErrorKind::Type);
    }

    #[test]
    fn trace_export_is_jsonl() {
        let p = parse_program(PURSE).unwrap();
        let r = execute_program(&p, &purse_scene(20), &BuiltinsOnly, &synthetic());
        let mut buf = Vec::new();
        r.write_trace(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        let first: StepRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.statement, "BOX0=LOC(image=IMAGE,object='person')");
    }
}
