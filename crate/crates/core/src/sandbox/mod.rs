//! Isolated execution of candidate module sources.
//!
//! Candidates are scripts for an embedded interpreter. Each invocation gets a
//! fresh engine that exposes only the backend operations and a few pure
//! helpers; there is no file, network, clock, module loading or `eval`.
//!
//! A candidate declares its name and header and defines `execute` with the
//! signature's parameters in order:
//!
//! ```text
//! /*
//! Input:
//!     image: an image object
//!     object: an object string
//! Output:
//!     box: a list of bounding boxes
//! */
//! const step_name = "LOC";
//! fn execute(img, obj_name) { locate(img, obj_name) }
//! ```

mod convert;

use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use regex::Regex;
use rhai::packages::{
    BasicArrayPackage, BasicMapPackage, BasicMathPackage, CorePackage, LogicPackage, MoreStringPackage, Package,
};
use rhai::{Array, CallFnOptions, Dynamic, Engine, EvalAltResult, ImmutableString, Position, Scope, AST, FLOAT, INT};
use serde::{Deserialize, Serialize};

use crate::dsl::{declared_name, parse_signature_block, ModuleSignature};
use crate::executor::Value;
use crate::tools::{median, DepthGrid, ImageHandle, SharedBackend};

pub use convert::{dynamic_to_boxes, dynamic_to_value, value_to_dynamic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapturedErrorKind {
    Compile,
    Runtime,
    Timeout,
    ForbiddenAccess,
    WrongOutput,
}

impl CapturedErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CapturedErrorKind::Compile => "compile",
            CapturedErrorKind::Runtime => "runtime",
            CapturedErrorKind::Timeout => "timeout",
            CapturedErrorKind::ForbiddenAccess => "forbidden_access",
            CapturedErrorKind::WrongOutput => "wrong_output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapturedError {
    pub kind: CapturedErrorKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<String>,
}

impl CapturedError {
    pub fn new(kind: CapturedErrorKind, message: impl Into<String>) -> Self {
        let mut message: String = message.into();
        if message.trim().is_empty() {
            message = kind.as_str().to_string();
        }
        Self {
            kind,
            message,
            location: None,
            expected: None,
            actual: None,
        }
    }

    fn at(mut self, pos: Position) -> Self {
        self.location = pos.line();
        self
    }
}

/// `kind (line N): message`, the form embedded in repair prompts.
impl fmt::Display for CapturedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.as_str())?;
        if let Some(l) = self.location {
            write!(f, " (line {l})")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for CapturedError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub wall_time_ms: u64,
    /// Interpreter operation budget.
    pub max_operations: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            wall_time_ms: 2000,
            max_operations: 50_000_000,
        }
    }
}

/// The names a candidate may call besides its own functions.
pub const API_SURFACE: &[&str] = &[
    "locate",
    "answer_question",
    "score_alignment",
    "depth_of",
    "inpaint_region",
    "general_text",
];

/// Helpers available alongside the API: `img.size`, `img.width`,
/// `img.height`, `img.crop(box)`, `grid.median(box)`, `grid.get(x, y)`,
/// `median(values)`.
pub const PURE_UTILITIES: &[&str] = &["size", "width", "height", "crop", "median", "get"];

/// Capabilities that are refused outright.
const FORBIDDEN: &[&str] = &[
    "open", "read_file", "write_file", "read", "write", "http", "http_get", "http_post", "fetch", "request",
    "system", "exec", "spawn", "shell", "command", "socket", "connect", "getenv", "env", "eval", "import",
    "timestamp", "now", "sleep", "file", "remove_file",
];

fn forbidden_call_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let names = FORBIDDEN.join("|");
        Regex::new(&format!(r#"\b(?:({names})\s*\(|(import)\s+["'])"#)).unwrap()
    })
}

fn strip_comments(source: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?s)/\*.*?\*/|//[^\n]*").unwrap());
    // keep line count so reported lines stay accurate
    re.replace_all(source, |c: &regex::Captures| {
        c[0].chars().filter(|ch| *ch == '\n').collect::<String>()
    })
    .into_owned()
}

/// First forbidden capability a source reaches for, with its line.
fn scan_forbidden(source: &str) -> Option<(String, usize)> {
    let code = strip_comments(source);
    forbidden_call_re().captures(&code).map(|c| {
        let m = c.get(1).or_else(|| c.get(2)).unwrap();
        let line = code[..m.start()].matches('\n').count() + 1;
        (m.as_str().to_string(), line)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadState {
    Loaded,
    CompileError,
}

/// A compiled candidate ready to be invoked.
#[derive(Debug, Clone)]
pub struct CandidateHandle {
    pub name: String,
    pub source: String,
    pub signature: ModuleSignature,
    pub load_state: LoadState,
    ast: Arc<AST>,
}

impl CandidateHandle {
    pub fn entry_params(&self) -> Vec<String> {
        self.ast
            .iter_functions()
            .find(|f| f.name == "execute")
            .map(|f| f.params.iter().map(|p| p.to_string()).collect())
            .unwrap_or_default()
    }
}

struct Packages {
    core: CorePackage,
    logic: LogicPackage,
    math: BasicMathPackage,
    array: BasicArrayPackage,
    map: BasicMapPackage,
    string: MoreStringPackage,
}

fn packages() -> &'static Packages {
    static P: OnceLock<Packages> = OnceLock::new();
    P.get_or_init(|| Packages {
        core: CorePackage::new(),
        logic: LogicPackage::new(),
        math: BasicMathPackage::new(),
        array: BasicArrayPackage::new(),
        map: BasicMapPackage::new(),
        string: MoreStringPackage::new(),
    })
}

/// Engine with the language packages but no host capabilities.
fn base_engine(limits: &Limits) -> Engine {
    let mut engine = Engine::new_raw();
    let p = packages();
    p.core.register_into_engine(&mut engine);
    p.logic.register_into_engine(&mut engine);
    p.math.register_into_engine(&mut engine);
    p.array.register_into_engine(&mut engine);
    p.map.register_into_engine(&mut engine);
    p.string.register_into_engine(&mut engine);
    engine
        .disable_symbol("eval")
        .set_module_resolver(rhai::module_resolvers::DummyModuleResolver::new())
        .set_max_operations(limits.max_operations)
        .set_max_call_levels(64)
        .set_max_expr_depths(128, 64)
        .set_max_string_size(1 << 20)
        .set_max_array_size(1 << 20)
        .set_max_map_size(1 << 16);
    engine.on_print(|_| {});
    engine.on_debug(|_, _, _| {});
    engine
}

fn rt_err(msg: impl Into<String>) -> Box<EvalAltResult> {
    Box::new(EvalAltResult::ErrorRuntime(Dynamic::from(msg.into()), Position::NONE))
}

fn to_box(v: &Array) -> Result<crate::geometry::BBox, Box<EvalAltResult>> {
    convert::array_to_box(v).ok_or_else(|| rt_err("expected a box [x1, y1, x2, y2]"))
}

fn boxes_to_array(boxes: &[crate::geometry::BBox]) -> Array {
    boxes
        .iter()
        .map(|b| Dynamic::from_array(b.to_array().iter().map(|v| Dynamic::from_int(*v as INT)).collect()))
        .collect()
}

fn register_api(engine: &mut Engine, backend: &SharedBackend) {
    engine
        .register_type_with_name::<ImageHandle>("Image")
        .register_get("size", |img: &mut ImageHandle| -> Array {
            vec![Dynamic::from_int(img.width() as INT), Dynamic::from_int(img.height() as INT)]
        })
        .register_get("width", |img: &mut ImageHandle| img.width() as INT)
        .register_get("height", |img: &mut ImageHandle| img.height() as INT)
        .register_fn("crop", |img: &mut ImageHandle, b: Array| -> Result<ImageHandle, Box<EvalAltResult>> {
            Ok(img.crop(&to_box(&b)?))
        })
        .register_type_with_name::<DepthGrid>("DepthGrid")
        .register_get("width", |g: &mut DepthGrid| g.width as INT)
        .register_get("height", |g: &mut DepthGrid| g.height as INT)
        .register_fn("median", |g: &mut DepthGrid, b: Array| -> Result<FLOAT, Box<EvalAltResult>> {
            Ok(g.median(&to_box(&b)?) as FLOAT)
        })
        .register_fn("get", |g: &mut DepthGrid, x: INT, y: INT| -> Dynamic {
            g.get(x, y).map(|v| Dynamic::from_float(v as FLOAT)).unwrap_or(Dynamic::UNIT)
        })
        .register_fn("median", |values: Array| -> Result<FLOAT, Box<EvalAltResult>> {
            let mut nums = values
                .iter()
                .map(convert::dynamic_number)
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| rt_err("median expects numbers"))?;
            median(&mut nums).ok_or_else(|| rt_err("median of an empty list"))
        });

    let be = Arc::clone(backend);
    engine.register_fn(
        "locate",
        move |img: ImageHandle, name: ImmutableString| -> Result<Array, Box<EvalAltResult>> {
            be.locate(&img, &name).map(|b| boxes_to_array(&b)).map_err(|e| rt_err(e.to_string()))
        },
    );
    let be = Arc::clone(backend);
    engine.register_fn(
        "answer_question",
        move |img: ImageHandle, q: ImmutableString| -> Result<ImmutableString, Box<EvalAltResult>> {
            be.answer_question(&img, &q).map(Into::into).map_err(|e| rt_err(e.to_string()))
        },
    );
    let be = Arc::clone(backend);
    engine.register_fn(
        "score_alignment",
        move |img: ImageHandle, texts: Array| -> Result<Array, Box<EvalAltResult>> {
            let texts: Vec<String> = texts.iter().map(|t| t.to_string()).collect();
            be.score_alignment(&img, &texts)
                .map(|s| s.into_iter().map(|v| Dynamic::from_float(v as FLOAT)).collect())
                .map_err(|e| rt_err(e.to_string()))
        },
    );
    let be = Arc::clone(backend);
    engine.register_fn(
        "score_alignment",
        move |img: ImageHandle, text: ImmutableString| -> Result<FLOAT, Box<EvalAltResult>> {
            be.score_alignment(&img, &[text.to_string()])
                .map(|s| s.first().copied().unwrap_or(0.0) as FLOAT)
                .map_err(|e| rt_err(e.to_string()))
        },
    );
    let be = Arc::clone(backend);
    engine.register_fn("depth_of", move |img: ImageHandle| -> Result<DepthGrid, Box<EvalAltResult>> {
        be.depth_of(&img).map_err(|e| rt_err(e.to_string()))
    });
    let be = Arc::clone(backend);
    engine.register_fn(
        "inpaint_region",
        move |img: ImageHandle, mask: Array, prompt: ImmutableString| -> Result<ImageHandle, Box<EvalAltResult>> {
            let boxes = mask
                .iter()
                .map(|b| b.clone().into_array().map_err(|_| rt_err("mask must be a list of boxes")).and_then(|a| to_box(&a)))
                .collect::<Result<Vec<_>, _>>()?;
            be.inpaint_region(&img, &boxes, &prompt).map_err(|e| rt_err(e.to_string()))
        },
    );
    let be = Arc::clone(backend);
    engine.register_fn(
        "general_text",
        move |prompt: ImmutableString| -> Result<ImmutableString, Box<EvalAltResult>> {
            be.general_text(&prompt).map(Into::into).map_err(|e| rt_err(e.to_string()))
        },
    );
}

/// Compile `source` as an implementation of `expected`. Module logic is not
/// run: only definitions are checked.
pub fn load_candidate(source: &str, expected: &ModuleSignature) -> Result<CandidateHandle, CapturedError> {
    if source.trim().is_empty() {
        return Err(CapturedError::new(CapturedErrorKind::Compile, "empty source"));
    }
    if let Some((name, line)) = scan_forbidden(source) {
        let mut e = CapturedError::new(
            CapturedErrorKind::ForbiddenAccess,
            format!("`{name}` is outside the allowed API ({})", API_SURFACE.join(", ")),
        );
        e.location = Some(line);
        return Err(e);
    }
    let engine = base_engine(&Limits::default());
    let ast = engine.compile(source).map_err(|e| {
        let pos = e.1;
        CapturedError::new(CapturedErrorKind::Compile, e.0.to_string()).at(pos)
    })?;

    match declared_name(source) {
        Some(n) if n == expected.name => {}
        Some(n) => {
            return Err(CapturedError::new(
                CapturedErrorKind::Compile,
                format!("module declares step_name `{n}` but `{}` was requested", expected.name),
            ))
        }
        None => {
            return Err(CapturedError::new(
                CapturedErrorKind::Compile,
                format!("missing `const step_name = \"{}\";` declaration", expected.name),
            ))
        }
    }

    let arity = expected.params.len();
    let entry = ast.iter_functions().find(|f| f.name == "execute" && f.params.len() == arity);
    if entry.is_none() {
        let found: Vec<usize> = ast
            .iter_functions()
            .filter(|f| f.name == "execute")
            .map(|f| f.params.len())
            .collect();
        return Err(CapturedError::new(
            CapturedErrorKind::Compile,
            if found.is_empty() {
                format!("no `execute` entry point; expected fn execute with {arity} parameters")
            } else {
                format!("`execute` takes {found:?} parameters; the signature has {arity}")
            },
        ));
    }

    let signature = match parse_signature_block(source) {
        Ok(sig) if sig.params.len() == arity => sig,
        _ => expected.clone(),
    };
    Ok(CandidateHandle {
        name: expected.name.clone(),
        source: source.to_string(),
        signature,
        load_state: LoadState::Loaded,
        ast: Arc::new(ast),
    })
}

fn classify(err: &EvalAltResult) -> CapturedError {
    let inner = err.unwrap_inner();
    let pos = inner.position();
    let e = match inner {
        EvalAltResult::ErrorTerminated(_, _) => {
            CapturedError::new(CapturedErrorKind::Timeout, "wall-clock limit exceeded")
        }
        EvalAltResult::ErrorTooManyOperations(_) => {
            CapturedError::new(CapturedErrorKind::Timeout, "operation limit exceeded")
        }
        EvalAltResult::ErrorFunctionNotFound(sig, _) => {
            let name = sig.split(|c: char| c == ' ' || c == '(').next().unwrap_or(sig);
            if FORBIDDEN.contains(&name) {
                CapturedError::new(
                    CapturedErrorKind::ForbiddenAccess,
                    format!("`{name}` is outside the allowed API ({})", API_SURFACE.join(", ")),
                )
            } else {
                CapturedError::new(CapturedErrorKind::Runtime, format!("function not found: {sig}"))
            }
        }
        EvalAltResult::ErrorModuleNotFound(m, _) => {
            CapturedError::new(CapturedErrorKind::ForbiddenAccess, format!("module loading is not allowed: {m}"))
        }
        EvalAltResult::ErrorRuntime(v, _) => CapturedError::new(CapturedErrorKind::Runtime, v.to_string()),
        other => CapturedError::new(CapturedErrorKind::Runtime, other.to_string()),
    };
    e.at(pos)
}

/// Run the candidate's entry point on `args` (signature order) against
/// `backend` only, and coerce the result to the declared output type.
pub fn invoke_candidate(
    h: &CandidateHandle,
    args: &[Value],
    backend: &SharedBackend,
    limits: &Limits,
) -> Result<Value, CapturedError> {
    if h.load_state != LoadState::Loaded {
        return Err(CapturedError::new(CapturedErrorKind::Compile, "candidate did not load"));
    }
    let mut engine = base_engine(limits);
    register_api(&mut engine, backend);
    let started = Instant::now();
    let budget = Duration::from_millis(limits.wall_time_ms);
    engine.on_progress(move |_| (started.elapsed() > budget).then(|| Dynamic::from("timeout")));

    let dyn_args: Vec<Dynamic> = args.iter().map(value_to_dynamic).collect();
    let mut scope = Scope::new();
    let out = engine
        .call_fn_with_options::<Dynamic>(
            CallFnOptions::new().eval_ast(false).rewind_scope(true),
            &mut scope,
            &h.ast,
            "execute",
            dyn_args,
        )
        .map_err(|e| classify(&e))?;

    let expected = h.signature.returns();
    dynamic_to_value(&out, expected).ok_or_else(|| {
        let mut e = CapturedError::new(
            CapturedErrorKind::WrongOutput,
            format!(
                "expected {} output, got {}",
                expected,
                convert::dynamic_tag(&out)
            ),
        );
        e.expected = Some(expected.to_string());
        e.actual = Some(convert::dynamic_tag(&out));
        e
    })
}

#[cfg(test)]
mod tests;
