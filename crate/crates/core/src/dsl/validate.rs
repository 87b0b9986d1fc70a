use std::collections::HashMap;

use super::ast::{template_placeholders, Arg, Program, SemanticType, Statement, FINAL_TARGET, RESULT_MODULE};
use super::diagnostic::{Diagnostic, DiagnosticCode};
use super::parser::parse_program;
use super::signature::ModuleSignature;

/// Anything that can answer "what is the signature of module X".
pub trait SignatureLookup {
    fn signature(&self, name: &str) -> Option<&ModuleSignature>;
}

impl SignatureLookup for [ModuleSignature] {
    fn signature(&self, name: &str) -> Option<&ModuleSignature> {
        self.iter().find(|s| s.name == name)
    }
}

impl SignatureLookup for Vec<ModuleSignature> {
    fn signature(&self, name: &str) -> Option<&ModuleSignature> {
        self.as_slice().signature(name)
    }
}

impl SignatureLookup for HashMap<String, ModuleSignature> {
    fn signature(&self, name: &str) -> Option<&ModuleSignature> {
        self.get(name)
    }
}

/// How a bare name argument resolves against the bindings visible at a
/// statement. Validation and execution share this rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NameResolution {
    Reference,
    Constant,
    Undefined,
}

pub fn resolve_name(bound: bool, param_ty: SemanticType) -> NameResolution {
    if bound {
        NameResolution::Reference
    } else if param_ty == SemanticType::Text {
        NameResolution::Constant
    } else {
        NameResolution::Undefined
    }
}

/// Check a program against module signatures and initial bindings. An empty
/// result means every module is known, every keyword matches, every reference
/// resolves, types agree and the program ends in `RESULT`.
pub fn validate_program<L: SignatureLookup + ?Sized>(
    p: &Program,
    known: &L,
    initial: &[(String, SemanticType)],
) -> Vec<Diagnostic> {
    validate_statements(&p.statements, known, initial, true)
}

/// Parse then validate, merging diagnostics from both phases.
pub fn check_program<L: SignatureLookup + ?Sized>(
    source: &str,
    known: &L,
    initial: &[(String, SemanticType)],
) -> Vec<Diagnostic> {
    match parse_program(source) {
        Ok(p) => validate_program(&p, known, initial),
        Err(fail) => {
            let mut diags = fail.diagnostics;
            diags.extend(validate_statements(&fail.statements, known, initial, false));
            diags.sort_by_key(|d| d.line_no);
            diags
        }
    }
}

fn validate_statements<L: SignatureLookup + ?Sized>(
    statements: &[Statement],
    known: &L,
    initial: &[(String, SemanticType)],
    check_result: bool,
) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut env: HashMap<String, SemanticType> = initial.iter().cloned().collect();

    for stmt in statements {
        let line = stmt.line_no;
        let out_ty = match known.signature(&stmt.module_name) {
            None => {
                diags.push(Diagnostic::new(
                    DiagnosticCode::UnknownModule,
                    line,
                    format!("module `{}` is not in the library", stmt.module_name),
                ));
                // still report unresolved references
                for name in stmt.referenced_names() {
                    if !env.contains_key(&name) {
                        diags.push(undefined(line, &name));
                    }
                }
                SemanticType::Any
            }
            Some(sig) => check_call(stmt, sig, &env, &mut diags),
        };

        if env.contains_key(&stmt.target) {
            diags.push(Diagnostic::new(
                DiagnosticCode::Reassignment,
                line,
                format!("`{}` is already bound", stmt.target),
            ));
        } else {
            env.insert(stmt.target.clone(), out_ty);
        }
    }

    if check_result {
        let ok = statements
            .last()
            .is_some_and(|s| s.module_name == RESULT_MODULE && s.target == FINAL_TARGET);
        if !ok {
            let line = statements.last().map(|s| s.line_no).unwrap_or(1);
            diags.push(Diagnostic::new(
                DiagnosticCode::MissingResult,
                line,
                format!("program must end with {FINAL_TARGET}={RESULT_MODULE}(var=...)"),
            ));
        }
    }
    diags
}

fn undefined(line: usize, name: &str) -> Diagnostic {
    Diagnostic::new(
        DiagnosticCode::UndefinedVar,
        line,
        format!("`{name}` is not defined"),
    )
}

/// Check one call and return the type its target receives.
fn check_call(
    stmt: &Statement,
    sig: &ModuleSignature,
    env: &HashMap<String, SemanticType>,
    diags: &mut Vec<Diagnostic>,
) -> SemanticType {
    let line = stmt.line_no;
    let mut result_ty = sig.returns();

    for (key, arg) in &stmt.args {
        let Some(param) = sig.param(key) else {
            diags.push(Diagnostic::new(
                DiagnosticCode::ArityMismatch,
                line,
                format!("unknown parameter `{key}` for {}", sig.name),
            ));
            if let Arg::Name(n) = arg {
                if !env.contains_key(n) {
                    diags.push(undefined(line, n));
                }
            }
            continue;
        };
        let expected = param.ty;
        match arg {
            Arg::Name(n) => match resolve_name(env.contains_key(n), expected) {
                NameResolution::Reference => {
                    let actual = env[n];
                    if !actual.flows_into(expected) {
                        diags.push(mismatch(line, key, expected, actual));
                    }
                    if stmt.module_name == RESULT_MODULE {
                        result_ty = actual;
                    }
                }
                NameResolution::Constant => {}
                NameResolution::Undefined => diags.push(undefined(line, n)),
            },
            Arg::Str(_) => {
                if !SemanticType::Text.flows_into(expected) {
                    diags.push(mismatch(line, key, expected, SemanticType::Text));
                }
            }
            Arg::Number(_) => {
                if !SemanticType::Number.flows_into(expected) {
                    diags.push(mismatch(line, key, expected, SemanticType::Number));
                }
            }
            Arg::Template(t) => {
                if expected != SemanticType::Template {
                    diags.push(Diagnostic::new(
                        DiagnosticCode::TypeMismatch,
                        line,
                        format!("template string not allowed for `{key}` ({expected})"),
                    ));
                }
                for name in template_placeholders(t) {
                    if !env.contains_key(&name) {
                        diags.push(undefined(line, &name));
                    }
                }
            }
        }
    }

    for p in &sig.params {
        if stmt.arg(&p.name).is_none() {
            diags.push(Diagnostic::new(
                DiagnosticCode::ArityMismatch,
                line,
                format!("missing parameter `{}` for {}", p.name, sig.name),
            ));
        }
    }
    result_ty
}

fn mismatch(line: usize, key: &str, expected: SemanticType, actual: SemanticType) -> Diagnostic {
    Diagnostic::new(
        DiagnosticCode::TypeMismatch,
        line,
        format!("`{key}` expects {expected}, got {actual}"),
    )
}
