//! The symbolic program language: one module call per line, keyword
//! arguments only, ending in `FINAL_RESULT=RESULT(var=...)`.

mod ast;
mod diagnostic;
mod parser;
mod signature;
mod validate;

pub use ast::{
    is_identifier, template_placeholders, Arg, NumberLit, Program, SemanticType, Statement,
    FINAL_TARGET, RESULT_MODULE,
};
pub use diagnostic::{Diagnostic, DiagnosticCode, Severity};
pub use parser::{
    join_continuations, parse_program, parse_statement, serialize_arg, serialize_program,
    serialize_statement, starts_statement, ParseFailure,
};
pub use signature::{declared_name, infer_type, parse_signature_block, ModuleSignature, Param, SignatureError};
pub use validate::{check_program, resolve_name, validate_program, NameResolution, SignatureLookup};
