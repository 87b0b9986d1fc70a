use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    UnknownModule,
    UndefinedVar,
    ArityMismatch,
    TypeMismatch,
    MissingResult,
    Reassignment,
    Syntax,
}

impl DiagnosticCode {
    pub fn severity(self) -> Severity {
        // Every code blocks execution.
        Severity::Error
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::UnknownModule => "UNKNOWN_MODULE",
            DiagnosticCode::UndefinedVar => "UNDEFINED_VAR",
            DiagnosticCode::ArityMismatch => "ARITY_MISMATCH",
            DiagnosticCode::TypeMismatch => "TYPE_MISMATCH",
            DiagnosticCode::MissingResult => "MISSING_RESULT",
            DiagnosticCode::Reassignment => "REASSIGNMENT",
            DiagnosticCode::Syntax => "SYNTAX",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub message: String,
    pub line_no: usize,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, line_no: usize, message: impl Into<String>) -> Self {
        Self {
            severity: code.severity(),
            code,
            message: message.into(),
            line_no,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: {} {}",
            self.line_no,
            self.code.as_str(),
            self.message
        )
    }
}
