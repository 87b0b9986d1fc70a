use std::fmt;

use serde::{Deserialize, Serialize};

/// Semantic type tags used by module signatures and the validator.
///
/// `mask` and `any` extend the signature tag set so that the mask builtins and
/// the polymorphic `RESULT(var)` / `EVAL(expr)` outputs can be typed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemanticType {
    Image,
    BoxList,
    Mask,
    Text,
    Number,
    Boolean,
    Template,
    List,
    Any,
}

impl SemanticType {
    pub fn as_str(&self) -> &'static str {
        match self {
            SemanticType::Image => "image",
            SemanticType::BoxList => "box-list",
            SemanticType::Mask => "mask",
            SemanticType::Text => "text",
            SemanticType::Number => "number",
            SemanticType::Boolean => "boolean",
            SemanticType::Template => "template",
            SemanticType::List => "list",
            SemanticType::Any => "any",
        }
    }

    /// Whether a value typed `self` may flow into a parameter typed `expected`.
    /// Masks are box lists designated as regions, so the two interconvert.
    pub fn flows_into(self, expected: SemanticType) -> bool {
        use SemanticType::*;
        match (self, expected) {
            (Any, _) | (_, Any) => true,
            (BoxList, Mask) | (Mask, BoxList) => true,
            (a, b) => a == b,
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A keyword argument value as written in program text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Arg {
    /// Bare uppercase identifier. Resolves to a variable reference when the
    /// name is bound, otherwise to an identifier constant for text parameters.
    Name(String),
    /// `'...'` literal, unescaped payload.
    Str(String),
    /// `f"..."` template, payload kept verbatim.
    Template(String),
    /// Decimal literal, with its source lexeme preserved for round-tripping.
    Number(NumberLit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberLit {
    pub text: String,
    pub value: f64,
}

impl Arg {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Arg::Name(_) => "variable-reference",
            Arg::Str(_) => "string-literal",
            Arg::Template(_) => "template-string",
            Arg::Number(_) => "number",
        }
    }
}

/// Placeholders `{VAR}` appearing in a template payload, in order of appearance.
pub fn template_placeholders(template: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                let name = after[..end].trim();
                if !name.is_empty() {
                    out.push(name.to_string());
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Statement {
    pub target: String,
    pub module_name: String,
    pub args: Vec<(String, Arg)>,
    pub line_no: usize,
}

impl Statement {
    pub fn arg(&self, name: &str) -> Option<&Arg> {
        self.args.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    /// Names this statement reads, including template placeholders.
    pub fn referenced_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (_, arg) in &self.args {
            match arg {
                Arg::Name(n) => out.push(n.clone()),
                Arg::Template(t) => out.extend(template_placeholders(t)),
                _ => {}
            }
        }
        out
    }
}

impl PartialEq for Statement {
    /// Structural equality: line numbers are positional metadata and ignored.
    fn eq(&self, other: &Self) -> bool {
        self.target == other.target
            && self.module_name == other.module_name
            && self.args == other.args
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Program {
    pub statements: Vec<Statement>,
    pub source_text: String,
}

impl Program {
    pub fn modules_used(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for s in &self.statements {
            if !names.contains(&s.module_name.as_str()) {
                names.push(&s.module_name);
            }
        }
        names
    }

    pub fn mentions_module(&self, name: &str) -> bool {
        self.statements.iter().any(|s| s.module_name == name)
    }
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

pub const RESULT_MODULE: &str = "RESULT";
pub const FINAL_TARGET: &str = "FINAL_RESULT";

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_in_order() {
        let t = "'left' if {ANSWER0} > 0 else {ANSWER1}";
        assert_eq!(template_placeholders(t), vec!["ANSWER0", "ANSWER1"]);
        assert!(template_placeholders("'no braces'").is_empty());
    }

    #[test]
    fn identifier_pattern() {
        assert!(is_identifier("FINAL_RESULT"));
        assert!(is_identifier("BOX0"));
        assert!(!is_identifier("box0"));
        assert!(!is_identifier("0BOX"));
        assert!(!is_identifier(""));
    }

    #[test]
    fn mask_and_boxes_interconvert() {
        assert!(SemanticType::Mask.flows_into(SemanticType::BoxList));
        assert!(SemanticType::Number.flows_into(SemanticType::Any));
        assert!(!SemanticType::Text.flows_into(SemanticType::Image));
    }
}
