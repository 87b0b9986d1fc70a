//! Parsing model responses into decisions, module sources and programs.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dsl::{parse_signature_block, starts_statement, ModuleSignature};

use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub signature: ModuleSignature,
    pub header: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitializationDecision {
    pub feasible: bool,
    pub program: Option<String>,
    pub proposals: Vec<Proposal>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedSource {
    pub source: String,
    pub warnings: Vec<String>,
}

fn decision_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(yes|no)\b").unwrap())
}

fn class_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*class\s+[A-Za-z_][A-Za-z0-9_]*\s*\(\s*\)\s*:").unwrap())
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_+-]*[ \t]*\n(.*?)```").unwrap())
}

/// Net parenthesis depth of `line`, ignoring quoted text.
fn paren_delta(line: &str) -> i32 {
    let mut depth = 0;
    let mut quote: Option<char> = None;
    for ch in line.chars() {
        match (quote, ch) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(ch),
            (None, '(') => depth += 1,
            (None, ')') => depth -= 1,
            _ => {}
        }
    }
    depth
}

/// The first run of program statements in `lines`, including lines that
/// continue an unclosed call.
fn program_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Option<String> {
    let mut out: Vec<&str> = Vec::new();
    let mut depth = 0;
    for line in lines {
        let t = line.trim();
        if out.is_empty() {
            if starts_statement(t) {
                out.push(t);
                depth = paren_delta(t);
            }
            continue;
        }
        if depth > 0 && !t.is_empty() {
            out.push(t);
            depth += paren_delta(t);
        } else if starts_statement(t) {
            out.push(t);
            depth = paren_delta(t);
        } else {
            break;
        }
    }
    (!out.is_empty()).then(|| out.join("\n"))
}

/// Header blocks (`class NAME():` through the closing docstring quote).
fn header_blocks(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if !class_line_re().is_match(lines[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut quotes = 0;
        i += 1;
        while i < lines.len() {
            quotes += lines[i].matches("\"\"\"").count();
            i += 1;
            if quotes >= 2 || (i < lines.len() && class_line_re().is_match(lines[i])) {
                break;
            }
        }
        let indent = lines[start].len() - lines[start].trim_start().len();
        let block: Vec<&str> = lines[start..i]
            .iter()
            .map(|l| if l.len() >= indent && l[..indent].trim().is_empty() { &l[indent..] } else { l.trim_start() })
            .collect();
        blocks.push(block.join("\n") + "\n");
    }
    blocks
}

pub fn parse_initialization_response(text: &str) -> Result<InitializationDecision, GatewayError> {
    let lines: Vec<&str> = text.lines().collect();
    let Some((idx, word)) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| decision_re().captures(l).map(|c| (i, c[1].to_lowercase())))
    else {
        return Err(GatewayError::UnparseableDecision("no leading Yes/No".into()));
    };

    if word == "yes" {
        let first_rest = lines[idx].split_once(':').map(|(_, r)| r).unwrap_or("");
        let program = program_lines(std::iter::once(first_rest).chain(lines[idx + 1..].iter().copied()))
            .ok_or_else(|| GatewayError::UnparseableDecision("\"Yes\" without a program".into()))?;
        return Ok(InitializationDecision {
            feasible: true,
            program: Some(program),
            proposals: Vec::new(),
            raw: text.to_string(),
        });
    }

    let rest = lines[idx..].join("\n");
    let mut proposals: Vec<Proposal> = Vec::new();
    for header in header_blocks(&rest) {
        if let Ok(signature) = parse_signature_block(&header) {
            if !proposals.iter().any(|p| p.signature.name == signature.name) {
                proposals.push(Proposal { signature, header });
            }
        }
    }
    if proposals.is_empty() {
        return Err(GatewayError::UnparseableDecision("\"No\" without a parsable module header".into()));
    }
    Ok(InitializationDecision {
        feasible: false,
        program: None,
        proposals,
        raw: text.to_string(),
    })
}

fn looks_like_code(t: &str) -> bool {
    ["/*", "*", "//", "const ", "let ", "fn ", "private fn ", "}", "{", "import ", "class "]
        .iter()
        .any(|p| t.starts_with(p))
}

/// Code from a stage-2 response: the first fenced block if any, else the
/// first unfenced run of code.
pub fn extract_module_source(text: &str) -> Result<ExtractedSource, GatewayError> {
    let fenced: Vec<&str> = fence_re().captures_iter(text).map(|c| c.get(1).unwrap().as_str()).collect();
    if let Some(first) = fenced.first() {
        if first.trim().is_empty() {
            return Err(GatewayError::NoCodeFound("empty code block".into()));
        }
        let mut warnings = Vec::new();
        if fenced.len() > 1 {
            warnings.push(format!("response contained {} code blocks; using the first", fenced.len()));
        }
        return Ok(ExtractedSource {
            source: first.to_string(),
            warnings,
        });
    }

    let lines: Vec<&str> = text.lines().collect();
    let Some(start) = lines.iter().position(|l| looks_like_code(l.trim_start())) else {
        return Err(GatewayError::NoCodeFound("response contains no code".into()));
    };
    let mut end = start;
    let mut depth: i32 = 0;
    let mut in_comment = false;
    for (i, line) in lines.iter().enumerate().skip(start) {
        let t = line.trim_start();
        let code = in_comment || depth > 0 || t.is_empty() || looks_like_code(t);
        if !code {
            break;
        }
        if t.starts_with("/*") {
            in_comment = true;
        }
        if in_comment {
            if t.contains("*/") {
                in_comment = false;
            }
        } else {
            depth += t.matches('{').count() as i32 - t.matches('}').count() as i32;
        }
        if !t.is_empty() {
            end = i + 1;
        }
    }
    let source = lines[start..end].join("\n") + "\n";
    if !source.contains("fn ") {
        return Err(GatewayError::NoCodeFound("no function definition found".into()));
    }
    Ok(ExtractedSource {
        source,
        warnings: Vec::new(),
    })
}

/// Program text from a stage-3 response.
pub fn parse_program_response(text: &str) -> Result<String, GatewayError> {
    let body = fence_re()
        .captures(text)
        .map(|c| c.get(1).unwrap().as_str())
        .unwrap_or(text);
    program_lines(body.lines()).ok_or_else(|| GatewayError::NoCodeFound("response contains no program".into()))
}
