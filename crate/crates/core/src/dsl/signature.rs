//! Module signatures and the header-block parser.
//!
//! A header block is the documentation section a module carries:
//!
//! ```text
//! class COMPARE_SIZE():
//!     """
//!     Compare the size of two objects in the image.
//!     Input:
//!         image: an image object
//!         box0: a list of bounding boxes
//!     Output:
//!         flag: return True if first object is larger else False
//!     Examples:
//!         FLAG0=COMPARE_SIZE(image=IMAGE,box0=BOX0,box1=BOX1)
//!     """
//! ```
//!
//! The same sections are read from script module sources, where the name
//! comes from the `step_name` declaration.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{is_identifier, SemanticType};
use super::parser::join_continuations;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: SemanticType,
    pub description: String,
}

impl Param {
    pub fn new(name: &str, ty: SemanticType, description: &str) -> Self {
        Self {
            name: name.to_string(),
            ty,
            description: description.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSignature {
    pub name: String,
    pub params: Vec<Param>,
    pub output: Param,
    pub doc: String,
    pub usage_examples: Vec<String>,
}

impl ModuleSignature {
    pub fn returns(&self) -> SemanticType {
        self.output.ty
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Render as a class-style header block, the form used in stage prompts.
    pub fn header_text(&self) -> String {
        let mut out = format!("class {}():\n    \"\"\"\n", self.name);
        for line in self.doc.lines() {
            out.push_str("    ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("    Input:\n");
        for p in &self.params {
            out.push_str(&format!("        {}: {}\n", p.name, p.description));
        }
        out.push_str("    Output:\n");
        out.push_str(&format!(
            "        {}: {}\n",
            self.output.name, self.output.description
        ));
        if !self.usage_examples.is_empty() {
            out.push_str("    Examples:\n");
            for ex in &self.usage_examples {
                for line in ex.lines() {
                    out.push_str("        ");
                    out.push_str(line);
                    out.push('\n');
                }
            }
        }
        out.push_str("    \"\"\"\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("MALFORMED_SIGNATURE: {0}")]
    Malformed(String),
}

/// Infer a semantic type tag from a parameter description.
pub fn infer_type(description: &str) -> SemanticType {
    let lower = description.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    let has = |w: &str| words.contains(&w);
    let bounding = words
        .windows(2)
        .any(|p| p[0] == "bounding" && (p[1] == "box" || p[1] == "boxes"));

    if bounding {
        SemanticType::BoxList
    } else if has("mask") || has("masks") {
        SemanticType::Mask
    } else if has("template") || has("expression") {
        SemanticType::Template
    } else if has("list") {
        SemanticType::List
    } else if has("image") || has("images") {
        SemanticType::Image
    } else if has("number") || has("integer") || has("index") {
        SemanticType::Number
    } else if has("true") || has("false") || has("boolean") {
        SemanticType::Boolean
    } else if has("any") {
        SemanticType::Any
    } else {
        SemanticType::Text
    }
}

fn step_name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"step_name\s*=\s*['"]([A-Za-z_][A-Za-z0-9_]*)['"]"#).unwrap())
}

fn class_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^\s*class\s+([A-Za-z_][A-Za-z0-9_]*)").unwrap())
}

fn param_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$").unwrap())
}

#[derive(PartialEq)]
enum Section {
    Doc,
    Input,
    Output,
    Examples,
}

/// Module name declared by a header or source: `step_name` wins over the
/// class name, and the result is upper-cased.
pub fn declared_name(source: &str) -> Option<String> {
    let raw = step_name_re()
        .captures(source)
        .or_else(|| class_re().captures(source))
        .map(|c| c[1].to_string())?;
    let name = raw.to_uppercase();
    is_identifier(&name).then_some(name)
}

/// Parse a header block or module source into a signature.
pub fn parse_signature_block(source: &str) -> Result<ModuleSignature, SignatureError> {
    let name = declared_name(source)
        .ok_or_else(|| SignatureError::Malformed("no module name found".into()))?;

    let mut section = Section::Doc;
    let mut in_doc = false;
    let mut seen_input = false;
    let mut seen_output = false;
    let mut doc_lines: Vec<String> = Vec::new();
    let mut inputs: Vec<(String, String)> = Vec::new();
    let mut outputs: Vec<(String, String)> = Vec::new();
    let mut example_lines: Vec<String> = Vec::new();

    for raw in source.lines() {
        let line = raw.trim();
        let delim = line.starts_with("\"\"\"") || line.starts_with("/*") || line.starts_with("*/");
        if delim {
            if in_doc && (seen_input || seen_output) {
                break;
            }
            in_doc = true;
            continue;
        }
        match line {
            "Input:" => {
                section = Section::Input;
                seen_input = true;
                in_doc = true;
                continue;
            }
            "Output:" => {
                section = Section::Output;
                seen_output = true;
                in_doc = true;
                continue;
            }
            "Examples:" | "Example:" => {
                section = Section::Examples;
                continue;
            }
            _ => {}
        }
        if !in_doc || line.is_empty() {
            continue;
        }
        match section {
            Section::Doc => doc_lines.push(line.to_string()),
            Section::Input | Section::Output => {
                let target = if section == Section::Input {
                    &mut inputs
                } else {
                    &mut outputs
                };
                if let Some(c) = param_line_re().captures(line) {
                    target.push((c[1].to_string(), c[2].trim().to_string()));
                } else if let Some(last) = target.last_mut() {
                    last.1.push(' ');
                    last.1.push_str(line);
                }
            }
            Section::Examples => example_lines.push(line.to_string()),
        }
    }

    if !seen_input {
        return Err(SignatureError::Malformed(format!("{name}: missing Input section")));
    }
    if !seen_output || outputs.is_empty() {
        return Err(SignatureError::Malformed(format!("{name}: missing Output section")));
    }

    let params = inputs
        .into_iter()
        .map(|(n, d)| Param {
            ty: infer_type(&d),
            name: n,
            description: d,
        })
        .collect();
    let (out_name, out_desc) = outputs.swap_remove(0);
    let output = Param {
        ty: infer_type(&out_desc),
        name: out_name,
        description: out_desc,
    };

    Ok(ModuleSignature {
        name,
        params,
        output,
        doc: doc_lines.join("\n"),
        usage_examples: group_examples(&example_lines),
    })
}

/// Program fragments from an Examples section; `Question:` lines separate them.
fn group_examples(lines: &[String]) -> Vec<String> {
    let mut groups: Vec<Vec<&str>> = vec![Vec::new()];
    for line in lines {
        if line.starts_with("Question:") {
            if !groups.last().is_some_and(|g| g.is_empty()) {
                groups.push(Vec::new());
            }
            continue;
        }
        if let Some(g) = groups.last_mut() {
            g.push(line.as_str());
        }
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| join_continuations(g).join("\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMPARE_SIZE: &str = r#"class COMPARE_SIZE():
    """
    Compare the size of two objects in the image.
    One object is identified by the first bounding box of box0
    Another object is identified by the first bounding box of box1
    Input:
	image: an image object
        box0: a list of bounding boxes
        box1: a list of bounding boxes
    Output:
        flag: return True if first object is larger else False
    Examples:
	Question: Which object is larger, the sphere or the blue cube?
	BOX0=LOC(image=IMAGE,object='sphere')
	BOX1=LOC(image=IMAGE,object='blue cube')
	FLAG0=COMPARE_SIZE(image=IMAGE,box0=BOX0,box1=BOX1)
	ANSWER2=EVAL(expr=f"'sphere' if {FLAG0} else 'blue cube'")
	FINAL_RESULT=RESULT(var=ANSWER)
    """"#;

    #[test]
    fn compare_size_header() {
        let sig = parse_signature_block(COMPARE_SIZE).unwrap();
        assert_eq!(sig.name, "COMPARE_SIZE");
        let params: Vec<(&str, SemanticType)> =
            sig.params.iter().map(|p| (p.name.as_str(), p.ty)).collect();
        assert_eq!(
            params,
            vec![
                ("image", SemanticType::Image),
                ("box0", SemanticType::BoxList),
                ("box1", SemanticType::BoxList),
            ]
        );
        assert_eq!(sig.returns(), SemanticType::Boolean);
        assert_eq!(sig.usage_examples.len(), 1);
        assert_eq!(sig.usage_examples[0].lines().count(), 5);
        assert!(sig.doc.starts_with("Compare the size"));
    }

    #[test]
    fn missing_output_is_malformed() {
        let cut: String = COMPARE_SIZE
            .lines()
            .filter(|l| !l.contains("Output:") && !l.contains("flag:"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(matches!(
            parse_signature_block(&cut),
            Err(SignatureError::Malformed(_))
        ));
    }

    #[test]
    fn missing_input_is_malformed() {
        let cut = COMPARE_SIZE.replace("Input:", "Inputs");
        assert!(parse_signature_block(&cut).is_err());
    }

    #[test]
    fn step_name_beats_class_name() {
        let src = "class Loc():\n    step_name = 'LOC'\n    \"\"\"\n    Input:\n        img: an image object\n        obj_name: an object string\n    Output:\n        selected_boxes: a list of bounding boxes\n    \"\"\"";
        let sig = parse_signature_block(src).unwrap();
        assert_eq!(sig.name, "LOC");
        assert_eq!(sig.params[1].ty, SemanticType::Text);
        assert_eq!(sig.returns(), SemanticType::BoxList);
    }

    #[test]
    fn continuation_lines_extend_descriptions() {
        let src = "class SORT_SPATIAL():\n    \"\"\"\n    Input:\n        location: the location can only be left, middle, right, top,\n        bottom, front and behind\n        index: a number for the rank the object\n    Output:\n        box: a bounding box\n    \"\"\"";
        let sig = parse_signature_block(src).unwrap();
        assert_eq!(sig.params.len(), 2);
        assert!(sig.params[0].description.ends_with("bottom, front and behind"));
        assert_eq!(sig.params[1].ty, SemanticType::Number);
        assert_eq!(sig.returns(), SemanticType::BoxList);
    }

    #[test]
    fn type_inference_keywords() {
        assert_eq!(infer_type("a list of bounding boxes"), SemanticType::BoxList);
        assert_eq!(infer_type("raw PIL image"), SemanticType::Image);
        assert_eq!(infer_type("an object string"), SemanticType::Text);
        assert_eq!(infer_type("number of boxes"), SemanticType::Number);
        assert_eq!(infer_type("a list of images"), SemanticType::List);
        assert_eq!(infer_type("something else"), SemanticType::Text);
        assert_eq!(infer_type("how many things"), SemanticType::Text);
    }

    #[test]
    fn header_text_round_trips() {
        let sig = parse_signature_block(COMPARE_SIZE).unwrap();
        let again = parse_signature_block(&sig.header_text()).unwrap();
        assert_eq!(sig, again);
    }
}
