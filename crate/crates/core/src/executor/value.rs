use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::SemanticType;
use crate::geometry::BBox;
use crate::tools::ImageHandle;

/// A runtime value flowing between program steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum Value {
    Image(ImageHandle),
    BoxList(Vec<BBox>),
    Mask(Vec<BBox>),
    Number(f64),
    Text(String),
    Boolean(bool),
    List(Vec<Value>),
    Null,
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn tag(&self) -> SemanticType {
        match self {
            Value::Image(_) => SemanticType::Image,
            Value::BoxList(_) => SemanticType::BoxList,
            Value::Mask(_) => SemanticType::Mask,
            Value::Number(_) => SemanticType::Number,
            Value::Text(_) => SemanticType::Text,
            Value::Boolean(_) => SemanticType::Boolean,
            Value::List(_) => SemanticType::List,
            Value::Null => SemanticType::Any,
        }
    }

    pub fn tag_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            v => v.tag().as_str(),
        }
    }

    /// Whether this value may be passed where `expected` is declared.
    /// Null is accepted anywhere so that modules may signal "no answer".
    pub fn fits(&self, expected: SemanticType) -> bool {
        matches!(self, Value::Null) || self.tag().flows_into(expected)
    }

    /// Boxes of a box-list or mask.
    pub fn boxes(&self) -> Option<&[BBox]> {
        match self {
            Value::BoxList(b) | Value::Mask(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_image(&self) -> Option<&ImageHandle> {
        match self {
            Value::Image(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Plain answer text: numbers without a trailing `.0`, booleans as
    /// `yes`/`no`, boxes as `[x1,y1,x2,y2]` lists.
    pub fn answer_text(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            Value::Number(n) => format_number(*n),
            Value::Boolean(b) => if *b { "yes" } else { "no" }.to_string(),
            Value::BoxList(b) | Value::Mask(b) => format_boxes(b),
            Value::List(items) => items
                .iter()
                .map(Value::answer_text)
                .collect::<Vec<_>>()
                .join(", "),
            Value::Image(i) => i.summary(),
            Value::Null => "none".to_string(),
        }
    }

    /// Short rendering for traces and reports.
    pub fn summary(&self) -> String {
        match self {
            Value::Image(i) => i.summary(),
            Value::Text(s) => format!("'{s}'"),
            Value::List(items) if items.len() > 8 => format!(
                "[{}, ... ({} items)]",
                items[..8].iter().map(Value::summary).collect::<Vec<_>>().join(", "),
                items.len()
            ),
            Value::List(items) => format!(
                "[{}]",
                items.iter().map(Value::summary).collect::<Vec<_>>().join(", ")
            ),
            Value::Mask(b) => format!("mask{}", format_boxes(b)),
            other => other.answer_text(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary())
    }
}

/// Integral values print without a fractional part.
pub fn format_number(n: f64) -> String {
    if n.is_finite() && n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

pub fn format_boxes(b: &[BBox]) -> String {
    format!(
        "[{}]",
        b.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("REASSIGNMENT: `{0}` is already bound")]
pub struct AlreadyBound(pub String);

/// Assign-once variable bindings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    bindings: BTreeMap<String, Value>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.bind(name, value).expect("fresh name");
        self
    }

    pub fn bind(&mut self, name: &str, value: Value) -> Result<(), AlreadyBound> {
        if self.bindings.contains_key(name) {
            return Err(AlreadyBound(name.to_string()));
        }
        self.bindings.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    /// Name/type pairs for validation.
    pub fn types(&self) -> Vec<(String, SemanticType)> {
        self.bindings
            .iter()
            .map(|(k, v)| (k.clone(), v.tag()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_text_renderings() {
        assert_eq!(Value::Number(3.0).answer_text(), "3");
        assert_eq!(Value::Number(2.5).answer_text(), "2.5");
        assert_eq!(Value::Boolean(true).answer_text(), "yes");
        assert_eq!(Value::BoxList(vec![BBox::new(1, 2, 3, 4)]).answer_text(), "[[1,2,3,4]]");
    }

    #[test]
    fn mask_and_boxes_interchange() {
        let m = Value::Mask(vec![]);
        assert!(m.fits(SemanticType::BoxList));
        assert!(Value::BoxList(vec![]).fits(SemanticType::Mask));
        assert!(!Value::Number(1.0).fits(SemanticType::Text));
        assert!(Value::Null.fits(SemanticType::Image));
        assert!(Value::Number(1.0).fits(SemanticType::Any));
    }

    #[test]
    fn environment_is_assign_once() {
        let mut env = Environment::new();
        env.bind("A", Value::Number(1.0)).unwrap();
        assert!(env.bind("A", Value::Number(2.0)).is_err());
        assert_eq!(env.get("A"), Some(&Value::Number(1.0)));
        assert_eq!(env.types(), vec![("A".to_string(), SemanticType::Number)]);
    }

    #[test]
    fn serde_tagged() {
        let v = Value::List(vec![Value::text("a"), Value::Null, Value::Boolean(false)]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Value>(&s).unwrap(), v);
        assert!(s.contains("\"type\":\"list\""));
    }
}
