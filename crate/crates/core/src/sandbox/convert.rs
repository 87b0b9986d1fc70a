//! Value <-> script value conversions.

use rhai::{Array, Dynamic, FLOAT, INT};

use crate::dsl::SemanticType;
use crate::executor::Value;
use crate::geometry::BBox;
use crate::tools::{DepthGrid, ImageHandle};

pub(crate) fn dynamic_number(d: &Dynamic) -> Option<f64> {
    if let Ok(i) = d.as_int() {
        Some(i as f64)
    } else {
        d.as_float().ok().map(|f| f as f64)
    }
}

pub(crate) fn array_to_box(a: &Array) -> Option<BBox> {
    if a.len() != 4 {
        return None;
    }
    let v: Vec<f64> = a.iter().map(dynamic_number).collect::<Option<_>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(BBox::new(v[0].round() as i64, v[1].round() as i64, v[2].round() as i64, v[3].round() as i64))
}

/// A list of boxes, if `d` is an array whose items are all 4-number arrays.
pub fn dynamic_to_boxes(d: &Dynamic) -> Option<Vec<BBox>> {
    let arr = d.read_lock::<Array>()?;
    arr.iter()
        .map(|item| item.read_lock::<Array>().and_then(|a| array_to_box(&a)))
        .collect()
}

fn box_to_dynamic(b: &BBox) -> Dynamic {
    Dynamic::from_array(b.to_array().iter().map(|v| Dynamic::from_int(*v as INT)).collect())
}

pub fn value_to_dynamic(v: &Value) -> Dynamic {
    match v {
        Value::Image(img) => Dynamic::from(img.clone()),
        Value::BoxList(b) | Value::Mask(b) => Dynamic::from_array(b.iter().map(box_to_dynamic).collect()),
        Value::Number(n) if n.fract() == 0.0 && n.abs() < 9.0e15 => Dynamic::from_int(*n as INT),
        Value::Number(n) => Dynamic::from_float(*n as FLOAT),
        Value::Text(s) => Dynamic::from(s.clone()),
        Value::Boolean(b) => Dynamic::from_bool(*b),
        Value::List(items) => Dynamic::from_array(items.iter().map(value_to_dynamic).collect()),
        Value::Null => Dynamic::UNIT,
    }
}

pub(crate) fn dynamic_tag(d: &Dynamic) -> String {
    if d.is_unit() {
        "null".into()
    } else if d.is::<ImageHandle>() {
        "image".into()
    } else if d.is::<DepthGrid>() {
        "depth-grid".into()
    } else if d.is_int() || d.is_float() {
        "number".into()
    } else if d.is_string() || d.is_char() {
        "text".into()
    } else if d.is_bool() {
        "boolean".into()
    } else if d.is_array() {
        if dynamic_to_boxes(d).is_some_and(|b| !b.is_empty()) {
            "box-list".into()
        } else {
            "list".into()
        }
    } else {
        d.type_name().to_string()
    }
}

fn infer(d: &Dynamic) -> Option<Value> {
    if d.is_unit() {
        return Some(Value::Null);
    }
    if let Some(img) = d.read_lock::<ImageHandle>() {
        return Some(Value::Image(img.clone()));
    }
    if let Some(n) = dynamic_number(d) {
        return Some(Value::Number(n));
    }
    if let Ok(b) = d.as_bool() {
        return Some(Value::Boolean(b));
    }
    if d.is_string() || d.is_char() {
        return Some(Value::Text(d.to_string()));
    }
    if d.is_array() {
        if let Some(b) = dynamic_to_boxes(d).filter(|b| !b.is_empty()) {
            return Some(Value::BoxList(b));
        }
        let arr = d.read_lock::<Array>()?;
        return arr.iter().map(infer).collect::<Option<Vec<_>>>().map(Value::List);
    }
    None
}

/// Coerce a script result to `expected`. `()` maps to Null for every type.
pub fn dynamic_to_value(d: &Dynamic, expected: SemanticType) -> Option<Value> {
    if d.is_unit() {
        return Some(Value::Null);
    }
    match expected {
        SemanticType::Any => infer(d),
        SemanticType::Image => d.read_lock::<ImageHandle>().map(|i| Value::Image(i.clone())),
        SemanticType::BoxList => dynamic_to_boxes(d).map(Value::BoxList),
        SemanticType::Mask => dynamic_to_boxes(d).map(Value::Mask),
        SemanticType::Number => dynamic_number(d).map(Value::Number),
        SemanticType::Boolean => d.as_bool().ok().map(Value::Boolean),
        SemanticType::Text | SemanticType::Template => {
            (d.is_string() || d.is_char()).then(|| Value::Text(d.to_string()))
        }
        SemanticType::List => {
            let arr = d.read_lock::<Array>()?;
            arr.iter().map(infer).collect::<Option<Vec<_>>>().map(Value::List)
        }
    }
}
