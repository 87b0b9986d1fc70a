//! Plain Rust versions of the shipped modules, written against the backend
//! trait directly. Used to cross-check sandboxed runs.

use std::collections::BTreeMap;

use crate::geometry::{expand_box, BBox};
use crate::tools::{ImageHandle, ToolBackend};

fn region(img: &ImageHandle, boxes: &[BBox]) -> ImageHandle {
    match boxes.first() {
        Some(b) => img.crop(&expand_box(*b, img.size(), 1.5)),
        None => img.clone(),
    }
}

pub fn choose_attribute(
    be: &dyn ToolBackend,
    img: &ImageHandle,
    boxes: &[BBox],
    obj: &str,
    attr1: &str,
    attr2: &str,
) -> Result<String, String> {
    let view = region(img, boxes);
    let describe = |a: &str| be.general_text(&format!("Tell me the attributes when the {obj} is {a} in one sentence."));
    let d1 = describe(attr1).map_err(|e| e.to_string())?;
    let d2 = describe(attr2).map_err(|e| e.to_string())?;
    let s = be.score_alignment(&view, &[d1, d2]).map_err(|e| e.to_string())?;
    Ok(if s[0] > s[1] { attr1 } else { attr2 }.to_string())
}

fn colors_match(be: &dyn ToolBackend, c1: &str, c2: &str) -> Result<bool, String> {
    let reply = be
        .general_text(&format!(
            "Can the {c1} be regarded as the same color as{c2}? You should just reply yes or no without any other words."
        ))
        .map_err(|e| e.to_string())?
        .to_lowercase();
    if reply.contains("yes") {
        Ok(true)
    } else if reply.contains("no") {
        Ok(false)
    } else {
        Err(format!("UNPARSEABLE: {reply}"))
    }
}

pub fn compare_color(
    be: &dyn ToolBackend,
    img: &ImageHandle,
    boxes1: &[BBox],
    boxes2: &[BBox],
    obj1: &str,
    obj2: &str,
    compare_type: &str,
) -> Result<String, String> {
    let ask = |b: &[BBox], o: &str| {
        be.answer_question(&region(img, b), &format!("What color is the {o}?"))
            .map_err(|e| e.to_string())
    };
    let same = colors_match(be, &ask(boxes1, obj1)?, &ask(boxes2, obj2)?)?;
    let yes = if compare_type == "different" { !same } else { same };
    Ok(if yes { "yes" } else { "no" }.to_string())
}

#[allow(clippy::too_many_arguments)]
pub fn compare_attribute(
    be: &dyn ToolBackend,
    img: &ImageHandle,
    boxes1: &[BBox],
    boxes2: &[BBox],
    obj1: &str,
    obj2: &str,
    attribute: &str,
    question: &str,
) -> Result<String, String> {
    let ask = |b: &[BBox], o: &str| {
        be.answer_question(&region(img, b), &format!("What {attribute} is the {o}?"))
            .map_err(|e| e.to_string())
    };
    let (v1, v2) = (ask(boxes1, obj1)?, ask(boxes2, obj2)?);
    let same = if attribute == "color" {
        be.general_text(&format!(
            "Can the {v1} be regarded as the same color as{v2}? You should just reply yes or no without any other words."
        ))
        .map_err(|e| e.to_string())?
        .to_lowercase()
        .contains("yes")
    } else {
        v1 == v2
    };
    let yes = if question.to_lowercase().contains("different") { !same } else { same };
    Ok(if yes { "yes" } else { "no" }.to_string())
}

pub fn sort_spatial(
    be: &dyn ToolBackend,
    img: &ImageHandle,
    boxes: &[BBox],
    location: &str,
    index: i64,
) -> Result<Vec<BBox>, String> {
    let n = boxes.len() as i64;
    if index < 0 || index > n || n == 0 {
        return Ok(Vec::new());
    }
    if index == 0 {
        return Ok(vec![boxes[0]]);
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    if location.contains("front") || location.contains("behind") {
        let grid = be.depth_of(img).map_err(|e| e.to_string())?;
        let depth: Vec<f64> = boxes.iter().map(|b| grid.median(b)).collect();
        if location.contains("behind") {
            order.sort_by(|a, b| depth[*b].total_cmp(&depth[*a]));
        } else {
            order.sort_by(|a, b| depth[*a].total_cmp(&depth[*b]));
        }
    } else if location.contains("left") {
        order.sort_by_key(|i| boxes[*i].x1);
    } else if location.contains("right") {
        order.sort_by_key(|i| std::cmp::Reverse(boxes[*i].x2));
    } else if location.contains("top") {
        order.sort_by_key(|i| boxes[*i].y1);
    } else if location.contains("bottom") {
        order.sort_by_key(|i| std::cmp::Reverse(boxes[*i].y2));
    } else if location.contains("middle") {
        let half = img.width() as f64 / 2.0;
        let off = |i: &usize| (boxes[*i].center_f().0 - half).abs();
        order.sort_by(|a, b| off(a).total_cmp(&off(b)));
    } else {
        return Ok(Vec::new());
    }
    Ok(vec![boxes[order[index as usize - 1]]])
}

pub const SHAPE_ORDER: &[&str] = &["triangle", "square", "pentagon", "hexagon", "circle"];
pub const SIZE_ORDER: &[&str] = &["tiny", "small", "medium", "large", "huge"];

fn layout_regions(w: i64, h: i64, layout: &str) -> Option<Vec<(&'static str, BBox)>> {
    Some(match layout {
        "center" => vec![("", BBox::new(0, 0, w, h))],
        "left-right" => vec![("left.", BBox::new(0, 0, w / 2, h)), ("right.", BBox::new(w / 2, 0, w, h))],
        "up-down" => vec![("top.", BBox::new(0, 0, w, h / 2)), ("bottom.", BBox::new(0, h / 2, w, h))],
        _ => return None,
    })
}

/// One `key=value;...` record per image, `None` for an empty image.
pub fn detect_shape(be: &dyn ToolBackend, images: &[ImageHandle], layout: &str) -> Result<Vec<Option<String>>, String> {
    let mut out = Vec::new();
    for img in images {
        let regions = layout_regions(img.width(), img.height(), layout).ok_or(format!("unknown layout {layout}"))?;
        let mut parts = Vec::new();
        for (prefix, r) in regions {
            let view = img.crop(&r);
            let n = be.locate(&view, "object").map_err(|e| e.to_string())?.len();
            if n > 1 {
                return Err(format!("MULTI_OBJECT: {n} objects in one region"));
            }
            if n == 0 {
                continue;
            }
            for key in ["shape", "color", "size"] {
                let v = be
                    .answer_question(&view, &format!("What {key} is the object?"))
                    .map_err(|e| e.to_string())?;
                parts.push(format!("{prefix}{key}={v}"));
            }
        }
        out.push((!parts.is_empty()).then(|| parts.join(";")));
    }
    Ok(out)
}

pub fn parse_record(rec: Option<&str>) -> BTreeMap<String, String> {
    rec.unwrap_or("")
        .split(';')
        .filter_map(|p| p.split_once('=').filter(|(_, v)| !v.contains('=')))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn scale_for(key: &str) -> Option<&'static [&'static str]> {
    match key.rsplit('.').next().unwrap_or(key) {
        "shape" => Some(SHAPE_ORDER),
        "size" => Some(SIZE_ORDER),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Constant,
    Progression,
    DistributeThree,
}

fn distinct3(r: &[&str]) -> bool {
    r[0] != r[1] && r[1] != r[2] && r[0] != r[2]
}

/// Rules consistent with both complete rows.
pub fn consistent_rules(key: &str, r1: &[&str], r2: &[&str]) -> Vec<Rule> {
    let mut out = Vec::new();
    if r1.iter().all(|v| *v == r1[0]) && r2.iter().all(|v| *v == r2[0]) {
        out.push(Rule::Constant);
    }
    if let Some(order) = scale_for(key) {
        let prog = |r: &[&str]| {
            let p: Option<Vec<usize>> = r.iter().map(|v| order.iter().position(|o| o == v)).collect();
            p.is_some_and(|p| p[1] == p[0] + 1 && p[2] == p[1] + 1)
        };
        if prog(r1) && prog(r2) {
            out.push(Rule::Progression);
        }
    }
    if distinct3(r1) && distinct3(r2) && r2.iter().all(|v| r1.contains(v)) {
        out.push(Rule::DistributeThree);
    }
    out
}

pub fn apply_rule(rule: Rule, key: &str, r1: &[&str], r3: &[&str]) -> Option<String> {
    match rule {
        Rule::Constant => Some(r3[0].to_string()),
        Rule::Progression => {
            let order = scale_for(key)?;
            let i = order.iter().position(|o| *o == r3[1])?;
            order.get(i + 1).map(|s| s.to_string())
        }
        Rule::DistributeThree => r1.iter().find(|v| **v != r3[0] && **v != r3[1]).map(|s| s.to_string()),
    }
}

/// Expected value of the missing cell for every attribute key with an
/// induced rule. The first consistent rule in Constant, Progression,
/// DistributeThree order is used.
pub fn expected_cell(panels: &[Option<String>]) -> BTreeMap<String, String> {
    let grid: Vec<BTreeMap<String, String>> = panels.iter().map(|p| parse_record(p.as_deref())).collect();
    let mut keys: Vec<&String> = Vec::new();
    for m in &grid {
        for k in m.keys() {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    let mut out = BTreeMap::new();
    for k in keys {
        let cells: Vec<&str> = (0..8).map(|i| grid.get(i).and_then(|m| m.get(k)).map_or("", String::as_str)).collect();
        let (r1, r2, r3) = (&cells[0..3], &cells[3..6], &cells[6..8]);
        if let Some(rule) = consistent_rules(k, r1, r2).first() {
            if let Some(v) = apply_rule(*rule, k, r1, r3) {
                out.insert(k.clone(), v);
            }
        }
    }
    out
}

/// 1-based index of the candidate with the fewest rule violations; ties go
/// to the lowest index.
pub fn solver(panels: &[Option<String>], candidates: &[Option<String>]) -> usize {
    let expected = expected_cell(panels);
    let violations = |c: &Option<String>| {
        let m = parse_record(c.as_deref());
        expected.iter().filter(|(k, v)| m.get(*k) != Some(*v)).count()
    };
    let mut best = 0;
    let mut best_v = usize::MAX;
    for (i, c) in candidates.iter().enumerate() {
        let v = violations(c);
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best + 1
}

pub fn word_match(
    be: &dyn ToolBackend,
    examples: &[ImageHandle],
    words: &[String],
    image: &ImageHandle,
    word: &str,
) -> Result<Vec<BBox>, String> {
    const KEYS: [&str; 3] = ["color", "shape", "material"];
    let attrs = |img: &ImageHandle| -> Result<BTreeMap<&'static str, String>, String> {
        let mut m = BTreeMap::new();
        for k in KEYS {
            let v = be
                .answer_question(img, &format!("What {k} is the object?"))
                .map_err(|e| e.to_string())?;
            if v != "unknown" {
                m.insert(k, v);
            }
        }
        Ok(m)
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (img, w) in examples.iter().zip(words) {
        let a = attrs(img)?;
        if w == word {
            pos.push(a);
        } else {
            neg.push(a);
        }
    }
    let Some(first) = pos.first() else {
        return Ok(Vec::new());
    };
    for k in KEYS {
        let Some(v) = first.get(k) else { continue };
        let shared = pos.iter().all(|a| a.get(k) == Some(v)) && !neg.iter().any(|a| a.get(k) == Some(v));
        if shared {
            let boxes = be.locate(image, &format!("{v} object")).map_err(|e| e.to_string())?;
            return Ok(boxes.into_iter().take(1).collect());
        }
    }
    Ok(Vec::new())
}
