//! Brute-force answers computed from scene graphs alone.
//!
//! Nothing here goes through the tool backend or the module library; the
//! functions return `None` when a query has no unique answer.

use super::{Gold, Inputs, QuerySpec};
use crate::geometry::BBox;
use crate::reference::oracle::solver;
use crate::tools::vocab::attribute_key;
use crate::tools::{EditKind, SceneGraph, SceneObject};

fn named<'a>(scene: &'a SceneGraph, name: &str) -> Vec<&'a SceneObject> {
    scene.objects.iter().filter(|o| o.name == name).collect()
}

fn unique<'a>(scene: &'a SceneGraph, name: &str) -> Option<&'a SceneObject> {
    match named(scene, name).as_slice() {
        [o] => Some(o),
        _ => None,
    }
}

fn answer(s: impl Into<String>) -> Gold {
    Gold::Answer { text: s.into() }
}

fn yes_no(b: bool) -> Gold {
    answer(if b { "yes" } else { "no" })
}

/// Does `a` come strictly before `b` when counting from `direction`?
fn before(a: &BBox, b: &BBox, direction: &str) -> bool {
    match direction {
        "left" => a.x1 < b.x1,
        "right" => a.x2 > b.x2,
        "top" => a.y1 < b.y1,
        "bottom" => a.y2 > b.y2,
        _ => false,
    }
}

/// The object with exactly `index - 1` others before it.
fn ranked<'a>(objs: &[&'a SceneObject], direction: &str, index: usize) -> Option<&'a SceneObject> {
    let hits: Vec<&SceneObject> = objs
        .iter()
        .copied()
        .filter(|o| objs.iter().filter(|p| before(&p.bbox, &o.bbox, direction)).count() + 1 == index)
        .collect();
    match hits.as_slice() {
        [o] => Some(o),
        _ => None,
    }
}

/// Attribute record of a panel read straight from the scene, in the format
/// the shape reader emits.
pub fn panel_record(scene: &SceneGraph, layout: &str) -> Option<String> {
    let (w, h) = (scene.width, scene.height);
    let regions: Vec<(&str, BBox)> = match layout {
        "left-right" => vec![("left.", BBox::new(0, 0, w / 2, h)), ("right.", BBox::new(w / 2, 0, w, h))],
        "up-down" => vec![("top.", BBox::new(0, 0, w, h / 2)), ("bottom.", BBox::new(0, h / 2, w, h))],
        _ => vec![("", BBox::full(w, h))],
    };
    let mut parts = Vec::new();
    for (prefix, r) in regions {
        let inside: Vec<&SceneObject> = scene
            .objects
            .iter()
            .filter(|o| {
                let (cx, cy) = o.bbox.center_f();
                r.contains_point(cx, cy)
            })
            .collect();
        if let Some(o) = inside.first() {
            for k in ["shape", "color", "size"] {
                parts.push(format!("{prefix}{k}={}", o.attr(k).unwrap_or("unknown")));
            }
        }
    }
    (!parts.is_empty()).then(|| parts.join(";"))
}

fn scene_gold(spec: &QuerySpec, scene: &SceneGraph) -> Option<Gold> {
    Some(match spec {
        QuerySpec::Choose { object, first, second } => {
            let o = unique(scene, object)?;
            let v = o.attr(attribute_key(first)?)?;
            if v != first && v != second {
                return None;
            }
            answer(v)
        }
        QuerySpec::CompareColor { first, second, different } | QuerySpec::CompareMaterial { first, second, different } => {
            let key = if matches!(spec, QuerySpec::CompareColor { .. }) { "color" } else { "material" };
            let same = unique(scene, first)?.attr(key)? == unique(scene, second)?.attr(key)?;
            yes_no(same != *different)
        }
        QuerySpec::Side { object, reference } => {
            let (o, r) = (unique(scene, object)?, unique(scene, reference)?);
            let (rcx, _) = r.bbox.center_f();
            if (o.bbox.x1 as f64) < rcx && (o.bbox.x2 as f64) > rcx {
                return None;
            }
            answer(if (o.bbox.x2 as f64) <= rcx { "left" } else { "right" })
        }
        QuerySpec::Count { object } => answer(named(scene, object).len().to_string()),
        QuerySpec::Color { object } => answer(unique(scene, object)?.attr("color")?),
        QuerySpec::Ordinal { object, direction, index, .. } => Gold::Box {
            bbox: ranked(&named(scene, object), direction, *index)?.bbox,
        },
        QuerySpec::Depth { object, front } => {
            let objs = named(scene, object);
            let pick = objs.iter().filter(|o| {
                objs.iter()
                    .all(|p| p.id == o.id || if *front { o.depth < p.depth } else { o.depth > p.depth })
            });
            let hits: Vec<_> = pick.collect();
            match hits.as_slice() {
                [o] => Gold::Box { bbox: o.bbox },
                _ => return None,
            }
        }
        QuerySpec::Tag { object, direction, index } => {
            let o = ranked(&named(scene, object), direction, *index)?;
            Gold::Tags {
                pairs: vec![(o.bbox, o.attr("identity")?.to_string())],
            }
        }
        QuerySpec::Replace { object, direction, index, prompt } => {
            let o = match direction {
                Some(d) => ranked(&named(scene, object), d, *index)?,
                None => unique(scene, object)?,
            };
            Gold::Edit {
                kind: EditKind::Replace,
                boxes: vec![o.bbox],
                prompt: prompt.clone(),
            }
        }
        QuerySpec::Raven { .. } | QuerySpec::Word { .. } => return None,
    })
}

/// The attribute value a novel word names: shared by every example paired
/// with the word and absent from all others. Keys are tried in a fixed
/// order.
pub fn bound_value(examples: &[SceneGraph], words: &[String], word: &str) -> Option<(&'static str, String)> {
    let attrs: Vec<Option<&SceneObject>> = examples.iter().map(|s| s.objects.first()).collect();
    let (pos, neg): (Vec<_>, Vec<_>) = attrs.iter().zip(words).partition(|(_, w)| *w == word);
    for key in ["color", "shape", "material"] {
        let Some(v) = pos.first().and_then(|(o, _)| o.and_then(|o| o.attr(key))) else {
            continue;
        };
        let all = pos.iter().all(|(o, _)| o.and_then(|o| o.attr(key)) == Some(v));
        let none = neg.iter().all(|(o, _)| o.and_then(|o| o.attr(key)) != Some(v));
        if all && none {
            return Some((key, v.to_string()));
        }
    }
    None
}

/// Unique gold answer for a query over its inputs.
pub fn gold_for(spec: &QuerySpec, inputs: &Inputs) -> Option<Gold> {
    match (spec, inputs) {
        (QuerySpec::Raven { layout }, Inputs::Raven(p)) => {
            let read = |v: &[SceneGraph]| v.iter().map(|s| panel_record(s, layout)).collect::<Vec<_>>();
            let (panels, cands) = (read(&p.panels), read(&p.candidates));
            let best = solver(&panels, &cands);
            // the planted answer must be the only candidate matching the rules
            let dupes = cands.iter().filter(|c| **c == cands[best - 1]).count();
            (best == p.answer_index && dupes == 1).then_some(Gold::Index { index: best })
        }
        (QuerySpec::Word { word }, Inputs::Mewl { examples, words, query }) => {
            let (key, v) = bound_value(examples, words, word)?;
            let hits: Vec<&SceneObject> = query.objects.iter().filter(|o| o.attr(key) == Some(v.as_str())).collect();
            match hits.as_slice() {
                [o] => Some(Gold::Box { bbox: o.bbox }),
                _ => None,
            }
        }
        (_, Inputs::Scene { scene }) => scene_gold(spec, scene),
        _ => None,
    }
}
