//! The pre-defined module catalogue and its semantics.

use std::sync::OnceLock;

use crate::dsl::{parse_signature_block, ModuleSignature};
use crate::geometry::{expand_box, BBox};
use crate::tools::{EditKind, ImageHandle, OverlayKind, ToolBackend};

use super::template::eval_template;
use super::value::{Environment, Value};
use super::{ErrorKind, StepFault};

const MANIFEST: &str = include_str!("../../data/builtins.txt");

/// Header blocks of every builtin, in catalogue order.
pub fn builtin_headers() -> &'static [String] {
    static HEADERS: OnceLock<Vec<String>> = OnceLock::new();
    HEADERS.get_or_init(|| {
        let mut blocks: Vec<String> = Vec::new();
        for line in MANIFEST.lines() {
            if line.starts_with("class ") || blocks.is_empty() {
                blocks.push(String::new());
            }
            let b = blocks.last_mut().unwrap();
            b.push_str(line);
            b.push('\n');
        }
        blocks
    })
}

pub fn builtin_signatures() -> &'static [ModuleSignature] {
    static SIGS: OnceLock<Vec<ModuleSignature>> = OnceLock::new();
    SIGS.get_or_init(|| {
        builtin_headers()
            .iter()
            .map(|h| parse_signature_block(h).expect("builtin manifest parses"))
            .collect()
    })
}

pub fn builtin_signature(name: &str) -> Option<&'static ModuleSignature> {
    builtin_signatures().iter().find(|s| s.name == name)
}

pub fn is_builtin(name: &str) -> bool {
    builtin_signature(name).is_some()
}

fn type_fault(msg: String) -> StepFault {
    StepFault::new(ErrorKind::Type, msg)
}

fn image_arg<'a>(name: &str, v: &'a Value) -> Result<&'a ImageHandle, StepFault> {
    v.as_image()
        .ok_or_else(|| type_fault(format!("{name}: expected image, got {}", v.tag_name())))
}

fn boxes_arg<'a>(name: &str, v: &'a Value) -> Result<&'a [BBox], StepFault> {
    match v {
        Value::Null => Ok(&[]),
        _ => v
            .boxes()
            .ok_or_else(|| type_fault(format!("{name}: expected box-list, got {}", v.tag_name()))),
    }
}

fn text_arg<'a>(name: &str, v: &'a Value) -> Result<&'a str, StepFault> {
    v.as_text()
        .ok_or_else(|| type_fault(format!("{name}: expected text, got {}", v.tag_name())))
}

fn number_arg(name: &str, v: &Value) -> Result<f64, StepFault> {
    v.as_number()
        .ok_or_else(|| type_fault(format!("{name}: expected number, got {}", v.tag_name())))
}

/// Half-image boxes for the special LOC object names.
pub fn half_box(image: &ImageHandle, which: &str) -> Option<BBox> {
    let (w, h) = image.size();
    Some(match which {
        "TOP" => BBox::new(0, 0, w, h / 2),
        "BOTTOM" => BBox::new(0, h / 2, w, h),
        "LEFT" => BBox::new(0, 0, w / 2, h),
        "RIGHT" => BBox::new(w / 2, 0, w, h),
        _ => return None,
    })
}

/// Crop around the first box enlarged 1.5 times; whole image when empty.
pub fn crop_expanded(image: &ImageHandle, boxes: &[BBox]) -> ImageHandle {
    match boxes.first() {
        Some(b) => image.crop(&expand_box(*b, image.size(), 1.5)),
        None => image.clone(),
    }
}

/// Region strictly on one side of the first box's center line.
pub fn crop_side(image: &ImageHandle, boxes: &[BBox], side: &str) -> ImageHandle {
    let Some(b) = boxes.first() else {
        return image.clone();
    };
    let (w, h) = image.size();
    let (cx, cy) = b.center();
    let region = match side {
        "LEFTOF" => BBox::new(0, 0, cx, h),
        "RIGHTOF" => BBox::new(cx, 0, w, h),
        "ABOVE" => BBox::new(0, 0, w, cy),
        _ => BBox::new(0, cy, w, h),
    };
    image.crop(&region)
}

/// Half-plane test on a box center, as the spatial modules use it.
pub fn check_location(size: (i64, i64), b: &BBox, location: &str) -> bool {
    let (w, h) = (size.0 as f64, size.1 as f64);
    let (cx, cy) = b.center_f();
    if location.contains("left") {
        if cx > w / 2.0 {
            return false;
        }
    } else if location.contains("right") && cx < w / 2.0 {
        return false;
    }
    if location.contains("top") {
        if cy > h / 2.0 {
            return false;
        }
    } else if location.contains("bottom") && cy < h / 2.0 {
        return false;
    }
    true
}

fn region_scores(
    backend: &dyn ToolBackend,
    image: &ImageHandle,
    boxes: &[BBox],
    text: &str,
) -> Result<Vec<f64>, StepFault> {
    boxes
        .iter()
        .map(|b| {
            backend
                .score_alignment(&image.crop(b), &[text.to_string()])
                .map(|s| s.first().copied().unwrap_or(0.0))
                .map_err(StepFault::from)
        })
        .collect()
}

/// Run builtin `name` on arguments given in signature order. `env` is only
/// read by `EVAL`.
pub fn run_builtin(
    name: &str,
    args: &[Value],
    backend: &dyn ToolBackend,
    env: &Environment,
) -> Result<Value, StepFault> {
    let sig = builtin_signature(name)
        .ok_or_else(|| StepFault::new(ErrorKind::Name, format!("UNKNOWN_BUILTIN: {name}")))?;
    if args.len() != sig.params.len() {
        return Err(type_fault(format!(
            "{name}: expected {} arguments, got {}",
            sig.params.len(),
            args.len()
        )));
    }
    let a = |i: usize| &args[i];
    let out = match name {
        "LOC" => {
            let img = image_arg(name, a(0))?;
            let obj = text_arg(name, a(1))?;
            match half_box(img, obj) {
                Some(b) => Value::BoxList(vec![b]),
                None => Value::BoxList(backend.locate(img, obj)?),
            }
        }
        "COUNT" => Value::Number(boxes_arg(name, a(0))?.len() as f64),
        "CROP" => Value::Image(crop_expanded(image_arg(name, a(0))?, boxes_arg(name, a(1))?)),
        "CROP_LEFTOF" | "CROP_RIGHTOF" | "CROP_ABOVE" | "CROP_BELOW" => Value::Image(crop_side(
            image_arg(name, a(0))?,
            boxes_arg(name, a(1))?,
            &name["CROP_".len()..],
        )),
        "VQA" => Value::Text(
            backend
                .answer_question(image_arg(name, a(0))?, text_arg(name, a(1))?)?
                .to_lowercase(),
        ),
        "EVAL" => eval_template(text_arg(name, a(0))?, env)
            .map_err(|e| StepFault::new(ErrorKind::Template, e.to_string()))?,
        "RESULT" => a(0).clone(),
        "SELECT" => {
            let img = image_arg(name, a(0))?;
            let boxes = boxes_arg(name, a(1))?;
            let scores = region_scores(backend, img, boxes, text_arg(name, a(2))?)?;
            let mut best: Option<(usize, f64)> = None;
            for (i, s) in scores.iter().enumerate() {
                if best.map_or(true, |(_, bs)| *s > bs) {
                    best = Some((i, *s));
                }
            }
            Value::BoxList(best.map(|(i, _)| vec![boxes[i]]).unwrap_or_default())
        }
        "FILTER_PROPERTY" => {
            let img = image_arg(name, a(0))?;
            let boxes = boxes_arg(name, a(1))?;
            let scores = region_scores(backend, img, boxes, text_arg(name, a(2))?)?;
            Value::BoxList(
                boxes
                    .iter()
                    .zip(scores)
                    .filter(|(_, s)| *s > 0.5)
                    .map(|(b, _)| *b)
                    .collect(),
            )
        }
        "FILTER_SPATIAL" => {
            let img = image_arg(name, a(0))?;
            let loc = text_arg(name, a(2))?.to_lowercase();
            Value::BoxList(
                boxes_arg(name, a(1))?
                    .iter()
                    .filter(|b| check_location(img.size(), b, &loc))
                    .copied()
                    .collect(),
            )
        }
        "REPLACE" => Value::Image(backend.inpaint_region(
            image_arg(name, a(0))?,
            boxes_arg(name, a(1))?,
            text_arg(name, a(2))?,
        )?),
        "COLORPOP" | "BGBLUR" => {
            let kind = if name == "COLORPOP" { EditKind::Colorpop } else { EditKind::Bgblur };
            Value::Image(image_arg(name, a(0))?.with_edit(kind, boxes_arg(name, a(1))?, None))
        }
        "TAG" | "EMOJI" => {
            let kind = if name == "TAG" { OverlayKind::Tag } else { OverlayKind::Emoji };
            let mut img = image_arg(name, a(0))?.clone();
            let label = match a(2) {
                Value::Text(s) => s.clone(),
                other => other.answer_text(),
            };
            for b in boxes_arg(name, a(1))? {
                img = img.with_overlay(kind, b, &label);
            }
            Value::Image(img)
        }
        "FACEDET" => Value::BoxList(backend.locate(image_arg(name, a(0))?, "face")?),
        "LIST" => {
            let max = number_arg(name, a(1))?.max(0.0) as usize;
            let text = backend.general_text(text_arg(name, a(0))?)?;
            Value::List(
                text.lines()
                    .map(|l| l.trim().trim_start_matches(['-', '*']).trim())
                    .filter(|l| !l.is_empty())
                    .take(max)
                    .map(Value::text)
                    .collect(),
            )
        }
        "BOX2MASK" => Value::Mask(boxes_arg(name, a(0))?.to_vec()),
        "MASK2BOX" => Value::BoxList(boxes_arg(name, a(0))?.to_vec()),
        _ => return Err(StepFault::new(ErrorKind::Name, format!("UNKNOWN_BUILTIN: {name}"))),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::SemanticType;
    use crate::tools::{SceneGraph, SceneObject, SyntheticBackend};

    fn image() -> ImageHandle {
        ImageHandle::new(
            SceneGraph::new(100, 100)
                .with_object(SceneObject::new("a", "cat", BBox::new(10, 10, 30, 30), 0.5).with_attr("color", "black"))
                .with_object(SceneObject::new("b", "cat", BBox::new(60, 60, 90, 90), 0.5).with_attr("color", "white")),
        )
    }

    fn run(name: &str, args: Vec<Value>) -> Value {
        run_builtin(name, &args, &SyntheticBackend, &Environment::new()).unwrap()
    }

    #[test]
    fn catalogue_has_all_builtins() {
        let names: Vec<&str> = builtin_signatures().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names.len(), 22);
        assert_eq!(names[0], "LOC");
        let eval = builtin_signature("EVAL").unwrap();
        assert_eq!(eval.params[0].ty, SemanticType::Template);
        assert_eq!(eval.returns(), SemanticType::Any);
        assert_eq!(builtin_signature("RESULT").unwrap().params[0].ty, SemanticType::Any);
        assert_eq!(builtin_signature("COUNT").unwrap().returns(), SemanticType::Number);
        assert_eq!(builtin_signature("LIST").unwrap().returns(), SemanticType::List);
        assert_eq!(builtin_signature("LIST").unwrap().params[1].ty, SemanticType::Number);
        assert_eq!(builtin_signature("BOX2MASK").unwrap().returns(), SemanticType::Mask);
        assert_eq!(builtin_signature("REPLACE").unwrap().params[2].ty, SemanticType::Text);
        assert_eq!(builtin_signature("TAG").unwrap().returns(), SemanticType::Image);
        assert_eq!(builtin_signature("FILTER_SPATIAL").unwrap().params[2].ty, SemanticType::Text);
    }

    #[test]
    fn loc_halves() {
        let img = Value::Image(image());
        assert_eq!(run("LOC", vec![img.clone(), Value::text("TOP")]), Value::BoxList(vec![BBox::new(0, 0, 100, 50)]));
        assert_eq!(run("LOC", vec![img.clone(), Value::text("RIGHT")]), Value::BoxList(vec![BBox::new(50, 0, 100, 100)]));
        assert_eq!(run("LOC", vec![img, Value::text("cat")]).boxes().unwrap().len(), 2);
    }

    #[test]
    fn count_and_masks() {
        assert_eq!(run("COUNT", vec![Value::BoxList(vec![])]), Value::Number(0.0));
        let b = vec![BBox::new(1, 1, 2, 2)];
        assert_eq!(run("BOX2MASK", vec![Value::BoxList(b.clone())]), Value::Mask(b.clone()));
        assert_eq!(run("MASK2BOX", vec![Value::Mask(b.clone())]), Value::BoxList(b));
    }

    #[test]
    fn crops() {
        let img = Value::Image(image());
        let boxes = Value::BoxList(vec![BBox::new(40, 40, 60, 60)]);
        let c = run("CROP", vec![img.clone(), boxes.clone()]);
        assert_eq!(c.as_image().unwrap().viewport, BBox::new(35, 35, 65, 65));
        let l = run("CROP_LEFTOF", vec![img.clone(), boxes.clone()]);
        assert_eq!(l.as_image().unwrap().viewport, BBox::new(0, 0, 50, 100));
        let b = run("CROP_BELOW", vec![img.clone(), boxes]);
        assert_eq!(b.as_image().unwrap().viewport, BBox::new(0, 50, 100, 100));
        let whole = run("CROP", vec![img, Value::BoxList(vec![])]);
        assert_eq!(whole.as_image().unwrap().viewport, BBox::new(0, 0, 100, 100));
    }

    #[test]
    fn tag_appends_overlay() {
        let out = run(
            "TAG",
            vec![Value::Image(image()), Value::BoxList(vec![BBox::new(10, 10, 30, 30)]), Value::text("Obama")],
        );
        assert_eq!(out.as_image().unwrap().overlays.len(), 1);
        assert_eq!(out.as_image().unwrap().overlays[0].label, "Obama");
    }

    #[test]
    fn select_and_filters() {
        let img = Value::Image(image());
        let boxes = Value::BoxList(vec![BBox::new(10, 10, 30, 30), BBox::new(60, 60, 90, 90)]);
        assert_eq!(
            run("SELECT", vec![img.clone(), boxes.clone(), Value::text("white cat")]),
            Value::BoxList(vec![BBox::new(60, 60, 90, 90)])
        );
        assert_eq!(
            run("FILTER_PROPERTY", vec![img.clone(), boxes.clone(), Value::text("black")]),
            Value::BoxList(vec![BBox::new(10, 10, 30, 30)])
        );
        assert_eq!(
            run("FILTER_SPATIAL", vec![img, boxes, Value::text("bottom")]),
            Value::BoxList(vec![BBox::new(60, 60, 90, 90)])
        );
    }

    #[test]
    fn edits_and_list() {
        let img = Value::Image(image());
        let m = Value::Mask(vec![BBox::new(0, 0, 40, 40)]);
        let r = run("REPLACE", vec![img.clone(), m.clone(), Value::text("a dog")]);
        assert_eq!(r.as_image().unwrap().scene.objects[0].name, "dog");
        let c = run("COLORPOP", vec![img, m]);
        assert_eq!(c.as_image().unwrap().edits[0].kind, EditKind::Colorpop);
        let l = run("LIST", vec![Value::text("list animals"), Value::Number(2.0)]);
        assert_eq!(l, Value::List(vec![Value::text("cat"), Value::text("dog")]));
    }

    #[test]
    fn type_errors() {
        let err = run_builtin("COUNT", &[Value::Number(1.0)], &SyntheticBackend, &Environment::new()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::Type);
        let err = run_builtin("NOPE", &[], &SyntheticBackend, &Environment::new()).unwrap_err();
        assert!(err.message.contains("UNKNOWN_BUILTIN"));
    }
}
