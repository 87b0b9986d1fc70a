//! Deterministic backend answering every operation from the scene graph.

use std::collections::HashSet;
use std::sync::{Arc, OnceLock};

use regex::Regex;

use super::image::{DepthGrid, EditKind, ImageHandle};
use super::scene::SceneObject;
use super::vocab::{self, attribute_key, content_words, normalize_phrase, singularize};
use super::{ToolBackend, ToolError};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticBackend;

impl SyntheticBackend {
    pub fn new() -> Self {
        Self
    }
}

/// Does `phrase` (normalized words) name `obj`? The phrase must end with the
/// object's category; any leading words must be attribute values the object
/// carries ("blue cube").
fn matches_phrase(obj: &SceneObject, phrase: &[String]) -> bool {
    // "object" and "thing" name any category
    let name = match phrase.last().map(String::as_str) {
        Some("object" | "thing") => vec![phrase[phrase.len() - 1].clone()],
        _ => normalize_phrase(&obj.name),
    };
    let generic = name.len() == 1 && matches!(name[0].as_str(), "object" | "thing");
    if name.is_empty() || phrase.len() < name.len() {
        return false;
    }
    let split = phrase.len() - name.len();
    if !generic && phrase[split..] != name[..] {
        return false;
    }
    phrase[..split]
        .iter()
        .all(|w| obj.attributes.values().any(|v| v.eq_ignore_ascii_case(w)))
}

/// Visible objects named by `phrase` with their local boxes, largest first;
/// equal areas keep scene order.
fn find<'a>(image: &'a ImageHandle, phrase: &str) -> Vec<(&'a SceneObject, BBox)> {
    let words = normalize_phrase(phrase);
    if words.is_empty() {
        return Vec::new();
    }
    let mut hits: Vec<_> = image
        .visible()
        .into_iter()
        .filter(|(o, _)| matches_phrase(o, &words))
        .collect();
    hits.sort_by_key(|(_, b)| std::cmp::Reverse(b.area()));
    hits
}

/// The object a question about `phrase` refers to: largest visible area,
/// then closest to the view center.
fn focus<'a>(image: &'a ImageHandle, phrase: &str) -> Option<&'a SceneObject> {
    let (w, h) = image.size();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let dist = |b: &BBox| {
        let (x, y) = b.center_f();
        (x - cx).powi(2) + (y - cy).powi(2)
    };
    let hits = find(image, phrase);
    let best_area = hits.first()?.1.area();
    hits.iter()
        .filter(|(_, b)| b.area() == best_area)
        .min_by(|a, b| dist(&a.1).total_cmp(&dist(&b.1)))
        .map(|(o, _)| *o)
}

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static pattern"))
}

fn answer(image: &ImageHandle, question: &str) -> String {
    static WHAT_ATTR: OnceLock<Regex> = OnceLock::new();
    static WHAT_OF: OnceLock<Regex> = OnceLock::new();
    static WHO_VERB: OnceLock<Regex> = OnceLock::new();
    static HOW_MANY: OnceLock<Regex> = OnceLock::new();
    static WHO_IS: OnceLock<Regex> = OnceLock::new();
    static MADE_OF: OnceLock<Regex> = OnceLock::new();
    static IS_ATTR: OnceLock<Regex> = OnceLock::new();

    let q = question
        .trim()
        .trim_end_matches(['?', '.', '!'])
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let unknown = || "unknown".to_string();

    let attr_of = |key: &str, phrase: &str| {
        focus(image, phrase)
            .and_then(|o| o.attr(key))
            .map(str::to_lowercase)
            .unwrap_or_else(unknown)
    };

    if let Some(c) = regex(&WHAT_ATTR, r"^what (\w+) is the (.+?)(?: made of)?$").captures(&q) {
        return attr_of(&c[1], &c[2]);
    }
    if let Some(c) = regex(&WHAT_OF, r"^what is the (\w+) of the (.+)$").captures(&q) {
        return attr_of(&c[1], &c[2]);
    }
    if let Some(c) = regex(&WHO_VERB, r"^who is (\w+ing) the (.+)$").captures(&q) {
        let verb = &c[1];
        let target = normalize_phrase(&c[2]).join(" ");
        let agent = image
            .visible()
            .into_iter()
            .filter(|(o, _)| {
                o.attr(verb)
                    .is_some_and(|v| normalize_phrase(v).join(" ") == target)
            })
            .max_by_key(|(_, b)| b.area());
        return agent.map(|(o, _)| o.name.to_lowercase()).unwrap_or_else(unknown);
    }
    if let Some(c) = regex(&HOW_MANY, r"^how many (.+?)(?: are there)?(?: in the (?:image|picture))?$").captures(&q)
    {
        return find(image, &c[1]).len().to_string();
    }
    if let Some(c) = regex(&WHO_IS, r"^who is the (.+)$").captures(&q) {
        return attr_of("identity", &c[1]);
    }
    if let Some(c) = regex(&MADE_OF, r"^is the (.+?) made of (\w+)$").captures(&q) {
        return yes_no(focus(image, &c[1]).and_then(|o| o.attr("material")), &c[2]);
    }
    if let Some(c) = regex(&IS_ATTR, r"^is the (.+) (\w+)$").captures(&q) {
        if let Some(key) = attribute_key(&c[2]) {
            return yes_no(focus(image, &c[1]).and_then(|o| o.attr(key)), &c[2]);
        }
    }
    unknown()
}

fn yes_no(actual: Option<&str>, expected: &str) -> String {
    match actual {
        Some(v) if v.eq_ignore_ascii_case(expected) => "yes".into(),
        Some(_) => "no".into(),
        None => "unknown".into(),
    }
}

fn visible_vocabulary(image: &ImageHandle) -> HashSet<String> {
    let mut set = HashSet::new();
    for (o, _) in image.visible() {
        set.extend(normalize_phrase(&o.name));
        for v in o.attributes.values() {
            set.extend(vocab::words(v));
        }
    }
    set
}

fn alignment(vocabulary: &HashSet<String>, text: &str) -> f64 {
    let words = content_words(text);
    if words.is_empty() {
        return 0.0;
    }
    let hits = words
        .iter()
        .filter(|w| vocabulary.contains(*w) || vocabulary.contains(&singularize(w)))
        .count();
    hits as f64 / words.len() as f64
}

/// Three descriptive words for an attribute value. None of them is an
/// attribute value or a category, so they never score against a scene.
pub fn attribute_descriptors(value: &str) -> &'static str {
    match value.to_lowercase().as_str() {
        "thick" => "heavy, padded, warm",
        "thin" => "light, sheer, breezy",
        "wet" => "damp, soaked, dripping",
        "dry" => "crisp, parched, arid",
        "clean" => "spotless, fresh, tidy",
        "dirty" => "stained, muddy, grimy",
        "tall" => "towering, lofty, elevated",
        "short" => "low, stubby, compact",
        "open" => "ajar, unlatched, accessible",
        "closed" => "shut, sealed, latched",
        _ => "distinctive, noticeable, typical",
    }
}

/// The canned text-model answers used when no live endpoint is configured.
/// Returns `None` for prompts outside the table.
pub fn fixture_text(prompt: &str) -> Option<String> {
    static ATTRS: OnceLock<Regex> = OnceLock::new();
    static SAME_COLOR: OnceLock<Regex> = OnceLock::new();
    static LIST: OnceLock<Regex> = OnceLock::new();

    let p = prompt.split_whitespace().collect::<Vec<_>>().join(" ");
    if let Some(c) = regex(
        &ATTRS,
        r"(?i)^tell me the attributes when the (.+?) is (.+?) in one sentence\.?$",
    )
    .captures(&p)
    {
        let (obj, attr) = (c[1].to_lowercase(), c[2].to_lowercase());
        return Some(format!("a {attr} {obj} is {}", attribute_descriptors(&attr)));
    }
    if let Some(c) = regex(
        &SAME_COLOR,
        r"(?i)can the (.+?) be regarded as the same color as\s*(.+?)\?",
    )
    .captures(&p)
    {
        let same = vocab::normalize_text(&c[1]) == vocab::normalize_text(&c[2]);
        return Some(if same { "yes" } else { "no" }.to_string());
    }
    if let Some(c) = regex(&LIST, r"(?i)^list (?:the |some |all )?(?:\d+ )?(.+?)\.?$").captures(&p) {
        let topic = singularize(c[1].split_whitespace().last().unwrap_or(""));
        let items: Vec<&str> = match topic.as_str() {
            "animal" => vec!["cat", "dog", "horse", "bird"],
            "fruit" => vec!["apple", "banana"],
            "vehicle" => vec!["car", "bus"],
            key => vocab::ATTRIBUTES
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v.to_vec())
                .unwrap_or_default(),
        };
        if !items.is_empty() {
            return Some(items.join("\n"));
        }
    }
    None
}

impl ToolBackend for SyntheticBackend {
    fn locate(&self, image: &ImageHandle, name: &str) -> Result<Vec<BBox>, ToolError> {
        Ok(find(image, name).into_iter().map(|(_, b)| b).collect())
    }

    fn answer_question(&self, image: &ImageHandle, question: &str) -> Result<String, ToolError> {
        Ok(answer(image, question))
    }

    fn score_alignment(&self, image: &ImageHandle, texts: &[String]) -> Result<Vec<f64>, ToolError> {
        let vocabulary = visible_vocabulary(image);
        Ok(texts.iter().map(|t| alignment(&vocabulary, t)).collect())
    }

    fn depth_of(&self, image: &ImageHandle) -> Result<DepthGrid, ToolError> {
        let mut grid = DepthGrid::filled(image.width(), image.height(), 1.0);
        for (o, b) in image.visible() {
            for y in b.y1..b.y2 {
                let row = (y * grid.width) as usize;
                for v in &mut grid.values[row + b.x1 as usize..row + b.x2 as usize] {
                    if o.depth < *v {
                        *v = o.depth;
                    }
                }
            }
        }
        Ok(grid)
    }

    fn inpaint_region(
        &self,
        image: &ImageHandle,
        mask: &[BBox],
        prompt: &str,
    ) -> Result<ImageHandle, ToolError> {
        let bounds = image.local_bounds();
        if let Some(b) = mask.iter().find(|b| !bounds.contains_box(b) || !b.is_valid()) {
            return Err(ToolError::OutOfBounds(format!(
                "mask box {b} outside image {}x{}",
                bounds.x2, bounds.y2
            )));
        }
        let absolute: Vec<BBox> = mask.iter().map(|b| image.to_absolute(b)).collect();
        let words = normalize_phrase(prompt);
        let (attrs, rest): (Vec<&String>, Vec<&String>) =
            words.iter().partition(|w| attribute_key(w).is_some());
        let new_name = (!rest.is_empty()).then(|| {
            rest.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ")
        });

        let mut scene = (*image.scene).clone();
        for o in &mut scene.objects {
            let (cx, cy) = o.bbox.center_f();
            if !absolute.iter().any(|m| m.contains_point(cx, cy)) {
                continue;
            }
            if let Some(n) = &new_name {
                o.name = n.clone();
            }
            for a in &attrs {
                if let Some(k) = attribute_key(a) {
                    o.attributes.insert(k.to_string(), a.to_string());
                }
            }
        }
        let mut out = image.with_edit(EditKind::Replace, mask, Some(prompt));
        out.scene = Arc::new(scene);
        Ok(out)
    }

    fn general_text(&self, prompt: &str) -> Result<String, ToolError> {
        Ok(fixture_text(prompt).unwrap_or_else(|| prompt.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::scene::SceneGraph;

    fn obj(id: &str, name: &str, b: [i64; 4], depth: f64) -> SceneObject {
        SceneObject::new(id, name, BBox::from(b), depth)
    }

    fn img(objects: Vec<SceneObject>) -> ImageHandle {
        let mut s = SceneGraph::new(640, 480);
        s.objects = objects;
        ImageHandle::new(s)
    }

    #[test]
    fn camel_locate() {
        let i = img(vec![obj("c", "camel", [261, 160, 525, 299], 0.5)]);
        let be = SyntheticBackend;
        assert_eq!(be.locate(&i, "camel").unwrap(), vec![BBox::new(261, 160, 525, 299)]);
        assert!(be.locate(&i, "unicorn").unwrap().is_empty());
    }

    #[test]
    fn locate_sorts_by_area_and_singularizes() {
        let i = img(vec![
            obj("a", "cat", [0, 0, 10, 10], 0.5),
            obj("b", "cat", [100, 100, 120, 120], 0.5),
        ]);
        let got = SyntheticBackend.locate(&i, "Cats").unwrap();
        assert_eq!(got, vec![BBox::new(100, 100, 120, 120), BBox::new(0, 0, 10, 10)]);
    }

    #[test]
    fn locate_matches_attribute_phrases() {
        let i = img(vec![
            obj("a", "cube", [0, 0, 10, 10], 0.5).with_attr("color", "blue"),
            obj("b", "cube", [20, 0, 40, 20], 0.5).with_attr("color", "red"),
        ]);
        assert_eq!(SyntheticBackend.locate(&i, "the blue cube").unwrap(), vec![BBox::new(0, 0, 10, 10)]);
        assert_eq!(SyntheticBackend.locate(&i, "cubes").unwrap().len(), 2);
        assert!(SyntheticBackend.locate(&i, "green cube").unwrap().is_empty());
        assert_eq!(SyntheticBackend.locate(&i, "objects").unwrap().len(), 2);
        assert_eq!(SyntheticBackend.locate(&i, "red object").unwrap(), vec![BBox::new(20, 0, 40, 20)]);
    }

    #[test]
    fn locate_in_crop_is_relative() {
        let i = img(vec![obj("a", "cat", [50, 50, 100, 100], 0.5)]).crop(&BBox::new(60, 40, 200, 200));
        assert_eq!(SyntheticBackend.locate(&i, "cat").unwrap(), vec![BBox::new(0, 10, 40, 60)]);
    }

    #[test]
    fn vqa_templates() {
        let be = SyntheticBackend;
        let i = img(vec![
            obj("c", "coat", [0, 0, 50, 50], 0.5).with_attr("color", "black").with_attr("material", "leather"),
            obj("s1", "sandwich", [100, 0, 120, 20], 0.5),
            obj("s2", "sandwich", [130, 0, 150, 20], 0.5),
            obj("s3", "sandwich", [160, 0, 180, 20], 0.5),
            obj("p", "woman", [200, 200, 260, 400], 0.5).with_attr("carrying", "umbrella").with_attr("identity", "Ada Lovelace"),
            obj("u", "umbrella", [190, 180, 270, 230], 0.4),
        ]);
        assert_eq!(be.answer_question(&i, "What color is the coat?").unwrap(), "black");
        assert_eq!(be.answer_question(&i, "What material is the coat made of?").unwrap(), "leather");
        assert_eq!(be.answer_question(&i, "How many sandwiches?").unwrap(), "3");
        assert_eq!(be.answer_question(&i, "Who is carrying the umbrella?").unwrap(), "woman");
        assert_eq!(be.answer_question(&i, "Who is the woman?").unwrap(), "ada lovelace");
        assert_eq!(be.answer_question(&i, "Is the coat made of ceramic?").unwrap(), "no");
        assert_eq!(be.answer_question(&i, "Is the coat black?").unwrap(), "yes");
        assert_eq!(be.answer_question(&i, "Why is the sky blue?").unwrap(), "unknown");
        assert_eq!(be.answer_question(&i, "What color is the dog?").unwrap(), "unknown");
    }

    #[test]
    fn vqa_focus_prefers_largest_then_central() {
        let i = img(vec![
            obj("a", "cat", [0, 0, 10, 10], 0.5).with_attr("color", "white"),
            obj("b", "cat", [315, 235, 325, 245], 0.5).with_attr("color", "black"),
        ]);
        assert_eq!(SyntheticBackend.answer_question(&i, "what color is the cat").unwrap(), "black");
    }

    #[test]
    fn alignment_scores() {
        let be = SyntheticBackend;
        let i = img(vec![obj("c", "coat", [0, 0, 50, 50], 0.5).with_attr("thickness", "thick")]);
        let s = be
            .score_alignment(&i, &["a thick coat".into(), "a thin coat".into()])
            .unwrap();
        // "thick coat" -> 2/2, "thin coat" -> 1/2
        assert_eq!(s, vec![1.0, 0.5]);
        assert_eq!(be.score_alignment(&i, &["".into()]).unwrap(), vec![0.0]);
        assert_eq!(be.score_alignment(&i, &["purple giraffe".into()]).unwrap(), vec![0.0]);
        let d1 = be.general_text("Tell me the attributes when the coat is thick in one sentence.").unwrap();
        let d2 = be.general_text("Tell me the attributes when the coat is thin in one sentence.").unwrap();
        let s = be.score_alignment(&i, &[d1, d2]).unwrap();
        assert!(s[0] > s[1]);
    }

    #[test]
    fn depth_grid() {
        let be = SyntheticBackend;
        let i = img(vec![obj("a", "cat", [0, 0, 10, 10], 0.3)]);
        let g = be.depth_of(&i).unwrap();
        assert_eq!(g.get(5, 5), Some(0.3));
        assert_eq!(g.get(20, 20), Some(1.0));
        assert_eq!(g.median(&BBox::new(0, 0, 10, 10)), 0.3);
        let empty = be.depth_of(&img(vec![])).unwrap();
        assert!(empty.values.iter().all(|v| *v == 1.0));
        // nearer object wins where two overlap
        let two = img(vec![obj("a", "cat", [0, 0, 10, 10], 0.6), obj("b", "dog", [5, 5, 15, 15], 0.2)]);
        let g = be.depth_of(&two).unwrap();
        assert_eq!(g.get(7, 7), Some(0.2));
        assert_eq!(g.get(2, 2), Some(0.6));
    }

    #[test]
    fn inpaint_rewrites_covered_objects() {
        let be = SyntheticBackend;
        let i = img(vec![
            obj("d", "dog", [10, 10, 50, 50], 0.5).with_attr("color", "brown"),
            obj("c", "cup", [100, 100, 120, 120], 0.5),
        ]);
        let out = be.inpaint_region(&i, &[BBox::new(0, 0, 60, 60)], "a cat").unwrap();
        assert_eq!(out.scene.objects[0].name, "cat");
        assert_eq!(out.scene.objects[1].name, "cup");
        assert_eq!(out.edits.len(), 1);
        assert_eq!(i.scene.objects[0].name, "dog");
        let red = be.inpaint_region(&i, &[BBox::new(0, 0, 60, 60)], "red").unwrap();
        assert_eq!(red.scene.objects[0].name, "dog");
        assert_eq!(red.scene.objects[0].attr("color"), Some("red"));
        let none = be.inpaint_region(&i, &[], "a cat").unwrap();
        assert_eq!(none.edits.len(), 1);
        assert_eq!(none.scene.objects, i.scene.objects);
        match be.inpaint_region(&i, &[BBox::new(600, 400, 700, 500)], "a cat") {
            Err(ToolError::OutOfBounds(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_fixtures() {
        let be = SyntheticBackend;
        assert_eq!(
            be.general_text("Tell me the attributes when the coat is thick in one sentence.").unwrap(),
            "a thick coat is heavy, padded, warm"
        );
        assert_eq!(
            be.general_text("Can the black be regarded as the same color as black? You should just reply yes or no without any other words.").unwrap(),
            "yes"
        );
        assert_eq!(
            be.general_text("Can the black be regarded as the same color aswhite? You should just reply yes or no without any other words.").unwrap(),
            "no"
        );
        assert_eq!(be.general_text("list colors").unwrap().lines().count(), 11);
        assert_eq!(be.general_text("hello there").unwrap(), "hello there");
    }
}
