//! Seeded synthetic datasets for every task family.
//!
//! Instance `i` of a dataset depends only on the seed and `i`, so a prefix of
//! a larger dataset equals the smaller one.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{self, panel_record};
use super::{Gold, HarnessError, Inputs, QuerySpec, RavenPuzzle, TaskInstance, TaskKind};
use crate::geometry::{expand_box, BBox};
use crate::reference::oracle::{apply_rule, consistent_rules, Rule, SHAPE_ORDER, SIZE_ORDER};
use crate::tools::vocab::attribute_values;
use crate::tools::{SceneGraph, SceneObject};

pub const IDENTITIES: &[&str] = &[
    "marie curie",
    "alan turing",
    "grace hopper",
    "ada lovelace",
    "nikola tesla",
    "rosalind franklin",
    "isaac newton",
    "emmy noether",
];

pub const RAVEN_KEYS: &[&str] = &["shape", "color", "size"];

const NOVEL_WORDS: &[&str] = &["dax", "wug", "fep", "blick", "toma"];
const MEWL_KEYS: &[&str] = &["color", "shape", "material"];
const BINARY_KEYS: &[&str] = &["thickness", "wetness", "cleanliness", "height", "openness"];
/// Categories whose plural is formed with a plain `-s`.
const COUNTABLE: &[&str] = &["cup", "car", "chair", "table", "bottle", "apple", "book", "lamp", "bag", "hat", "ball", "vase", "bird", "cube"];
const OBJECTS: &[&str] = &[
    "coat", "purse", "sandwich", "cat", "dog", "towel", "box", "knife", "cup", "umbrella", "car", "bus", "chair", "table",
    "bottle", "apple", "banana", "book", "lamp", "bag", "shirt", "hat", "ball", "vase", "horse", "bird",
];
const NEW_THINGS: &[&str] = &["truck", "cat", "dog", "vase", "lamp", "tree", "robot"];

const WIDTH: i64 = 320;
const HEIGHT: i64 = 240;
const COLS: i64 = 5;
const ROWS: i64 = 4;
const MARGIN: i64 = 10;
const PANEL: i64 = 120;

/// What to generate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub task: TaskKind,
    pub seed: u64,
    pub n: usize,
    /// Query forms to cycle through; empty means the task's defaults. For
    /// raven the forms are the layouts.
    #[serde(default)]
    pub forms: Vec<String>,
}

impl DatasetSpec {
    pub fn new(task: TaskKind, seed: u64, n: usize) -> Self {
        Self {
            task,
            seed,
            n,
            forms: Vec::new(),
        }
    }

    pub fn with_forms(mut self, forms: &[&str]) -> Self {
        self.forms = forms.iter().map(|s| s.to_string()).collect();
        self
    }
}

pub fn default_forms(task: TaskKind) -> &'static [&'static str] {
    match task {
        TaskKind::Vqa => &["choose", "compare-color", "compare-material", "side", "count", "color"],
        TaskKind::Grounding => &["ordinal", "ordinal-chain", "depth"],
        TaskKind::Tagging => &["tag"],
        TaskKind::Editing => &["replace-ordinal", "replace"],
        TaskKind::Raven => &["center"],
        TaskKind::MewlAnalog => &["word"],
    }
}

fn allowed_forms(task: TaskKind) -> &'static [&'static str] {
    match task {
        TaskKind::Raven => &["center", "left-right", "up-down"],
        t => default_forms(t),
    }
}

/// English plural of a category name.
pub fn plural(word: &str) -> String {
    match word {
        "person" => "people".into(),
        "knife" => "knives".into(),
        w if w.ends_with('s') || w.ends_with('x') || w.ends_with("ch") || w.ends_with("sh") => format!("{w}es"),
        w => format!("{w}s"),
    }
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<TaskInstance>, HarnessError> {
    let forms: Vec<String> = if spec.forms.is_empty() {
        default_forms(spec.task).iter().map(|s| s.to_string()).collect()
    } else {
        spec.forms.clone()
    };
    let allowed = allowed_forms(spec.task);
    if let Some(bad) = forms.iter().find(|f| !allowed.contains(&f.as_str())) {
        return Err(HarnessError::Dataset(format!(
            "form `{bad}` is not defined for {} (expected one of {})",
            spec.task,
            allowed.join(", ")
        )));
    }
    Ok((0..spec.n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let form = forms[i % forms.len()].as_str();
            let id = format!("{}-s{}-{i:04}", spec.task, spec.seed);
            // rejection sampling; each attempt draws fresh randomness
            loop {
                if let Some(inst) = attempt(spec.task, form, &id, &mut rng) {
                    break inst;
                }
            }
        })
        .collect())
}

fn attempt(task: TaskKind, form: &str, id: &str, rng: &mut ChaCha8Rng) -> Option<TaskInstance> {
    let (spec, inputs, labels) = match task {
        TaskKind::Vqa => vqa(form, rng)?,
        TaskKind::Grounding => grounding(form, rng)?,
        TaskKind::Tagging => tagging(rng)?,
        TaskKind::Editing => editing(form, rng)?,
        TaskKind::Raven => raven(form, rng)?,
        TaskKind::MewlAnalog => mewl(rng)?,
    };
    if let Inputs::Scene { scene } = &inputs {
        scene.validate().ok()?;
        if !well_separated(scene) {
            return None;
        }
    }
    let gold = oracle::gold_for(&spec, &inputs)?;
    Some(TaskInstance {
        id: id.to_string(),
        task,
        query: spec.text(),
        spec,
        inputs,
        gold,
        labels,
    })
}

type Drawn = (QuerySpec, Inputs, BTreeMap<String, Gold>);

fn pick<'a, T: ?Sized>(rng: &mut ChaCha8Rng, items: &[&'a T]) -> &'a T {
    items.choose(rng).copied().expect("non-empty list")
}

/// `n` distinct items.
fn distinct<'a>(rng: &mut ChaCha8Rng, items: &[&'a str], n: usize) -> Vec<&'a str> {
    items.choose_multiple(rng, n).copied().collect()
}

/// Grid placement: every object sits in its own cell, far enough from the
/// cell border that a 1.5x crop around it never reaches a neighbour.
struct Layout {
    cells: Vec<i64>,
    depths: Vec<f64>,
    scene: SceneGraph,
}

impl Layout {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut cells: Vec<i64> = (0..COLS * ROWS).collect();
        cells.shuffle(rng);
        let mut depths: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        depths.shuffle(rng);
        Self {
            cells,
            depths,
            scene: SceneGraph::new(WIDTH, HEIGHT),
        }
    }

    fn column_of(cell: i64) -> i64 {
        cell % COLS
    }

    fn take_cell(&mut self, avoid_columns: &[i64]) -> Option<i64> {
        let pos = self.cells.iter().position(|c| !avoid_columns.contains(&Self::column_of(*c)))?;
        Some(self.cells.remove(pos))
    }

    fn put(&mut self, rng: &mut ChaCha8Rng, name: &str, attrs: &[(&str, &str)]) -> Option<usize> {
        self.put_avoiding(rng, name, attrs, &[])
    }

    fn put_avoiding(&mut self, rng: &mut ChaCha8Rng, name: &str, attrs: &[(&str, &str)], avoid_columns: &[i64]) -> Option<usize> {
        let cell = self.take_cell(avoid_columns)?;
        let (cw, ch) = (WIDTH / COLS, HEIGHT / ROWS);
        let (x0, y0) = ((cell % COLS) * cw, (cell / COLS) * ch);
        let w = rng.gen_range(20..=36);
        let h = rng.gen_range(20..=36.min(ch - 2 * MARGIN));
        let x1 = x0 + MARGIN + rng.gen_range(0..=cw - 2 * MARGIN - w);
        let y1 = y0 + MARGIN + rng.gen_range(0..=ch - 2 * MARGIN - h);
        let idx = self.scene.objects.len();
        let mut o = SceneObject::new(format!("o{idx}"), name, BBox::new(x1, y1, x1 + w, y1 + h), self.depths[idx % 10]);
        o = o
            .with_attr("color", pick(rng, attribute_values("color")))
            .with_attr("material", pick(rng, attribute_values("material")));
        for (k, v) in attrs {
            o = o.with_attr(k, v);
        }
        self.scene.objects.push(o);
        Some(idx)
    }

    fn column(&self, idx: usize) -> i64 {
        self.scene.objects[idx].bbox.x1 / (WIDTH / COLS)
    }

    fn fill(&mut self, rng: &mut ChaCha8Rng, n: usize, exclude: &[&str]) -> Option<()> {
        let pool: Vec<&str> = OBJECTS.iter().copied().filter(|o| !exclude.contains(o)).collect();
        for name in distinct(rng, &pool, n) {
            self.put(rng, name, &[])?;
        }
        Some(())
    }

    fn boxed(self) -> Inputs {
        Inputs::Scene { scene: self.scene }
    }
}

/// No expanded crop around an object touches another object, and objects
/// sharing a name never tie on any sort key.
fn well_separated(scene: &SceneGraph) -> bool {
    let size = (scene.width, scene.height);
    for (i, a) in scene.objects.iter().enumerate() {
        let grown = expand_box(a.bbox, size, 1.5);
        for (j, b) in scene.objects.iter().enumerate() {
            if i == j {
                continue;
            }
            if grown.intersection(&b.bbox).is_some() || a.depth == b.depth {
                return false;
            }
            if a.name == b.name {
                let (pa, pb) = (a.bbox, b.bbox);
                if pa.x1 == pb.x1 || pa.x2 == pb.x2 || pa.y1 == pb.y1 || pa.y2 == pb.y2 || pa.center().0 == pb.center().0 {
                    return false;
                }
            }
        }
    }
    true
}

fn value_pair(rng: &mut ChaCha8Rng, key: &str) -> (String, String) {
    let vals = attribute_values(key);
    let a = pick(rng, vals).to_string();
    let same = rng.gen_bool(0.5);
    let b = if same {
        a.clone()
    } else {
        vals.iter().filter(|v| **v != a).copied().collect::<Vec<_>>().choose(rng).unwrap().to_string()
    };
    (a, b)
}

fn vqa(form: &str, rng: &mut ChaCha8Rng) -> Option<Drawn> {
    let mut l = Layout::new(rng);
    let extra = rng.gen_range(2..=4);
    let spec = match form {
        "choose" => {
            let key = pick(rng, BINARY_KEYS);
            let vals = attribute_values(key);
            let value = pick(rng, vals);
            let obj = pick(rng, OBJECTS);
            l.put(rng, obj, &[(key, value)])?;
            l.fill(rng, extra, &[obj])?;
            let (first, second) = if rng.gen_bool(0.5) { (vals[0], vals[1]) } else { (vals[1], vals[0]) };
            QuerySpec::Choose {
                object: obj.into(),
                first: first.into(),
                second: second.into(),
            }
        }
        "compare-color" | "compare-material" => {
            let key = if form == "compare-color" { "color" } else { "material" };
            let names = distinct(rng, OBJECTS, 2);
            let (a, b) = value_pair(rng, key);
            l.put(rng, names[0], &[(key, &a)])?;
            l.put(rng, names[1], &[(key, &b)])?;
            l.fill(rng, extra, &names)?;
            // the question polarity is drawn independently of the answer
            let different = rng.gen_bool(0.5);
            let (first, second) = (names[0].to_string(), names[1].to_string());
            if key == "color" {
                QuerySpec::CompareColor { first, second, different }
            } else {
                QuerySpec::CompareMaterial { first, second, different }
            }
        }
        "side" => {
            let names = distinct(rng, OBJECTS, 2);
            let r = l.put(rng, names[1], &[])?;
            let col = l.column(r);
            l.put_avoiding(rng, names[0], &[], &[col])?;
            l.fill(rng, extra, &names)?;
            QuerySpec::Side {
                object: names[0].into(),
                reference: names[1].into(),
            }
        }
        "count" => {
            let obj = pick(rng, COUNTABLE);
            for _ in 0..rng.gen_range(1..=4) {
                l.put(rng, obj, &[])?;
            }
            l.fill(rng, extra, &[obj])?;
            QuerySpec::Count { object: obj.into() }
        }
        "color" => {
            let obj = pick(rng, OBJECTS);
            l.put(rng, obj, &[])?;
            l.fill(rng, extra, &[obj])?;
            QuerySpec::Color { object: obj.into() }
        }
        _ => return None,
    };
    Some((spec, l.boxed(), BTreeMap::new()))
}

const DIRECTIONS: &[&str] = &["left", "right", "top", "bottom"];

fn grounding(form: &str, rng: &mut ChaCha8Rng) -> Option<Drawn> {
    let mut l = Layout::new(rng);
    let obj = pick(rng, OBJECTS);
    let copies = rng.gen_range(2..=4);
    for _ in 0..copies {
        l.put(rng, obj, &[])?;
    }
    let fillers = rng.gen_range(1..=3);
    l.fill(rng, fillers, &[obj])?;
    let spec = match form {
        "ordinal" | "ordinal-chain" => QuerySpec::Ordinal {
            object: obj.into(),
            direction: pick(rng, DIRECTIONS).into(),
            index: rng.gen_range(1..=copies),
            then: (form == "ordinal-chain").then(|| pick(rng, DIRECTIONS).to_string()),
        },
        "depth" => QuerySpec::Depth {
            object: obj.into(),
            front: rng.gen_bool(0.5),
        },
        _ => return None,
    };
    Some((spec, l.boxed(), BTreeMap::new()))
}

fn tagging(rng: &mut ChaCha8Rng) -> Option<Drawn> {
    let mut l = Layout::new(rng);
    let persons = rng.gen_range(3..=5);
    for who in distinct(rng, IDENTITIES, persons) {
        l.put(rng, "person", &[("identity", who)])?;
    }
    let fillers = rng.gen_range(0..=3);
    l.fill(rng, fillers, &[])?;
    let spec = QuerySpec::Tag {
        object: "person".into(),
        direction: pick(rng, &["left", "right"]).into(),
        index: rng.gen_range(1..=persons),
    };
    Some((spec, l.boxed(), BTreeMap::new()))
}

fn editing(form: &str, rng: &mut ChaCha8Rng) -> Option<Drawn> {
    let mut l = Layout::new(rng);
    let obj = pick(rng, OBJECTS);
    let thing = pick(rng, NEW_THINGS);
    let prompt = format!("{} {thing}", pick(rng, attribute_values("color")));
    let spec = match form {
        "replace-ordinal" => {
            let copies = rng.gen_range(2..=4);
            for _ in 0..copies {
                l.put(rng, obj, &[])?;
            }
            QuerySpec::Replace {
                object: obj.into(),
                direction: Some(pick(rng, &["left", "right"]).into()),
                index: rng.gen_range(1..=copies),
                prompt,
            }
        }
        "replace" => {
            l.put(rng, obj, &[])?;
            QuerySpec::Replace {
                object: obj.into(),
                direction: None,
                index: 1,
                prompt,
            }
        }
        _ => return None,
    };
    let fillers = rng.gen_range(1..=3);
    l.fill(rng, fillers, &[obj])?;
    Some((spec, l.boxed(), BTreeMap::new()))
}

fn scale(key: &str) -> &'static [&'static str] {
    match key {
        "shape" => SHAPE_ORDER,
        "size" => SIZE_ORDER,
        _ => attribute_values(key),
    }
}

fn rule_name(r: Rule) -> &'static str {
    match r {
        Rule::Constant => "constant",
        Rule::Progression => "progression",
        Rule::DistributeThree => "distribute-three",
    }
}

/// Three rows of three values following `rule`, with the rule the only one
/// consistent with the first two rows.
fn planted_rows(rng: &mut ChaCha8Rng, key: &str, rule: Rule) -> Option<[[&'static str; 3]; 3]> {
    let bare = key.rsplit('.').next().unwrap_or(key);
    let vals = scale(bare);
    let mut rows = [[""; 3]; 3];
    match rule {
        Rule::Constant => {
            for r in &mut rows {
                *r = [pick(rng, vals); 3];
            }
        }
        Rule::Progression => {
            let mut starts: Vec<usize> = (0..=vals.len() - 3).collect();
            starts.shuffle(rng);
            let third = rng.gen_range(0..=vals.len() - 3);
            for (r, s) in rows.iter_mut().zip([starts[0], starts[1], third]) {
                *r = [vals[s], vals[s + 1], vals[s + 2]];
            }
        }
        Rule::DistributeThree => {
            let set = distinct(rng, vals, 3);
            let shift = if rng.gen_bool(0.5) { 1 } else { 2 };
            for (i, r) in rows.iter_mut().enumerate() {
                for (j, c) in r.iter_mut().enumerate() {
                    *c = set[(j + i * shift) % 3];
                }
            }
        }
    }
    if consistent_rules(bare, &rows[0], &rows[1]) != [rule] {
        return None;
    }
    (apply_rule(rule, bare, &rows[0], &rows[2][..2]).as_deref() == Some(rows[2][2])).then_some(rows)
}

pub fn raven_regions(layout: &str) -> Vec<&'static str> {
    match layout {
        "left-right" => vec!["left.", "right."],
        "up-down" => vec!["top.", "bottom."],
        _ => vec![""],
    }
}

/// A panel image holding one object per region, described by `cell`
/// (`prefix+key` to value).
fn panel_scene(layout: &str, cell: &BTreeMap<String, String>) -> SceneGraph {
    let mut s = SceneGraph::new(PANEL, PANEL);
    for (i, prefix) in raven_regions(layout).into_iter().enumerate() {
        let get = |k: &str| cell[&format!("{prefix}{k}")].clone();
        let size_idx = SIZE_ORDER.iter().position(|v| *v == get("size")).unwrap() as i64;
        let (region, side) = match layout {
            "left-right" => (BBox::new(i as i64 * 60, 0, i as i64 * 60 + 60, PANEL), 10 + 8 * size_idx),
            "up-down" => (BBox::new(0, i as i64 * 60, PANEL, i as i64 * 60 + 60), 10 + 8 * size_idx),
            _ => (BBox::full(PANEL, PANEL), 24 + 12 * size_idx),
        };
        let (cx, cy) = region.center();
        let b = BBox::new(cx - side / 2, cy - side / 2, cx - side / 2 + side, cy - side / 2 + side);
        s.objects.push(
            SceneObject::new(format!("p{i}"), get("shape"), b, 0.5)
                .with_attr("shape", &get("shape"))
                .with_attr("color", &get("color"))
                .with_attr("size", &get("size")),
        );
    }
    s
}

fn raven(layout: &str, rng: &mut ChaCha8Rng) -> Option<Drawn> {
    let mut keys = Vec::new();
    for prefix in raven_regions(layout) {
        for k in RAVEN_KEYS {
            keys.push(format!("{prefix}{k}"));
        }
    }
    let mut grid: Vec<BTreeMap<String, String>> = vec![BTreeMap::new(); 9];
    let mut rules = BTreeMap::new();
    for key in &keys {
        let bare = key.rsplit('.').next().unwrap();
        let options: &[Rule] = if bare == "color" {
            &[Rule::Constant, Rule::DistributeThree]
        } else {
            &[Rule::Constant, Rule::Progression, Rule::DistributeThree]
        };
        let rule = *options.choose(rng).unwrap();
        let rows = planted_rows(rng, key, rule)?;
        for (i, v) in rows.iter().flatten().enumerate() {
            grid[i].insert(key.clone(), v.to_string());
        }
        rules.insert(key.clone(), rule_name(rule).to_string());
    }
    let answer = grid[8].clone();
    let mut candidates = vec![answer.clone()];
    let mut guard = 0;
    while candidates.len() < 8 {
        guard += 1;
        if guard > 200 {
            return None;
        }
        let mut c = answer.clone();
        let changes = rng.gen_range(1..=2);
        for key in distinct(rng, &keys.iter().map(String::as_str).collect::<Vec<_>>(), changes) {
            let bare = key.rsplit('.').next().unwrap();
            let current = c[key].clone();
            let others: Vec<&str> = scale(bare).iter().copied().filter(|v| *v != current).collect();
            c.insert(key.to_string(), pick(rng, &others).to_string());
        }
        if !candidates.contains(&c) {
            candidates.push(c);
        }
    }
    let answer_index = rng.gen_range(1..=8);
    candidates.swap(0, answer_index - 1);
    let panels: Vec<SceneGraph> = grid[..8].iter().map(|c| panel_scene(layout, c)).collect();
    let candidates: Vec<SceneGraph> = candidates.iter().map(|c| panel_scene(layout, c)).collect();
    let label = candidates
        .iter()
        .map(|s| panel_record(s, layout).unwrap_or_else(|| "none".into()))
        .collect::<Vec<_>>()
        .join(", ");
    let labels = BTreeMap::from([("DETECT_SHAPE".to_string(), Gold::Answer { text: label })]);
    let puzzle = RavenPuzzle {
        layout: layout.to_string(),
        panels,
        candidates,
        rules,
        answer_index,
    };
    Some((QuerySpec::Raven { layout: layout.into() }, Inputs::Raven(puzzle), labels))
}

fn single_object(color: &str, shape: &str, material: &str) -> SceneGraph {
    SceneGraph::new(PANEL, PANEL).with_object(
        SceneObject::new("x", "block", BBox::new(30, 30, 90, 90), 0.5)
            .with_attr("color", color)
            .with_attr("shape", shape)
            .with_attr("material", material),
    )
}

fn mewl(rng: &mut ChaCha8Rng) -> Option<Drawn> {
    let key = pick(rng, MEWL_KEYS);
    let value = pick(rng, attribute_values(key));
    let words = distinct(rng, NOVEL_WORDS, 3);
    let target = words[0];
    let n_pos = rng.gen_range(2..=3);
    let mut examples: Vec<(BTreeMap<&str, &str>, &str)> = Vec::new();
    // positives agree on the bound value and disagree on everything else
    let mut others: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for k in MEWL_KEYS.iter().filter(|k| *k != &key) {
        others.insert(k, distinct(rng, attribute_values(k), n_pos));
    }
    for i in 0..n_pos {
        let mut a = BTreeMap::from([(key, value)]);
        for (k, vs) in &others {
            a.insert(k, vs[i]);
        }
        examples.push((a, target));
    }
    for w in &words[1..] {
        let mut a = BTreeMap::new();
        for k in MEWL_KEYS {
            let vals: Vec<&str> = attribute_values(k).iter().copied().filter(|v| *k != key || *v != value).collect();
            a.insert(*k, pick(rng, &vals));
        }
        examples.push((a, w));
    }
    examples.shuffle(rng);
    let scenes = examples.iter().map(|(a, _)| single_object(a["color"], a["shape"], a["material"])).collect();
    let words_out = examples.iter().map(|(_, w)| w.to_string()).collect();

    let mut l = Layout::new(rng);
    let n = rng.gen_range(3..=5);
    let holder = rng.gen_range(0..n);
    for i in 0..n {
        let mut attrs = Vec::new();
        for k in MEWL_KEYS {
            let v = if i == holder && *k == key {
                value
            } else {
                let vals: Vec<&str> = attribute_values(k).iter().copied().filter(|v| *k != key || *v != value).collect();
                pick(rng, &vals)
            };
            attrs.push((*k, v));
        }
        l.put(rng, "block", &attrs)?;
    }
    if !well_separated(&l.scene) {
        return None;
    }
    let spec = QuerySpec::Word { word: target.into() };
    Some((
        spec,
        Inputs::Mewl {
            examples: scenes,
            words: words_out,
            query: l.scene,
        },
        BTreeMap::new(),
    ))
}
