//! Synthetic datasets, metrics and experiment runners.

mod ablation;
mod eval;
mod generate;
mod metrics;
pub mod oracle;
mod planner;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{Environment, Value};
use crate::geometry::BBox;
use crate::tools::{EditKind, ImageHandle, SceneGraph};

pub use ablation::{run_ablation, AblationCell, AblationGrid, AblationRow, AblationTable, LibraryVariant, ModelFactory};
pub use eval::{config_digest, evaluate, execution_prompt, run_instance, run_program, EvalReport, InstanceOutcome, Metrics, TraceLine};
pub use generate::{default_forms, generate_dataset, plural, DatasetSpec, IDENTITIES, RAVEN_KEYS};
pub use metrics::{counts_for, edit_satisfied, iou, judge, match_tag, predicted_tags, region_counts, tag_counts, Prf, TagMatcher, IOU_THRESHOLD};
pub use planner::{ordinal_index, plan_query, QueryPlan, ORDINALS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("EMPTY_GRID: {0}")]
    EmptyGrid(String),
    #[error("DATASET_ERROR: {0}")]
    Dataset(String),
    #[error("IO_ERROR: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::EmptyGrid(_) => "EMPTY_GRID",
            HarnessError::Dataset(_) => "DATASET_ERROR",
            HarnessError::Io(_) => "IO_ERROR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Vqa,
    Grounding,
    Tagging,
    Editing,
    Raven,
    MewlAnalog,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Vqa,
        TaskKind::Grounding,
        TaskKind::Tagging,
        TaskKind::Editing,
        TaskKind::Raven,
        TaskKind::MewlAnalog,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Vqa => "vqa",
            TaskKind::Grounding => "grounding",
            TaskKind::Tagging => "tagging",
            TaskKind::Editing => "editing",
            TaskKind::Raven => "raven",
            TaskKind::MewlAnalog => "mewl-analog",
        }
    }

    /// Default learn-split size.
    pub fn default_train_size(&self) -> usize {
        match self {
            TaskKind::Vqa => 300,
            TaskKind::Grounding | TaskKind::Tagging | TaskKind::Editing => 100,
            TaskKind::Raven | TaskKind::MewlAnalog => 10,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s || (s == "mewl" && *t == TaskKind::MewlAnalog))
            .ok_or_else(|| HarnessError::Dataset(format!("unknown task `{s}`")))
    }
}

/// Structured form of a query, from which both its text and its gold
/// answer are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum QuerySpec {
    Choose { object: String, first: String, second: String },
    CompareColor { first: String, second: String, different: bool },
    CompareMaterial { first: String, second: String, different: bool },
    Side { object: String, reference: String },
    Count { object: String },
    Color { object: String },
    Ordinal { object: String, direction: String, index: usize, then: Option<String> },
    Depth { object: String, front: bool },
    Tag { object: String, direction: String, index: usize },
    Replace { object: String, direction: Option<String>, index: usize, prompt: String },
    Raven { layout: String },
    Word { word: String },
}

impl QuerySpec {
    pub fn form(&self) -> &'static str {
        match self {
            QuerySpec::Choose { .. } => "choose",
            QuerySpec::CompareColor { .. } => "compare-color",
            QuerySpec::CompareMaterial { .. } => "compare-material",
            QuerySpec::Side { .. } => "side",
            QuerySpec::Count { .. } => "count",
            QuerySpec::Color { .. } => "color",
            QuerySpec::Ordinal { then: None, .. } => "ordinal",
            QuerySpec::Ordinal { .. } => "ordinal-chain",
            QuerySpec::Depth { .. } => "depth",
            QuerySpec::Tag { .. } => "tag",
            QuerySpec::Replace { direction: None, .. } => "replace",
            QuerySpec::Replace { .. } => "replace-ordinal",
            QuerySpec::Raven { .. } => "raven",
            QuerySpec::Word { .. } => "word",
        }
    }

    /// The natural-language query the model sees.
    pub fn text(&self) -> String {
        let ord = |i: &usize| ORDINALS.get(i.wrapping_sub(1)).copied().unwrap_or("nth");
        match self {
            QuerySpec::Choose { object, first, second } => format!("Is the {object} {first} or {second}?"),
            QuerySpec::CompareColor { first, second, different } => format!(
                "Do the {first} and the {second} have {}?",
                if *different { "different colors" } else { "the same color" }
            ),
            QuerySpec::CompareMaterial { first, second, different } => format!(
                "Are the {first} and the {second} made of {}?",
                if *different { "different materials" } else { "the same material" }
            ),
            QuerySpec::Side { object, reference } => {
                format!("Is the {object} to the left or to the right of the {reference}?")
            }
            QuerySpec::Count { object } => format!("How many {} are there?", plural(object)),
            QuerySpec::Color { object } => format!("What color is the {object}?"),
            QuerySpec::Ordinal { object, direction, index, then } => match then {
                None => format!("the {} {object} from the {direction}", ord(index)),
                Some(t) => format!("the {} {object} from the {direction} on the {t}", ord(index)),
            },
            QuerySpec::Depth { object, front } => {
                format!("the {object} {}", if *front { "in the front" } else { "at the back" })
            }
            QuerySpec::Tag { object, direction, index } => {
                format!("Tag the {} {object} from the {direction} with its name", ord(index))
            }
            QuerySpec::Replace { object, direction, index, prompt } => {
                let art = if prompt.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
                match direction {
                    None => format!("Replace the {object} with {art} {prompt}"),
                    Some(d) => format!("Replace the {} {object} from the {d} with {art} {prompt}", ord(index)),
                }
            }
            QuerySpec::Raven { layout } => format!("Which candidate completes the {layout} matrix?"),
            QuerySpec::Word { word } => format!("Which object is the {word}?"),
        }
    }
}

/// Scenes an instance is evaluated over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Inputs {
    Scene { scene: SceneGraph },
    Raven(RavenPuzzle),
    Mewl { examples: Vec<SceneGraph>, words: Vec<String>, query: SceneGraph },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RavenPuzzle {
    pub layout: String,
    /// Eight known cells in row order.
    pub panels: Vec<SceneGraph>,
    pub candidates: Vec<SceneGraph>,
    /// Rule label per attribute key (`left.shape` etc. in split layouts).
    pub rules: BTreeMap<String, String>,
    /// 1-based.
    pub answer_index: usize,
}

/// Training or evaluation label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Gold {
    Answer { text: String },
    Box { bbox: BBox },
    Tags { pairs: Vec<(BBox, String)> },
    Edit { kind: EditKind, boxes: Vec<BBox>, prompt: String },
    Index { index: usize },
}

impl Gold {
    pub fn comparator(&self) -> &'static str {
        match self {
            Gold::Answer { .. } => "exact-text",
            Gold::Index { .. } => "numeric-eq",
            Gold::Box { .. } => "iou-at-0.5",
            Gold::Tags { .. } | Gold::Edit { .. } => "set-eq",
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Gold::Answer { text } => format!("'{text}'"),
            Gold::Box { bbox } => bbox.to_string(),
            Gold::Tags { pairs } => pairs.iter().map(|(b, l)| format!("{l}@{b}")).collect::<Vec<_>>().join(", "),
            Gold::Edit { kind, boxes, prompt } => format!(
                "{}({}) '{prompt}'",
                kind.as_str(),
                boxes.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
            ),
            Gold::Index { index } => index.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub task: TaskKind,
    pub query: String,
    pub spec: QuerySpec,
    pub inputs: Inputs,
    pub gold: Gold,
    /// Labels for intermediate results, keyed by the module producing them.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, Gold>,
}

impl TaskInstance {
    /// Initial bindings for the instance's programs.
    pub fn environment(&self) -> Environment {
        let img = |s: &SceneGraph| Value::Image(ImageHandle::new(s.clone()));
        let imgs = |v: &[SceneGraph]| Value::List(v.iter().map(img).collect());
        let env = Environment::new().with("QUESTION", Value::text(self.query.clone()));
        match &self.inputs {
            Inputs::Scene { scene } => env.with("IMAGE", img(scene)),
            Inputs::Raven(p) => env.with("PANELS", imgs(&p.panels)).with("CANDIDATES", imgs(&p.candidates)),
            Inputs::Mewl { examples, words, query } => env
                .with("EXAMPLES", imgs(examples))
                .with("WORDS", Value::List(words.iter().map(|w| Value::text(w.clone())).collect()))
                .with("IMAGE", img(query)),
        }
    }
}

/// One JSON document per line.
pub fn save_dataset(path: &Path, instances: &[TaskInstance]) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    for inst in instances {
        let line = serde_json::to_string(inst).expect("serializable");
        writeln!(f, "{line}").map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<TaskInstance>, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: TaskInstance = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(inst);
    }
    if out.is_empty() {
        return Err(HarnessError::Dataset(format!("{} holds no instances", path.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
