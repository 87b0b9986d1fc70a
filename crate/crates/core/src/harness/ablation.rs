//! Library variant × training-set size grids.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::eval::evaluate;
use super::generate::{generate_dataset, DatasetSpec};
use super::metrics::TagMatcher;
use super::{HarnessError, TaskKind};
use crate::llm::{Gateway, GatewayError};
use crate::registry::Library;
use crate::synthesis::{learn, SynthesisConfig};
use crate::tools::SharedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LibraryVariant {
    /// Built-in modules only, no learning.
    #[serde(rename = "wo-ml")]
    WithoutLearning,
    /// Built-ins plus whatever is learned from the training prefix.
    #[serde(rename = "full")]
    Full,
}

impl LibraryVariant {
    pub fn label(&self) -> &'static str {
        match self {
            LibraryVariant::WithoutLearning => "w/o ML",
            LibraryVariant::Full => "full",
        }
    }
}

fn default_variants() -> Vec<LibraryVariant> {
    vec![LibraryVariant::WithoutLearning, LibraryVariant::Full]
}

/// Grid file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub task: TaskKind,
    #[serde(default)]
    pub seed: u64,
    pub test_size: usize,
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_variants")]
    pub variants: Vec<LibraryVariant>,
    /// Model ids; empty means the gateway's default model.
    #[serde(default)]
    pub models: Vec<String>,
}

impl AblationGrid {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let g: AblationGrid = serde_json::from_str(text).map_err(|e| HarnessError::Dataset(format!("grid file: {e}")))?;
        if g.train_sizes.is_empty() || g.variants.is_empty() || g.test_size == 0 {
            return Err(HarnessError::EmptyGrid("grid needs train sizes, variants and a test size".into()));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub train_size: usize,
    pub score: f64,
    pub learned: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub variant: LibraryVariant,
    pub cells: Vec<AblationCell>,
}

impl AblationRow {
    pub fn non_decreasing(&self) -> bool {
        self.cells.windows(2).all(|w| w[1].score >= w[0].score - 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub task: TaskKind,
    pub metric: String,
    pub train_sizes: Vec<usize>,
    pub rows: Vec<AblationRow>,
    /// Every full-library row is non-decreasing in training size.
    pub non_decreasing: bool,
}

impl AblationTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<28} {:<8}", "model", "library");
        for n in &self.train_sizes {
            let _ = write!(out, " {:>8}", format!("n={n}"));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<28} {:<8}", r.model, r.variant.label());
            for c in &r.cells {
                let _ = write!(out, " {:>8.3}", c.score);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "metric: {}", self.metric);
        let _ = writeln!(out, "non-decreasing: {}", self.non_decreasing);
        out
    }
}

/// A model's gateway and the tool backend its evaluations use.
pub type ModelFactory<'a> = &'a dyn Fn(&str) -> Result<(Arc<Gateway>, SharedBackend), GatewayError>;

/// Score every (model, variant, size) cell on one test split. Training
/// data comes from `seed + 1`; each size uses a prefix of the same
/// training split.
pub fn run_ablation(grid: &AblationGrid, base: &Library, models: ModelFactory<'_>, cfg: &SynthesisConfig) -> Result<AblationTable, HarnessError> {
    if grid.train_sizes.is_empty() || grid.variants.is_empty() {
        return Err(HarnessError::EmptyGrid("no cells".into()));
    }
    let test = generate_dataset(&DatasetSpec::new(grid.task, grid.seed, grid.test_size))?;
    let max_train = grid.train_sizes.iter().copied().max().unwrap_or(0);
    let train = generate_dataset(&DatasetSpec::new(grid.task, grid.seed.wrapping_add(1), max_train))?;
    let model_ids = if grid.models.is_empty() { vec![String::new()] } else { grid.models.clone() };
    let matcher = TagMatcher::default();
    let mut rows = Vec::new();
    for model in &model_ids {
        let (gateway, backend) = models(model).map_err(|e| HarnessError::Dataset(format!("{}: {e}", e.code())))?;
        let model_name = gateway.model_id().to_string();
        for variant in &grid.variants {
            let mut cells = Vec::new();
            let mut fixed: Option<f64> = None;
            for &n in &grid.train_sizes {
                let (lib, learned) = match variant {
                    LibraryVariant::WithoutLearning => (base.clone(), Vec::new()),
                    LibraryVariant::Full => {
                        let (lib, rep) = learn(&train[..n], base, &gateway, &backend, cfg, grid.task.as_str())
                            .map_err(|e| HarnessError::Dataset(format!("learning on {n} examples: {e}")))?;
                        (lib, rep.accepted)
                    }
                };
                let score = match (variant, fixed) {
                    (LibraryVariant::WithoutLearning, Some(s)) => s,
                    _ => evaluate(&test, &lib, &gateway, &backend, &matcher).metrics.headline(grid.task),
                };
                if *variant == LibraryVariant::WithoutLearning {
                    fixed = Some(score);
                }
                cells.push(AblationCell {
                    train_size: n,
                    score,
                    learned,
                });
            }
            rows.push(AblationRow {
                model: model_name.clone(),
                variant: *variant,
                cells,
            });
        }
    }
    let non_decreasing = rows
        .iter()
        .filter(|r| r.variant == LibraryVariant::Full)
        .all(AblationRow::non_decreasing);
    Ok(AblationTable {
        task: grid.task,
        metric: if grid.task == TaskKind::Tagging { "f1" } else { "accuracy" }.into(),
        train_sizes: grid.train_sizes.clone(),
        rows,
        non_decreasing,
    })
}
