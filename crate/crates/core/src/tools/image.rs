use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scene::{SceneGraph, SceneObject};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Replace,
    Colorpop,
    Bgblur,
}

impl EditKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EditKind::Replace => "replace",
            EditKind::Colorpop => "colorpop",
            EditKind::Bgblur => "bgblur",
        }
    }
}

/// One entry of an image's edit log. Boxes are in absolute scene coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub kind: EditKind,
    pub boxes: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayKind {
    Tag,
    Emoji,
}

/// A labeled box drawn on the image (absolute coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub kind: OverlayKind,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub label: String,
}

/// A view onto a scene: the scene itself, the current viewport in absolute
/// coordinates, and the append-only overlay and edit logs.
///
/// Boxes exchanged with callers are relative to the viewport's top-left
/// corner, exactly as pixel coordinates of a cropped image would be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageHandle {
    pub scene: Arc<SceneGraph>,
    pub viewport: BBox,
    #[serde(default)]
    pub overlays: Vec<Overlay>,
    #[serde(default)]
    pub edits: Vec<EditRecord>,
}

impl ImageHandle {
    pub fn new(scene: SceneGraph) -> Self {
        Self::from_arc(Arc::new(scene))
    }

    pub fn from_arc(scene: Arc<SceneGraph>) -> Self {
        let viewport = scene.bounds();
        Self {
            scene,
            viewport,
            overlays: Vec::new(),
            edits: Vec::new(),
        }
    }

    pub fn width(&self) -> i64 {
        (self.viewport.x2 - self.viewport.x1).max(0)
    }

    pub fn height(&self) -> i64 {
        (self.viewport.y2 - self.viewport.y1).max(0)
    }

    pub fn size(&self) -> (i64, i64) {
        (self.width(), self.height())
    }

    /// Viewport-relative box of the whole view.
    pub fn local_bounds(&self) -> BBox {
        BBox::full(self.width(), self.height())
    }

    pub fn to_absolute(&self, b: &BBox) -> BBox {
        b.translate(self.viewport.x1, self.viewport.y1)
    }

    pub fn to_local(&self, b: &BBox) -> BBox {
        b.translate(-self.viewport.x1, -self.viewport.y1)
    }

    /// New handle viewing `b` (viewport-relative), clamped to the current
    /// view. A region with no extent yields an empty view.
    pub fn crop(&self, b: &BBox) -> ImageHandle {
        let (w, h) = self.size();
        let c = b.clamp_to(w, h);
        let c = BBox::new(c.x1, c.y1, c.x2.max(c.x1), c.y2.max(c.y1));
        ImageHandle {
            scene: Arc::clone(&self.scene),
            viewport: self.to_absolute(&c),
            overlays: self.overlays.clone(),
            edits: self.edits.clone(),
        }
    }

    /// Objects intersecting the viewport paired with their visible region
    /// in viewport-relative coordinates, in scene order.
    pub fn visible(&self) -> Vec<(&SceneObject, BBox)> {
        self.scene
            .objects
            .iter()
            .filter_map(|o| {
                o.bbox
                    .intersection(&self.viewport)
                    .map(|i| (o, self.to_local(&i)))
            })
            .collect()
    }

    pub fn with_overlay(&self, kind: OverlayKind, local_box: &BBox, label: &str) -> ImageHandle {
        let mut out = self.clone();
        out.overlays.push(Overlay {
            kind,
            bbox: self.to_absolute(local_box),
            label: label.to_string(),
        });
        out
    }

    pub fn with_edit(&self, kind: EditKind, local_boxes: &[BBox], prompt: Option<&str>) -> ImageHandle {
        let mut out = self.clone();
        out.edits.push(EditRecord {
            kind,
            boxes: local_boxes.iter().map(|b| self.to_absolute(b)).collect(),
            prompt: prompt.map(str::to_string),
        });
        out
    }

    /// One-line description used in traces.
    pub fn summary(&self) -> String {
        format!(
            "image {}x{} @{} ({} objects, {} overlays, {} edits)",
            self.width(),
            self.height(),
            self.viewport,
            self.visible().len(),
            self.overlays.len(),
            self.edits.len()
        )
    }
}

/// Per-pixel depth over a viewport, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    pub width: i64,
    pub height: i64,
    pub values: Vec<f64>,
}

impl DepthGrid {
    pub fn filled(width: i64, height: i64, value: f64) -> Self {
        let n = (width.max(0) * height.max(0)) as usize;
        Self {
            width: width.max(0),
            height: height.max(0),
            values: vec![value; n],
        }
    }

    pub fn get(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width || y >= self.height {
            return None;
        }
        self.values.get((y * self.width + x) as usize).copied()
    }

    /// Median over the pixels of `b` (clamped to the grid), averaging the two
    /// middle values for even counts. An empty region reads as background.
    pub fn median(&self, b: &BBox) -> f64 {
        let c = b.clamp_to(self.width, self.height);
        let mut vals = Vec::new();
        for y in c.y1..c.y2 {
            let row = (y * self.width) as usize;
            vals.extend_from_slice(&self.values[row + c.x1 as usize..row + c.x2.max(c.x1) as usize]);
        }
        median(&mut vals).unwrap_or(1.0)
    }
}

/// Median of a sample, `None` when empty.
pub fn median(vals: &mut [f64]) -> Option<f64> {
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let n = vals.len();
    Some(if n % 2 == 1 {
        vals[n / 2]
    } else {
        (vals[n / 2 - 1] + vals[n / 2]) / 2.0
    })
}
