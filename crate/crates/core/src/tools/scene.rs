use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ToolError;
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    /// In (0, 1]; smaller is nearer to the camera.
    pub depth: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl SceneObject {
    pub fn new(id: impl Into<String>, name: impl Into<String>, bbox: BBox, depth: f64) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            bbox,
            attributes: BTreeMap::new(),
            depth,
            tags: Vec::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: &str) -> Self {
        self.attributes.insert(key.to_string(), value.to_string());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }
}

/// Ground-truth description of a synthetic image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub width: i64,
    pub height: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub objects: Vec<SceneObject>,
}

impl SceneGraph {
    pub fn new(width: i64, height: i64) -> Self {
        Self {
            width,
            height,
            caption: None,
            objects: Vec::new(),
        }
    }

    pub fn with_object(mut self, obj: SceneObject) -> Self {
        self.objects.push(obj);
        self
    }

    pub fn bounds(&self) -> BBox {
        BBox::full(self.width, self.height)
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Check every schema invariant, reporting the first violating field.
    pub fn validate(&self) -> Result<(), ToolError> {
        let err = |msg: String| Err(ToolError::Schema(msg));
        if self.width <= 0 || self.height <= 0 {
            return err(format!(
                "width/height: must be positive, got {}x{}",
                self.width, self.height
            ));
        }
        let mut ids = HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.id.is_empty() {
                return err(format!("objects[{i}].id: empty"));
            }
            if !ids.insert(o.id.as_str()) {
                return err(format!("objects[{i}].id: duplicate id `{}`", o.id));
            }
            if o.name.trim().is_empty() {
                return err(format!("objects[{i}].name: empty"));
            }
            if !o.bbox.is_valid() {
                return err(format!(
                    "objects[{i}].box: expected x1<x2 and y1<y2, got {}",
                    o.bbox
                ));
            }
            if !self.bounds().contains_box(&o.bbox) {
                return err(format!(
                    "objects[{i}].box: {} exceeds image bounds {}x{}",
                    o.bbox, self.width, self.height
                ));
            }
            if !(o.depth > 0.0 && o.depth <= 1.0) {
                return err(format!("objects[{i}].depth: {} not in (0,1]", o.depth));
            }
            if let Some(k) = o.attributes.keys().find(|k| k.to_lowercase() != **k) {
                return err(format!("objects[{i}].attributes: key `{k}` must be lowercase"));
            }
        }
        Ok(())
    }
}

/// Parse and validate a scene document.
pub fn load_scene(document: &str) -> Result<SceneGraph, ToolError> {
    let scene: SceneGraph =
        serde_json::from_str(document).map_err(|e| ToolError::Schema(e.to_string()))?;
    scene.validate()?;
    Ok(scene)
}
