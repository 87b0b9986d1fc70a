//! Record/replay wrapper around any backend. Responses are kept in an
//! append-only JSON-lines file of `{request_hash, operation, response}`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};

use super::http::body;
use super::image::{DepthGrid, ImageHandle};
use super::{ToolBackend, ToolError};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Serve only from the cache; a miss is an error.
    Replay,
    /// Serve hits from the cache, forward misses to the inner backend and
    /// append the response.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRecord {
    pub request_hash: String,
    pub operation: String,
    pub response: Json,
}

/// Hex SHA-256 of the operation name and its canonical request body.
pub fn request_hash(operation: &str, request: &Json) -> String {
    let doc = json!({ "operation": operation, "request": request });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

pub struct RecordingBackend {
    inner: Option<Arc<dyn ToolBackend>>,
    mode: CacheMode,
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, Json>>,
}

impl RecordingBackend {
    /// Replay from `path`; the file must exist.
    pub fn replay(path: &Path) -> Result<Self, ToolError> {
        let entries = read_records(path)?;
        Ok(Self {
            inner: None,
            mode: CacheMode::Replay,
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    /// Record through `inner` into `path`, reusing any records already there.
    pub fn record(inner: Arc<dyn ToolBackend>, path: &Path) -> Result<Self, ToolError> {
        let entries = if path.exists() {
            read_records(path)?
        } else {
            HashMap::new()
        };
        Ok(Self {
            inner: Some(inner),
            mode: CacheMode::Record,
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    /// Record in memory only.
    pub fn in_memory(inner: Arc<dyn ToolBackend>) -> Self {
        Self {
            inner: Some(inner),
            mode: CacheMode::Record,
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn serve<T, F>(&self, op: &str, request: Json, live: F) -> Result<T, ToolError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce(&dyn ToolBackend) -> Result<T, ToolError>,
    {
        let key = request_hash(op, &request);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return serde_json::from_value(hit.clone())
                .map_err(|e| ToolError::Schema(format!("cached {op} response: {e}")));
        }
        let inner = match (self.mode, &self.inner) {
            (CacheMode::Record, Some(inner)) => inner,
            _ => return Err(ToolError::CacheMiss(format!("{op} request {key}"))),
        };
        let value = live(inner.as_ref())?;
        let response = serde_json::to_value(&value).map_err(|e| ToolError::Backend(e.to_string()))?;
        let mut entries = self.entries.lock().unwrap();
        if !entries.contains_key(&key) {
            if let Some(path) = &self.path {
                append_record(
                    path,
                    &ToolRecord {
                        request_hash: key.clone(),
                        operation: op.to_string(),
                        response: response.clone(),
                    },
                )?;
            }
            entries.insert(key, response);
        }
        Ok(value)
    }
}

fn read_records(path: &Path) -> Result<HashMap<String, Json>, ToolError> {
    let file = File::open(path)
        .map_err(|e| ToolError::CacheMiss(format!("cannot open {}: {e}", path.display())))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ToolError::Schema(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ToolRecord = serde_json::from_str(&line)
            .map_err(|e| ToolError::Schema(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.insert(rec.request_hash, rec.response);
    }
    Ok(out)
}

fn append_record(path: &Path, rec: &ToolRecord) -> Result<(), ToolError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ToolError::Backend(e.to_string()))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ToolError::Backend(format!("{}: {e}", path.display())))?;
    let line = serde_json::to_string(rec).map_err(|e| ToolError::Backend(e.to_string()))?;
    writeln!(f, "{line}").map_err(|e| ToolError::Backend(e.to_string()))
}

impl ToolBackend for RecordingBackend {
    fn locate(&self, image: &ImageHandle, name: &str) -> Result<Vec<BBox>, ToolError> {
        self.serve("locate", body::locate(image, name), |b| b.locate(image, name))
    }
    fn answer_question(&self, image: &ImageHandle, question: &str) -> Result<String, ToolError> {
        self.serve("answer_question", body::answer_question(image, question), |b| {
            b.answer_question(image, question)
        })
    }
    fn score_alignment(&self, image: &ImageHandle, texts: &[String]) -> Result<Vec<f64>, ToolError> {
        self.serve("score_alignment", body::score_alignment(image, texts), |b| {
            b.score_alignment(image, texts)
        })
    }
    fn depth_of(&self, image: &ImageHandle) -> Result<DepthGrid, ToolError> {
        self.serve("depth_of", body::depth_of(image), |b| b.depth_of(image))
    }
    fn inpaint_region(
        &self,
        image: &ImageHandle,
        mask: &[BBox],
        prompt: &str,
    ) -> Result<ImageHandle, ToolError> {
        self.serve("inpaint_region", body::inpaint_region(image, mask, prompt), |b| {
            b.inpaint_region(image, mask, prompt)
        })
    }
    fn general_text(&self, prompt: &str) -> Result<String, ToolError> {
        self.serve("general_text", body::general_text(prompt), |b| b.general_text(prompt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{SceneGraph, SceneObject, SyntheticBackend};

    fn image() -> ImageHandle {
        ImageHandle::new(
            SceneGraph::new(100, 100)
                .with_object(SceneObject::new("a", "cat", BBox::new(1, 1, 20, 20), 0.4).with_attr("color", "gray")),
        )
    }

    #[test]
    fn record_then_replay_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tools.jsonl");
        let img = image();
        let rec = RecordingBackend::record(Arc::new(SyntheticBackend), &path).unwrap();
        let a = rec.locate(&img, "cat").unwrap();
        let q = rec.answer_question(&img, "what color is the cat?").unwrap();
        let d = rec.depth_of(&img).unwrap();
        let e = rec.inpaint_region(&img, &[BBox::new(0, 0, 30, 30)], "a dog").unwrap();
        assert_eq!(rec.len(), 4);

        let rep = RecordingBackend::replay(&path).unwrap();
        assert_eq!(rep.locate(&img, "cat").unwrap(), a);
        assert_eq!(rep.answer_question(&img, "what color is the cat?").unwrap(), q);
        assert_eq!(rep.depth_of(&img).unwrap(), d);
        assert_eq!(rep.inpaint_region(&img, &[BBox::new(0, 0, 30, 30)], "a dog").unwrap(), e);
        match rep.locate(&img, "dog") {
            Err(ToolError::CacheMiss(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn record_twice_does_not_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tools.jsonl");
        let img = image();
        for _ in 0..2 {
            let rec = RecordingBackend::record(Arc::new(SyntheticBackend), &path).unwrap();
            rec.locate(&img, "cat").unwrap();
        }
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 1);
    }

    #[test]
    fn hash_depends_on_request() {
        let a = request_hash("locate", &json!({"name": "cat"}));
        assert_eq!(a, request_hash("locate", &json!({"name": "cat"})));
        assert_ne!(a, request_hash("locate", &json!({"name": "dog"})));
        assert_ne!(a, request_hash("general_text", &json!({"name": "cat"})));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn replay_missing_file_is_error() {
        assert!(RecordingBackend::replay(Path::new("/nonexistent/x.jsonl")).is_err());
    }
}
