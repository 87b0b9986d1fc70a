//! Prompt rendering, completion calls with a record/replay cache, and
//! response parsing.

mod endpoint;
mod parse;
mod prompt;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::BBox;
use crate::tools::{DepthGrid, ImageHandle, SharedBackend, ToolBackend, ToolError};

pub use endpoint::{CompletionEndpoint, HttpEndpoint};
pub use parse::{
    extract_module_source, parse_initialization_response, parse_program_response, ExtractedSource,
    InitializationDecision, Proposal,
};
pub use prompt::{
    api_doc, execution_examples, generation_example, initialization_examples, render_prompt, slots,
    PromptTemplate, Slots, Stage, SLOT_NAMES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("MISSING_SLOT: {0}")]
    MissingSlot(String),
    #[error("CACHE_MISS: {0}")]
    CacheMiss(String),
    #[error("ENDPOINT_ERROR: {0}")]
    Endpoint(String),
    #[error("AUTH_MISSING: {0}")]
    AuthMissing(String),
    #[error("UNPARSEABLE_DECISION: {0}")]
    UnparseableDecision(String),
    #[error("NO_CODE_FOUND: {0}")]
    NoCodeFound(String),
    #[error("IO_ERROR: {0}")]
    Io(String),
    #[error("CONFIG_ERROR: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::MissingSlot(_) => "MISSING_SLOT",
            GatewayError::CacheMiss(_) => "CACHE_MISS",
            GatewayError::Endpoint(_) => "ENDPOINT_ERROR",
            GatewayError::AuthMissing(_) => "AUTH_MISSING",
            GatewayError::UnparseableDecision(_) => "UNPARSEABLE_DECISION",
            GatewayError::NoCodeFound(_) => "NO_CODE_FOUND",
            GatewayError::Io(_) => "IO_ERROR",
            GatewayError::Config(_) => "CONFIG_ERROR",
        }
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_STOP: &str = "\nQuestion:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Option<Vec<String>>,
    /// Distinguishes repeated samples of the same prompt.
    #[serde(default)]
    pub sample_index: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop: Some(vec![DEFAULT_STOP.to_string()]),
            sample_index: 0,
        }
    }

    pub fn sampled(mut self, temperature: f64, sample_index: u32) -> Self {
        self.temperature = temperature;
        self.sample_index = sample_index;
        self
    }

    pub fn without_stop(mut self) -> Self {
        self.stop = None;
        self
    }

    /// Hex SHA-256 of the canonical request document.
    pub fn cache_key(&self) -> String {
        let doc = serde_json::to_string(self).expect("serializable");
        hex::encode(Sha256::digest(doc.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Live,
    Replay,
    Record,
}

impl std::str::FromStr for LlmMode {
    type Err = GatewayError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(LlmMode::Live),
            "replay" => Ok(LlmMode::Replay),
            "record" => Ok(LlmMode::Record),
            other => Err(GatewayError::Config(format!("unknown mode `{other}` (live|replay|record)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub request: CompletionRequest,
    pub response: String,
    pub timestamp: u64,
}

fn read_cache(path: &Path) -> Result<Vec<CacheRecord>, GatewayError> {
    let f = File::open(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(&line)
            .map_err(|e| GatewayError::Io(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Endpoint configuration read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub url: Option<String>,
    pub api_key: Option<String>,
    pub model_id: String,
    pub mode: LlmMode,
}

pub const DEFAULT_MODEL_ID: &str = "gpt-3.5-turbo-instruct";

impl LlmConfig {
    /// Reads `LLM_API_URL`, `LLM_API_KEY`, `LLM_MODEL_ID` and `LLM_MODE`
    /// (default replay).
    pub fn from_env() -> Result<Self, GatewayError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        Ok(Self {
            url: var("LLM_API_URL"),
            api_key: var("LLM_API_KEY"),
            model_id: var("LLM_MODEL_ID").unwrap_or_else(|| DEFAULT_MODEL_ID.to_string()),
            mode: var("LLM_MODE").map(|m| m.parse()).transpose()?.unwrap_or(LlmMode::Replay),
        })
    }

    /// The endpoint this configuration names. `fixture://` URLs select the
    /// offline scripted model and need no credential.
    pub fn endpoint(&self) -> Result<Arc<dyn CompletionEndpoint>, GatewayError> {
        let url = self
            .url
            .as_deref()
            .ok_or_else(|| GatewayError::Config("LLM_API_URL is not set".into()))?;
        if let Some(rest) = url.strip_prefix("fixture://") {
            return Ok(Arc::new(crate::reference::ScriptedLlm::from_spec(rest)?));
        }
        let key = self
            .api_key
            .as_deref()
            .ok_or_else(|| GatewayError::AuthMissing("LLM_API_KEY is not set".into()))?;
        Ok(Arc::new(HttpEndpoint::new(url, key)?))
    }
}

/// Completion calls routed through the cache according to the mode.
pub struct Gateway {
    mode: LlmMode,
    model_id: String,
    endpoint: Option<Arc<dyn CompletionEndpoint>>,
    cache: Mutex<HashMap<String, String>>,
    cache_path: Option<PathBuf>,
    flights: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    endpoint_calls: AtomicUsize,
}

impl Gateway {
    /// Serve only from the cache file at `path`, which must exist.
    pub fn replay(path: &Path, model_id: &str) -> Result<Self, GatewayError> {
        let recs = read_cache(path)?;
        Ok(Self::build(LlmMode::Replay, model_id, None, recs, Some(path.to_path_buf())))
    }

    /// Replay from in-memory records.
    pub fn replay_records(records: Vec<CacheRecord>, model_id: &str) -> Self {
        Self::build(LlmMode::Replay, model_id, None, records, None)
    }

    /// Serve hits from the cache and forward misses, appending them to
    /// `path` when given.
    pub fn record(endpoint: Arc<dyn CompletionEndpoint>, path: Option<&Path>, model_id: &str) -> Result<Self, GatewayError> {
        let recs = match path {
            Some(p) if p.exists() => read_cache(p)?,
            _ => Vec::new(),
        };
        Ok(Self::build(LlmMode::Record, model_id, Some(endpoint), recs, path.map(Path::to_path_buf)))
    }

    pub fn live(endpoint: Arc<dyn CompletionEndpoint>, model_id: &str) -> Self {
        Self::build(LlmMode::Live, model_id, Some(endpoint), Vec::new(), None)
    }

    pub fn from_config(cfg: &LlmConfig, cache: Option<&Path>) -> Result<Self, GatewayError> {
        match cfg.mode {
            LlmMode::Replay => {
                let path = cache.ok_or_else(|| GatewayError::Config("replay mode needs a cache file".into()))?;
                if !path.exists() {
                    return Err(GatewayError::CacheMiss(format!("cache file {} does not exist", path.display())));
                }
                Self::replay(path, &cfg.model_id)
            }
            LlmMode::Record => Self::record(cfg.endpoint()?, cache, &cfg.model_id),
            LlmMode::Live => Ok(Self::live(cfg.endpoint()?, &cfg.model_id)),
        }
    }

    fn build(
        mode: LlmMode,
        model_id: &str,
        endpoint: Option<Arc<dyn CompletionEndpoint>>,
        records: Vec<CacheRecord>,
        cache_path: Option<PathBuf>,
    ) -> Self {
        let cache = records.into_iter().map(|r| (r.key, r.response)).collect();
        Self {
            mode,
            model_id: model_id.to_string(),
            endpoint,
            cache: Mutex::new(cache),
            cache_path,
            flights: Mutex::new(HashMap::new()),
            endpoint_calls: AtomicUsize::new(0),
        }
    }

    pub fn mode(&self) -> LlmMode {
        self.mode
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Requests forwarded to the endpoint so far.
    pub fn endpoint_calls(&self) -> usize {
        self.endpoint_calls.load(Ordering::SeqCst)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    /// Deterministic request for `prompt` under this gateway's model.
    pub fn request(&self, prompt: impl Into<String>) -> CompletionRequest {
        CompletionRequest::new(prompt, self.model_id.clone())
    }

    fn call_endpoint(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let ep = self
            .endpoint
            .as_ref()
            .ok_or_else(|| GatewayError::Config("no endpoint configured".into()))?;
        self.endpoint_calls.fetch_add(1, Ordering::SeqCst);
        ep.complete(req)
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        match self.mode {
            LlmMode::Live => self.call_endpoint(req),
            LlmMode::Replay => {
                let key = req.cache_key();
                self.cache
                    .lock()
                    .unwrap()
                    .get(&key)
                    .cloned()
                    .ok_or_else(|| GatewayError::CacheMiss(format!("no recorded response for request {}", &key[..16])))
            }
            LlmMode::Record => {
                let key = req.cache_key();
                let flight = self
                    .flights
                    .lock()
                    .unwrap()
                    .entry(key.clone())
                    .or_insert_with(|| Arc::new(Mutex::new(())))
                    .clone();
                let _guard = flight.lock().unwrap();
                if let Some(hit) = self.cache.lock().unwrap().get(&key) {
                    return Ok(hit.clone());
                }
                let response = self.call_endpoint(req)?;
                self.persist(&key, req, &response)?;
                self.cache.lock().unwrap().insert(key, response.clone());
                Ok(response)
            }
        }
    }

    fn persist(&self, key: &str, req: &CompletionRequest, response: &str) -> Result<(), GatewayError> {
        let Some(path) = &self.cache_path else {
            return Ok(());
        };
        let rec = CacheRecord {
            key: key.to_string(),
            request: req.clone(),
            response: response.to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let mut line = serde_json::to_string(&rec).expect("serializable");
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(line.as_bytes()).map_err(|e| GatewayError::Io(e.to_string()))
    }
}

/// Backend whose `general_text` goes through the gateway; other operations
/// are delegated.
pub struct GatewayTextBackend {
    inner: SharedBackend,
    gateway: Arc<Gateway>,
}

impl GatewayTextBackend {
    pub fn new(inner: SharedBackend, gateway: Arc<Gateway>) -> Self {
        Self { inner, gateway }
    }
}

impl ToolBackend for GatewayTextBackend {
    fn locate(&self, image: &ImageHandle, name: &str) -> Result<Vec<BBox>, ToolError> {
        self.inner.locate(image, name)
    }
    fn answer_question(&self, image: &ImageHandle, question: &str) -> Result<String, ToolError> {
        self.inner.answer_question(image, question)
    }
    fn score_alignment(&self, image: &ImageHandle, texts: &[String]) -> Result<Vec<f64>, ToolError> {
        self.inner.score_alignment(image, texts)
    }
    fn depth_of(&self, image: &ImageHandle) -> Result<DepthGrid, ToolError> {
        self.inner.depth_of(image)
    }
    fn inpaint_region(&self, image: &ImageHandle, mask: &[BBox], prompt: &str) -> Result<ImageHandle, ToolError> {
        self.inner.inpaint_region(image, mask, prompt)
    }
    fn general_text(&self, prompt: &str) -> Result<String, ToolError> {
        let req = self.gateway.request(prompt).without_stop();
        self.gateway
            .complete(&req)
            .map(|s| s.trim().to_string())
            .map_err(|e| ToolError::GatewayUnavailable(e.to_string()))
    }
}
