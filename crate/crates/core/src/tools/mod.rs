//! The perception/action backend contract and its implementations.

mod http;
mod image;
mod replay;
mod scene;
mod synthetic;
pub mod vocab;

use thiserror::Error;

pub use http::HttpBackend;
pub use image::{median, DepthGrid, EditKind, EditRecord, ImageHandle, Overlay, OverlayKind};
pub use replay::{request_hash, CacheMode, RecordingBackend, ToolRecord};
pub use scene::{load_scene, SceneGraph, SceneObject};
pub use synthetic::{attribute_descriptors, fixture_text, SyntheticBackend};

use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToolError {
    #[error("SCHEMA_ERROR: {0}")]
    Schema(String),
    #[error("OUT_OF_BOUNDS: {0}")]
    OutOfBounds(String),
    #[error("BACKEND_ERROR: {0}")]
    Backend(String),
    #[error("GATEWAY_UNAVAILABLE: {0}")]
    GatewayUnavailable(String),
    #[error("CACHE_MISS: {0}")]
    CacheMiss(String),
}

impl ToolError {
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::Schema(_) => "SCHEMA_ERROR",
            ToolError::OutOfBounds(_) => "OUT_OF_BOUNDS",
            ToolError::Backend(_) => "BACKEND_ERROR",
            ToolError::GatewayUnavailable(_) => "GATEWAY_UNAVAILABLE",
            ToolError::CacheMiss(_) => "CACHE_MISS",
        }
    }
}

/// Operations a module may call. Boxes are viewport-relative.
pub trait ToolBackend: Send + Sync {
    fn locate(&self, image: &ImageHandle, name: &str) -> Result<Vec<BBox>, ToolError>;
    fn answer_question(&self, image: &ImageHandle, question: &str) -> Result<String, ToolError>;
    fn score_alignment(&self, image: &ImageHandle, texts: &[String]) -> Result<Vec<f64>, ToolError>;
    fn depth_of(&self, image: &ImageHandle) -> Result<DepthGrid, ToolError>;
    fn inpaint_region(
        &self,
        image: &ImageHandle,
        mask: &[BBox],
        prompt: &str,
    ) -> Result<ImageHandle, ToolError>;
    fn general_text(&self, prompt: &str) -> Result<String, ToolError>;
}

pub type SharedBackend = std::sync::Arc<dyn ToolBackend>;

/// Names of the backend operations, as exposed to module sources and used as
/// HTTP paths and cache operation tags.
pub const OPERATIONS: &[&str] = &[
    "locate",
    "answer_question",
    "score_alignment",
    "depth_of",
    "inpaint_region",
    "general_text",
];

impl<T: ToolBackend + ?Sized> ToolBackend for std::sync::Arc<T> {
    fn locate(&self, image: &ImageHandle, name: &str) -> Result<Vec<BBox>, ToolError> {
        (**self).locate(image, name)
    }
    fn answer_question(&self, image: &ImageHandle, question: &str) -> Result<String, ToolError> {
        (**self).answer_question(image, question)
    }
    fn score_alignment(&self, image: &ImageHandle, texts: &[String]) -> Result<Vec<f64>, ToolError> {
        (**self).score_alignment(image, texts)
    }
    fn depth_of(&self, image: &ImageHandle) -> Result<DepthGrid, ToolError> {
        (**self).depth_of(image)
    }
    fn inpaint_region(
        &self,
        image: &ImageHandle,
        mask: &[BBox],
        prompt: &str,
    ) -> Result<ImageHandle, ToolError> {
        (**self).inpaint_region(image, mask, prompt)
    }
    fn general_text(&self, prompt: &str) -> Result<String, ToolError> {
        (**self).general_text(prompt)
    }
}
