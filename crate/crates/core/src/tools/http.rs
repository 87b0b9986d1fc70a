//! Client for a remote tool server. Each operation is a `POST {base}/{op}`
//! whose JSON body mirrors the operation arguments; the server answers
//! `{"result": ...}`.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde_json::{json, Value as Json};

use super::image::{DepthGrid, ImageHandle};
use super::{ToolBackend, ToolError};
use crate::geometry::BBox;

pub struct HttpBackend {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, ToolError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ToolError::Backend(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }

    /// Reads `TOOL_API_URL`.
    pub fn from_env() -> Result<Self, ToolError> {
        let url = std::env::var("TOOL_API_URL")
            .map_err(|_| ToolError::Backend("TOOL_API_URL is not set".into()))?;
        Self::new(url, Duration::from_secs(30))
    }

    fn call<T: DeserializeOwned>(&self, op: &str, body: Json) -> Result<T, ToolError> {
        let url = format!("{}/{}", self.base_url, op);
        let resp = self
            .client
            .post(&url)
            .json(&body)
            .send()
            .map_err(|e| ToolError::Backend(format!("{op}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ToolError::Backend(format!("{op}: HTTP {status}")));
        }
        let mut payload: Json = resp
            .json()
            .map_err(|e| ToolError::Backend(format!("{op}: bad response body: {e}")))?;
        let result = payload
            .get_mut("result")
            .map(Json::take)
            .ok_or_else(|| ToolError::Backend(format!("{op}: response lacks `result`")))?;
        serde_json::from_value(result).map_err(|e| ToolError::Backend(format!("{op}: {e}")))
    }
}

/// Request bodies, shared with the record/replay wrapper so both hash the
/// same document.
pub(crate) mod body {
    use super::*;

    pub fn locate(image: &ImageHandle, name: &str) -> Json {
        json!({ "image": image, "name": name })
    }
    pub fn answer_question(image: &ImageHandle, question: &str) -> Json {
        json!({ "image": image, "question": question })
    }
    pub fn score_alignment(image: &ImageHandle, texts: &[String]) -> Json {
        json!({ "image": image, "texts": texts })
    }
    pub fn depth_of(image: &ImageHandle) -> Json {
        json!({ "image": image })
    }
    pub fn inpaint_region(image: &ImageHandle, mask: &[BBox], prompt: &str) -> Json {
        json!({ "image": image, "mask": mask, "prompt": prompt })
    }
    pub fn general_text(prompt: &str) -> Json {
        json!({ "prompt": prompt })
    }
}

impl ToolBackend for HttpBackend {
    fn locate(&self, image: &ImageHandle, name: &str) -> Result<Vec<BBox>, ToolError> {
        self.call("locate", body::locate(image, name))
    }
    fn answer_question(&self, image: &ImageHandle, question: &str) -> Result<String, ToolError> {
        self.call("answer_question", body::answer_question(image, question))
    }
    fn score_alignment(&self, image: &ImageHandle, texts: &[String]) -> Result<Vec<f64>, ToolError> {
        self.call("score_alignment", body::score_alignment(image, texts))
    }
    fn depth_of(&self, image: &ImageHandle) -> Result<DepthGrid, ToolError> {
        self.call("depth_of", body::depth_of(image))
    }
    fn inpaint_region(
        &self,
        image: &ImageHandle,
        mask: &[BBox],
        prompt: &str,
    ) -> Result<ImageHandle, ToolError> {
        self.call("inpaint_region", body::inpaint_region(image, mask, prompt))
    }
    fn general_text(&self, prompt: &str) -> Result<String, ToolError> {
        self.call("general_text", body::general_text(prompt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::SceneGraph;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn serve_once(status: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = [0u8; 8192];
            let _ = s.read(&mut buf);
            let resp = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            s.write_all(resp.as_bytes()).unwrap();
        });
        format!("http://{addr}")
    }

    #[test]
    fn decodes_result_field() {
        let url = serve_once("200 OK", r#"{"result":[[1,2,3,4]]}"#);
        let be = HttpBackend::new(url, Duration::from_secs(5)).unwrap();
        let img = ImageHandle::new(SceneGraph::new(10, 10));
        assert_eq!(be.locate(&img, "cat").unwrap(), vec![BBox::new(1, 2, 3, 4)]);
    }

    #[test]
    fn non_2xx_is_backend_error() {
        let url = serve_once("500 Internal Server Error", "{}");
        let be = HttpBackend::new(url, Duration::from_secs(5)).unwrap();
        match be.general_text("hi") {
            Err(ToolError::Backend(m)) => assert!(m.contains("500"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unreachable_is_backend_error() {
        let be = HttpBackend::new("http://127.0.0.1:9", Duration::from_millis(500)).unwrap();
        assert!(matches!(be.general_text("hi"), Err(ToolError::Backend(_))));
    }
}
