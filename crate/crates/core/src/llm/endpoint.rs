//! Completion endpoints.

use std::time::Duration;

use serde_json::{json, Value as Json};

use super::{CompletionRequest, GatewayError};

pub trait CompletionEndpoint: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
}

/// OpenAI-style text completions: `POST {base}/completions` with a bearer
/// token, answer read from `choices[0].text`.
pub struct HttpEndpoint {
    url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpEndpoint {
    pub fn new(base_url: &str, api_key: &str) -> Result<Self, GatewayError> {
        if api_key.trim().is_empty() {
            return Err(GatewayError::AuthMissing("empty API key".into()));
        }
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/completions") {
            base.to_string()
        } else {
            format!("{base}/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::Endpoint(e.to_string()))?;
        Ok(Self {
            url,
            api_key: api_key.to_string(),
            client,
        })
    }
}

impl CompletionEndpoint for HttpEndpoint {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let mut body = json!({
            "model": req.model_id,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(stop) = &req.stop {
            body["stop"] = json!(stop);
        }
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| GatewayError::Endpoint(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(GatewayError::AuthMissing(format!("endpoint rejected credentials: HTTP {status}")));
        }
        if !status.is_success() {
            return Err(GatewayError::Endpoint(format!("HTTP {status}")));
        }
        let payload: Json = resp.json().map_err(|e| GatewayError::Endpoint(format!("bad response body: {e}")))?;
        payload
            .pointer("/choices/0/text")
            .and_then(Json::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Endpoint("response lacks choices[0].text".into()))
    }
}
