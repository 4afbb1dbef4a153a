use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatMessage, LlmError, LlmResult, TranscriptEntry};

pub const ENV_ENDPOINT: &str = "TRIALMATCH_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "TRIALMATCH_LLM_API_KEY";
pub const ENV_MODEL: &str = "TRIALMATCH_LLM_MODEL";

/// Body of a chat-completions request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: usize,
}

/// Hex SHA-256 of the request's JSON encoding; keys transcripts.
pub fn request_hash(request: &ChatRequest) -> String {
    let body = serde_json::to_vec(request).expect("request serializes");
    hex::encode(Sha256::digest(&body))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx.
    Transient(String),
    /// Credentials rejected (401/403).
    Auth(String),
    /// Replay transcript has no entry for this request.
    Missing(String),
    /// Anything else; not retried.
    Fatal(String),
}

/// Sends one request and returns the assistant text.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure>;

    /// True when this transport never touches the network.
    fn is_offline(&self) -> bool {
        false
    }
}

/// OpenAI-style chat-completions over HTTPS.
pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> LlmResult<Self> {
        let endpoint = endpoint.into();
        if endpoint.trim().is_empty() {
            return Err(LlmError::InvalidConfig(format!(
                "no endpoint configured; set {ENV_ENDPOINT}"
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            endpoint,
            api_key,
            client,
        })
    }

    /// Endpoint and key from the environment.
    pub fn from_env() -> LlmResult<Self> {
        let endpoint = std::env::var(ENV_ENDPOINT).unwrap_or_default();
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Self::new(endpoint, key, Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure> {
        let mut req = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key).header("api-key", key);
        }
        let resp = req
            .send()
            .map_err(|e| TransportFailure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(TransportFailure::Auth(format!("HTTP {status}")));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportFailure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(TransportFailure::Fatal(format!("HTTP {status}: {body}")));
        }
        let body: serde_json::Value = resp
            .json()
            .map_err(|e| TransportFailure::Transient(format!("unreadable response: {e}")))?;
        body.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| TransportFailure::Fatal("response has no choices[0].message.content".into()))
    }
}

/// Serves stored responses by request hash. Never opens a connection.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    responses: HashMap<String, String>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        Self {
            responses: entries
                .into_iter()
                .map(|e| (e.request_hash, e.response))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> LlmResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            entries.push(serde_json::from_str::<TranscriptEntry>(line)?);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure> {
        let hash = request_hash(request);
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(TransportFailure::Missing(hash))
    }

    fn is_offline(&self) -> bool {
        true
    }
}
