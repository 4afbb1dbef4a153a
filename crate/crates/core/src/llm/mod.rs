//! Chat-completion client: prompt assembly, pre-flight token budgeting,
//! retries, rate limiting and transcript record/replay.

mod client;
mod transport;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{Completion, LlmClient, RateLimiter, RetryPolicy, TranscriptEntry};
pub use transport::{
    request_hash, ChatRequest, HttpTransport, ReplayTransport, Transport, TransportFailure,
    ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL,
};

#[derive(Error, Debug)]
pub enum LlmError {
    #[error("prompt needs about {estimated} tokens plus {max_output} for output, over the {limit}-token context")]
    ContextOverflow {
        estimated: usize,
        max_output: usize,
        limit: usize,
    },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("credentials rejected: {0}")]
    Auth(String),

    #[error("no transcript entry for request {0}")]
    ReplayMiss(String),

    #[error("invalid message: {0}")]
    InvalidMessage(String),

    #[error("invalid prompt bundle: {0}")]
    InvalidBundle(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type LlmResult<T> = Result<T, LlmError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> LlmResult<Self> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(LlmError::InvalidMessage("empty content".into()));
        }
        Ok(Self { role, content })
    }

    pub fn system(content: impl Into<String>) -> LlmResult<Self> {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> LlmResult<Self> {
        Self::new(Role::User, content)
    }
}

/// One worked example shown to the model before the real input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    #[serde(default)]
    pub label: String,
    pub input: String,
    pub output: String,
}

pub const MAX_DEMONSTRATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_message: String,
    pub instructions: String,
    pub demonstrations: Vec<Demonstration>,
    pub user_input: String,
}

impl PromptBundle {
    pub fn validate(&self) -> LlmResult<()> {
        if self.demonstrations.len() > MAX_DEMONSTRATIONS {
            return Err(LlmError::InvalidBundle(format!(
                "{} demonstrations, at most {MAX_DEMONSTRATIONS} allowed",
                self.demonstrations.len()
            )));
        }
        if self.system_message.trim().is_empty() {
            return Err(LlmError::InvalidBundle("empty system message".into()));
        }
        if self.user_input.trim().is_empty() {
            return Err(LlmError::InvalidBundle("empty user input".into()));
        }
        Ok(())
    }
}

/// Label that closes every input block; the model continues after it.
pub const OUTPUT_CUE: &str = "Eligibility Criteria Output:";

fn input_block(input: &str) -> String {
    format!("Input:\n{input}\n\n{OUTPUT_CUE}")
}

/// Builds the system and user messages for a bundle.
///
/// The system message holds the role text, the task instructions and each
/// demonstration as an Input/Output block; the user message holds the trial.
pub fn assemble_messages(bundle: &PromptBundle) -> LlmResult<Vec<ChatMessage>> {
    bundle.validate()?;
    let mut system = bundle.system_message.trim_end().to_string();
    if !bundle.instructions.trim().is_empty() {
        system.push_str("\n\n");
        system.push_str(bundle.instructions.trim_end());
    }
    for (i, demo) in bundle.demonstrations.iter().enumerate() {
        system.push_str(&format!("\n\nExample {}:\n", i + 1));
        system.push_str(&input_block(demo.input.trim_end()));
        system.push('\n');
        system.push_str(demo.output.trim_end());
    }
    Ok(vec![
        ChatMessage::system(system)?,
        ChatMessage::user(input_block(&bundle.user_input))?,
    ])
}

/// Upper-bound token estimate used for pre-flight checks: one token per three
/// characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(3)
}

pub fn estimate_message_tokens(messages: &[ChatMessage]) -> usize {
    messages.iter().map(|m| estimate_tokens(&m.content)).sum()
}

pub const DEFAULT_MODEL: &str = "gpt-4";
pub const DEFAULT_CONTEXT_TOKENS: usize = 8192;
pub const DEFAULT_MAX_OUTPUT_TOKENS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub model_name: String,
    pub endpoint: String,
    pub temperature: f64,
    pub max_output_tokens: usize,
    pub context_token_limit: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            model_name: DEFAULT_MODEL.into(),
            endpoint: String::new(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            context_token_limit: DEFAULT_CONTEXT_TOKENS,
        }
    }
}

impl CompletionConfig {
    /// Defaults overridden by the endpoint and model environment variables.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(e) = std::env::var(ENV_ENDPOINT) {
            cfg.endpoint = e;
        }
        if let Ok(m) = std::env::var(ENV_MODEL) {
            cfg.model_name = m;
        }
        cfg
    }

    pub fn validate(&self) -> LlmResult<()> {
        if self.context_token_limit == 0 {
            return Err(LlmError::InvalidConfig("context_token_limit must be positive".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidConfig("temperature must be non-negative".into()));
        }
        Ok(())
    }
}
