use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::transport::{request_hash, ChatRequest, ReplayTransport, Transport, TransportFailure};
use super::{estimate_message_tokens, ChatMessage, CompletionConfig, LlmError, LlmResult};

/// One recorded request/response pair, stored as a JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub messages: Vec<ChatMessage>,
    pub response: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, doubling from `base_delay`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32 << attempt.saturating_sub(1).min(16);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Token bucket admitting at most `rate` requests per second with bursts of `capacity`.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(rate_per_sec: f64, capacity: u32) -> Self {
        let capacity = f64::from(capacity.max(1));
        Self {
            rate: rate_per_sec.max(f64::MIN_POSITIVE),
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("rate limiter poisoned");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate).min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Result of a completed request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub request_hash: String,
}

/// Shareable chat client. Cloning shares the transport, limiter and transcript.
#[derive(Clone)]
pub struct LlmClient {
    config: CompletionConfig,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    recorder: Option<Arc<Mutex<(File, PathBuf)>>>,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("config", &self.config)
            .field("retry", &self.retry)
            .field("offline", &self.transport.is_offline())
            .field("recording", &self.recorder.is_some())
            .finish()
    }
}

impl LlmClient {
    pub fn new(config: CompletionConfig, transport: Arc<dyn Transport>) -> LlmResult<Self> {
        config.validate()?;
        Ok(Self {
            config,
            transport,
            retry: RetryPolicy::default(),
            limiter: None,
            recorder: None,
        })
    }

    /// Client answering only from a stored transcript.
    pub fn replay(config: CompletionConfig, transcript: &Path) -> LlmResult<Self> {
        Self::new(config, Arc::new(ReplayTransport::load(transcript)?))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(Arc::new(limiter));
        self
    }

    /// Appends every successful exchange to `path` as JSONL.
    pub fn with_recorder(mut self, path: &Path) -> LlmResult<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LlmError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        self.recorder = Some(Arc::new(Mutex::new((file, path.to_path_buf()))));
        Ok(self)
    }

    pub fn config(&self) -> &CompletionConfig {
        &self.config
    }

    pub fn is_offline(&self) -> bool {
        self.transport.is_offline()
    }

    pub fn request_for(&self, messages: &[ChatMessage]) -> ChatRequest {
        ChatRequest {
            model: self.config.model_name.clone(),
            messages: messages.to_vec(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_output_tokens,
        }
    }

    /// Fails with `ContextOverflow` when the messages plus the output budget
    /// would not fit the context window.
    pub fn preflight(&self, messages: &[ChatMessage]) -> LlmResult<usize> {
        let estimated = estimate_message_tokens(messages);
        if estimated + self.config.max_output_tokens > self.config.context_token_limit {
            return Err(LlmError::ContextOverflow {
                estimated,
                max_output: self.config.max_output_tokens,
                limit: self.config.context_token_limit,
            });
        }
        Ok(estimated)
    }

    /// Sends `messages` and returns the first choice's text.
    ///
    /// Transient failures are retried with exponential backoff up to the
    /// retry policy's attempt limit.
    pub fn complete(&self, messages: &[ChatMessage]) -> LlmResult<Completion> {
        if messages.is_empty() {
            return Err(LlmError::InvalidMessage("no messages".into()));
        }
        if let Some(m) = messages.iter().find(|m| m.content.trim().is_empty()) {
            return Err(LlmError::InvalidMessage(format!("empty {:?} message", m.role)));
        }
        self.preflight(messages)?;
        let request = self.request_for(messages);
        let hash = request_hash(&request);
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            match self.transport.send(&request) {
                Ok(text) => {
                    self.record(&hash, messages, &text)?;
                    return Ok(Completion {
                        text,
                        attempts: attempt,
                        request_hash: hash,
                    });
                }
                Err(TransportFailure::Transient(msg)) if attempt < max_attempts => {
                    log::warn!("attempt {attempt} failed: {msg}; retrying");
                    std::thread::sleep(self.retry.delay(attempt));
                }
                Err(TransportFailure::Transient(message)) | Err(TransportFailure::Fatal(message)) => {
                    return Err(LlmError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(TransportFailure::Auth(msg)) => return Err(LlmError::Auth(msg)),
                Err(TransportFailure::Missing(h)) => return Err(LlmError::ReplayMiss(h)),
            }
        }
    }

    fn record(&self, hash: &str, messages: &[ChatMessage], response: &str) -> LlmResult<()> {
        let Some(rec) = &self.recorder else {
            return Ok(());
        };
        let entry = TranscriptEntry {
            request_hash: hash.to_string(),
            messages: messages.to_vec(),
            response: response.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let mut guard = rec.lock().expect("transcript lock poisoned");
        let (file, path) = &mut *guard;
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|source| LlmError::Io {
                path: path.clone(),
                source,
            })
    }
}
