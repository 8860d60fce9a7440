//! Chat-completion and embedding access behind a retrying gateway.
//!
//! Backends implement [`ChatBackend`], [`EmbedBackend`] and [`Tokenizer`];
//! [`Gateway`] bundles one of each with a [`RetryPolicy`] and a
//! [`ModelProfile`]. The [`mock`] backends are deterministic and need no
//! network; [`http`] speaks the OpenAI-compatible wire protocol.

pub mod http;
pub mod mock;
pub mod scripted;

use std::ops::Range;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("server returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        last: Box<GatewayError>,
    },
}

impl GatewayError {
    /// Transport failures, timeouts, throttling and server errors are retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) | GatewayError::Timeout => true,
            GatewayError::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    /// Chat-template id forwarded to the server, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>, max_tokens: u32) -> Self {
        ChatRequest {
            messages,
            max_tokens,
            temperature: 0.0,
            top_p: 1.0,
            template: None,
        }
    }

    pub fn with_sampling(mut self, temperature: f64, top_p: f64) -> Self {
        self.temperature = temperature;
        self.top_p = top_p;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_tokens < 1 {
            return Err(GatewayError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        match self.messages.first() {
            None => Err(GatewayError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::System => Err(GatewayError::InvalidRequest(
                "first message must be the system prompt".into(),
            )),
            _ => Ok(()),
        }
    }

    /// All message contents joined with newlines; what mock rules match on.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn system_text(&self) -> &str {
        self.messages
            .first()
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    /// Content of the last user message, or "" when there is none.
    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Scales `values` to unit L2 norm. Zero or non-finite vectors are rejected.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, GatewayError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GatewayError::Protocol("embedding has zero or non-finite norm".into()));
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(EmbeddingVector(values))
    }

    /// Wraps values that are already unit-norm (e.g. read back from disk).
    pub fn from_unit(values: Vec<f64>) -> Self {
        EmbeddingVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before retry `i` is `backoff[i]`, repeating the last entry.
    #[serde(with = "millis")]
    pub backoff: Vec<Duration>,
    #[serde(with = "millis_one")]
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff: vec![
                Duration::from_millis(500),
                Duration::from_secs(2),
                Duration::from_secs(8),
            ],
            timeout: Duration::from_secs(120),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            backoff: Vec::new(),
            timeout: Duration::from_secs(30),
        }
    }

    fn delay(&self, retry: usize) -> Duration {
        self.backoff
            .get(retry)
            .or(self.backoff.last())
            .copied()
            .unwrap_or_default()
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or
    /// `max_attempts` calls have been made.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        let max = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if !e.is_retryable() => return Err(e),
                Err(e) if attempt >= max => {
                    return Err(GatewayError::Exhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => {
                    log::debug!("attempt {attempt} failed: {e}; retrying");
                    let d = self.delay(attempt as usize - 1);
                    if !d.is_zero() {
                        thread::sleep(d);
                    }
                }
            }
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(v: &[Duration], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|d| d.as_millis() as u64))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Duration>, D::Error> {
        Ok(Vec::<u64>::deserialize(d)?
            .into_iter()
            .map(Duration::from_millis)
            .collect())
    }
}

mod millis_one {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(v: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(v.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    /// Raw (not necessarily normalized) vectors, one per input, in order.
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

pub trait Tokenizer: Send + Sync {
    /// Byte ranges of the tokens of `text`, in order and non-overlapping.
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        (**self).complete(req)
    }
}

/// Per-model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelProfile {
    pub model: String,
    /// Largest generation budget the model accepts.
    pub max_output_tokens: u32,
    /// Marker after which the model's answer starts, if the backend returns
    /// the full decoded sequence.
    pub answer_start: Option<String>,
    pub chat_template: Option<String>,
}

impl Default for ModelProfile {
    fn default() -> Self {
        ModelProfile {
            model: "meta-llama/Llama-3.1-8B-Instruct".into(),
            max_output_tokens: 4096,
            answer_start: Some("<|start_header_id|>assistant<|end_header_id|>".into()),
            chat_template: None,
        }
    }
}

/// Chat, embedding and tokenizer handles for one model profile.
///
/// Cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct Gateway {
    chat: Arc<dyn ChatBackend>,
    embedder: Arc<dyn EmbedBackend>,
    tokenizer: Arc<dyn Tokenizer>,
    retry: RetryPolicy,
    profile: ModelProfile,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("retry", &self.retry)
            .field("profile", &self.profile)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(
        chat: Arc<dyn ChatBackend>,
        embedder: Arc<dyn EmbedBackend>,
        tokenizer: Arc<dyn Tokenizer>,
        retry: RetryPolicy,
        profile: ModelProfile,
    ) -> Self {
        Gateway {
            chat,
            embedder,
            tokenizer,
            retry,
            profile,
        }
    }

    /// Offline gateway: `chat` plus the hashing embedder and whitespace
    /// tokenizer, no retry delays.
    pub fn mock(chat: impl ChatBackend + 'static) -> Self {
        Gateway::new(
            Arc::new(chat),
            Arc::new(mock::HashEmbedder::default()),
            Arc::new(mock::WhitespaceTokenizer),
            RetryPolicy::immediate(3),
            ModelProfile {
                model: "mock".into(),
                answer_start: None,
                ..ModelProfile::default()
            },
        )
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn EmbedBackend>) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_profile(mut self, profile: ModelProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        &*self.tokenizer
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        req.validate()?;
        let mut req = req.clone();
        if req.template.is_none() {
            req.template = self.profile.chat_template.clone();
        }
        req.max_tokens = req.max_tokens.min(self.profile.max_output_tokens.max(1));
        self.retry.run(|| self.chat.complete(&req))
    }

    /// One unit vector per text, in input order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        let raw = self.retry.run(|| self.embedder.embed_raw(texts))?;
        if raw.len() != texts.len() {
            return Err(GatewayError::Protocol(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                raw.len()
            )));
        }
        let dim = raw[0].len();
        raw.into_iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(GatewayError::Protocol("embedding dimension varies".into()));
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        Ok(self.embed(&[text.to_string()])?.remove(0))
    }

    pub fn token_count(&self, text: &str) -> usize {
        self.tokenizer.count(text)
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{FlakyChat, MockChat};
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn req() -> ChatRequest {
        ChatRequest::new(vec![Message::system("sys"), Message::user("hi")], 16)
    }

    #[test]
    fn mock_is_deterministic() {
        let gw = Gateway::mock(MockChat::new().rule("hi", "canned").unwrap());
        assert_eq!(gw.chat(&req()).unwrap(), "canned");
        assert_eq!(gw.chat(&req()).unwrap(), "canned");
    }

    #[test]
    fn retry_succeeds_on_third_attempt() {
        let flaky = FlakyChat::new(MockChat::new().fallback("ok"), 2, GatewayError::Timeout);
        let calls = flaky.calls();
        let gw = Gateway::mock(flaky).with_retry(RetryPolicy::immediate(3));
        assert_eq!(gw.chat(&req()).unwrap(), "ok");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn single_attempt_surfaces_transport_error() {
        let flaky = FlakyChat::new(
            MockChat::new().fallback("ok"),
            1,
            GatewayError::Transport("reset".into()),
        );
        let calls = flaky.calls();
        let gw = Gateway::mock(flaky).with_retry(RetryPolicy::immediate(1));
        let err = gw.chat(&req()).unwrap_err();
        assert!(matches!(err, GatewayError::Exhausted { attempts: 1, .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn attempts_never_exceed_policy() {
        for max in 1..6 {
            let n = AtomicU32::new(0);
            let r: Result<(), _> = RetryPolicy::immediate(max).run(|| {
                n.fetch_add(1, Ordering::SeqCst);
                Err(GatewayError::Status {
                    code: 503,
                    body: String::new(),
                })
            });
            assert!(r.is_err());
            assert_eq!(n.load(Ordering::SeqCst), max);
        }
    }

    #[test]
    fn non_retryable_errors_fail_fast() {
        let n = AtomicU32::new(0);
        let r: Result<(), _> = RetryPolicy::immediate(5).run(|| {
            n.fetch_add(1, Ordering::SeqCst);
            Err(GatewayError::Protocol("bad json".into()))
        });
        assert_eq!(r.unwrap_err(), GatewayError::Protocol("bad json".into()));
        assert_eq!(n.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn request_validation() {
        let gw = Gateway::mock(MockChat::new().fallback("x"));
        let mut r = req();
        r.max_tokens = 0;
        assert!(gw.chat(&r).is_err());
        let r = ChatRequest::new(vec![Message::user("hi")], 4);
        assert!(gw.chat(&r).is_err());
    }

    #[test]
    fn embeddings_are_unit_norm_and_deterministic() {
        let gw = Gateway::mock(MockChat::new());
        let texts: Vec<String> = ["x", "hello world", "Paris, France", "a"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let a = gw.embed(&texts).unwrap();
        let b = gw.embed(&texts).unwrap();
        assert_eq!(a, b);
        for v in &a {
            let n: f64 = v.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert_eq!(gw.embed(&[]), Err(GatewayError::EmptyInput));
    }

    #[test]
    fn mock_token_counts() {
        let gw = Gateway::mock(MockChat::new());
        assert_eq!(gw.token_count("a b c"), 3);
        assert_eq!(gw.token_count(""), 0);
        assert_eq!(gw.token_count("ab"), 1);
    }
}
