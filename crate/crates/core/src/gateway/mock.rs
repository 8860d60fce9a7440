//! Deterministic offline backends.

use std::ops::Range;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::scripted::Builtin;
use super::{ChatBackend, ChatRequest, EmbedBackend, GatewayError, Tokenizer};

pub type ResponseFn = Arc<dyn Fn(&ChatRequest) -> String + Send + Sync>;

#[derive(Clone)]
pub enum Responder {
    Fixed(String),
    Builtin(Builtin),
    Func(ResponseFn),
}

impl Responder {
    fn respond(&self, req: &ChatRequest) -> String {
        match self {
            Responder::Fixed(s) => s.clone(),
            Responder::Builtin(b) => b.respond(req),
            Responder::Func(f) => f(req),
        }
    }
}

#[derive(Clone)]
struct Rule {
    pattern: Regex,
    responder: Responder,
}

/// Rule-table chat backend: the first rule whose regex matches the request
/// transcript answers it.
#[derive(Clone, Default)]
pub struct MockChat {
    rules: Vec<Rule>,
    fallback: Option<Responder>,
    log: Arc<Mutex<Vec<ChatRequest>>>,
}

#[derive(Deserialize)]
struct RuleFile {
    rules: Vec<RuleSpec>,
    #[serde(default)]
    fallback: Option<String>,
}

#[derive(Deserialize)]
struct RuleSpec {
    pattern: String,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    builtin: Option<String>,
}

const STANDARD_RULES: &str = include_str!("../../resources/mock_rules.json");

impl MockChat {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rule table covering every prompt this crate issues.
    pub fn standard() -> Self {
        Self::from_json(STANDARD_RULES).expect("bundled mock rules are valid")
    }

    /// Loads a rule table: `{"rules": [{"pattern", "response" | "builtin"}], "fallback"}`.
    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let file: RuleFile = serde_json::from_str(text)
            .map_err(|e| GatewayError::InvalidRequest(format!("mock rules: {e}")))?;
        let mut mock = MockChat::new();
        for spec in file.rules {
            let responder = match (spec.response, spec.builtin) {
                (Some(r), None) => Responder::Fixed(r),
                (None, Some(b)) => Responder::Builtin(b.parse().map_err(|_| {
                    GatewayError::InvalidRequest(format!("unknown builtin responder {b:?}"))
                })?),
                _ => {
                    return Err(GatewayError::InvalidRequest(format!(
                        "rule {:?} needs exactly one of response/builtin",
                        spec.pattern
                    )))
                }
            };
            mock = mock.with_rule(&spec.pattern, responder)?;
        }
        if let Some(f) = file.fallback {
            mock = mock.fallback(f);
        }
        Ok(mock)
    }

    pub fn with_rule(mut self, pattern: &str, responder: Responder) -> Result<Self, GatewayError> {
        let pattern = Regex::new(pattern)
            .map_err(|e| GatewayError::InvalidRequest(format!("bad mock pattern: {e}")))?;
        self.rules.push(Rule { pattern, responder });
        Ok(self)
    }

    pub fn rule(self, pattern: &str, response: &str) -> Result<Self, GatewayError> {
        self.with_rule(pattern, Responder::Fixed(response.to_string()))
    }

    /// Adds a rule answered by a closure.
    pub fn rule_fn(
        self,
        pattern: &str,
        f: impl Fn(&ChatRequest) -> String + Send + Sync + 'static,
    ) -> Result<Self, GatewayError> {
        self.with_rule(pattern, Responder::Func(Arc::new(f)))
    }

    /// Puts a rule ahead of all existing ones.
    pub fn override_fn(
        mut self,
        pattern: &str,
        f: impl Fn(&ChatRequest) -> String + Send + Sync + 'static,
    ) -> Result<Self, GatewayError> {
        let pattern = Regex::new(pattern)
            .map_err(|e| GatewayError::InvalidRequest(format!("bad mock pattern: {e}")))?;
        self.rules.insert(
            0,
            Rule {
                pattern,
                responder: Responder::Func(Arc::new(f)),
            },
        );
        Ok(self)
    }

    pub fn fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(Responder::Fixed(response.into()));
        self
    }

    /// Handle onto the requests this backend (and its clones) has served.
    pub fn log(&self) -> Arc<Mutex<Vec<ChatRequest>>> {
        Arc::clone(&self.log)
    }
}

impl ChatBackend for MockChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        self.log.lock().unwrap().push(req.clone());
        let transcript = req.transcript();
        if let Some(rule) = self.rules.iter().find(|r| r.pattern.is_match(&transcript)) {
            return Ok(rule.responder.respond(req));
        }
        match &self.fallback {
            Some(r) => Ok(r.respond(req)),
            None => Err(GatewayError::Protocol("no mock rule matches the request".into())),
        }
    }
}

/// Fails the first `failures` calls with `error`, then delegates.
pub struct FlakyChat<C> {
    inner: C,
    failures: u32,
    error: GatewayError,
    calls: Arc<AtomicU32>,
}

impl<C> FlakyChat<C> {
    pub fn new(inner: C, failures: u32, error: GatewayError) -> Self {
        FlakyChat {
            inner,
            failures,
            error,
            calls: Arc::new(AtomicU32::new(0)),
        }
    }

    pub fn calls(&self) -> Arc<AtomicU32> {
        Arc::clone(&self.calls)
    }
}

impl<C: ChatBackend> ChatBackend for FlakyChat<C> {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.failures {
            return Err(self.error.clone());
        }
        self.inner.complete(req)
    }
}

/// Bag-of-words hashing embedder: each lowercase alphanumeric token maps to
/// a seeded pseudo-random vector and a text embeds as the sum of its token
/// vectors. Texts sharing words are therefore similar.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 256, seed: 0 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashEmbedder { dim, seed }
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(digest.as_slice());
        let mut rng = ChaCha8Rng::from_seed(seed);
        for v in out.iter_mut() {
            *v += rng.random_range(-1.0..1.0);
        }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        let mut any = false;
        for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            self.token_vector(tok, &mut out);
            any = true;
        }
        if !any {
            self.token_vector(&format!("\u{0}{text}"), &mut out);
        }
        out
    }
}

impl EmbedBackend for HashEmbedder {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Fixed lookup table, for hand-checked metric tests.
#[derive(Debug, Clone, Default)]
pub struct TableEmbedder {
    pub table: std::collections::HashMap<String, Vec<f64>>,
}

impl EmbedBackend for TableEmbedder {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .ok_or_else(|| GatewayError::Protocol(format!("no embedding for {t:?}")))
            })
            .collect()
    }
}

/// Tokens are maximal runs of non-whitespace characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    spans.push(s..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push(s..text.len());
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    #[test]
    fn rules_match_in_order() {
        let mock = MockChat::new()
            .rule("alpha", "first")
            .unwrap()
            .rule("a", "second")
            .unwrap();
        let r = ChatRequest::new(vec![Message::system("alpha")], 1);
        assert_eq!(mock.complete(&r).unwrap(), "first");
        let r = ChatRequest::new(vec![Message::system("beta")], 1);
        assert_eq!(mock.complete(&r).unwrap(), "second");
        let r = ChatRequest::new(vec![Message::system("zzz")], 1);
        assert!(mock.complete(&r).is_err());
        assert_eq!(mock.log().lock().unwrap().len(), 3);
    }

    #[test]
    fn rule_file_parses() {
        let m = MockChat::from_json(
            r#"{"rules":[{"pattern":"x","response":"y"},{"pattern":"q","builtin":"always-yes"}],"fallback":"f"}"#,
        )
        .unwrap();
        let r = ChatRequest::new(vec![Message::system("q")], 1);
        assert_eq!(m.complete(&r).unwrap(), "Yes");
        assert!(MockChat::from_json(r#"{"rules":[{"pattern":"x"}]}"#).is_err());
        assert!(MockChat::from_json(r#"{"rules":[{"pattern":"x","builtin":"nope"}]}"#).is_err());
        MockChat::standard();
    }

    #[test]
    fn whitespace_spans() {
        let t = WhitespaceTokenizer;
        let text = " ab  c\nd ";
        let spans = t.spans(text);
        let toks: Vec<&str> = spans.iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(toks, ["ab", "c", "d"]);
        assert_eq!(t.count(text), 3);
    }

    #[test]
    fn shared_words_raise_similarity() {
        let e = HashEmbedder::default();
        let norm = |v: Vec<f64>| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let a = norm(e.vector("zorvex company"));
        let b = norm(e.vector("Zorvex was founded"));
        let c = norm(e.vector("lighthouse keeper"));
        assert!(dot(&a, &b) > dot(&a, &c));
    }
}
