//! OpenAI-compatible `/chat/completions` and `/embeddings` client.

use std::ops::Range;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    ChatBackend, ChatRequest, EmbedBackend, Gateway, GatewayError, Message, ModelProfile,
    RetryPolicy, Tokenizer,
};

pub const ENV_URL: &str = "KGFORGE_GATEWAY_URL";
pub const ENV_API_KEY: &str = "KGFORGE_API_KEY";
pub const ENV_MODEL: &str = "KGFORGE_MODEL";
pub const ENV_EMBED_MODEL: &str = "KGFORGE_EMBED_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub embedding_model: String,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "http://localhost:8000/v1".into(),
            api_key: None,
            model: ModelProfile::default().model,
            embedding_model: "sentence-transformers/multi-qa-MiniLM-L6-dot-v1".into(),
        }
    }
}

impl HttpConfig {
    /// Applies `KGFORGE_*` environment overrides.
    pub fn with_env(mut self) -> Self {
        if let Ok(v) = std::env::var(ENV_URL) {
            self.base_url = v;
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            self.api_key = Some(v);
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            self.model = v;
        }
        if let Ok(v) = std::env::var(ENV_EMBED_MODEL) {
            self.embedding_model = v;
        }
        self
    }
}

#[derive(Clone)]
pub struct OpenAiClient {
    agent: ureq::Agent,
    config: HttpConfig,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: &'a [Message],
    max_tokens: u32,
    temperature: f64,
    top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    chat_template: Option<&'a str>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl OpenAiClient {
    pub fn new(config: HttpConfig, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        OpenAiClient { agent, config }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, GatewayError> {
        let mut req = self.agent.post(&self.url(path));
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(map_ureq_error)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(GatewayError::Status { code: status, body });
        }
        let text = resp.body_mut().read_to_string().map_err(map_ureq_error)?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Protocol(format!("malformed response: {e}")))
    }
}

fn map_ureq_error(e: ureq::Error) -> GatewayError {
    match e {
        ureq::Error::Timeout(_) => GatewayError::Timeout,
        ureq::Error::StatusCode(code) => GatewayError::Status {
            code,
            body: String::new(),
        },
        ureq::Error::Io(e) => GatewayError::Transport(e.to_string()),
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
            GatewayError::Transport(e.to_string())
        }
        other => GatewayError::Protocol(other.to_string()),
    }
}

impl ChatBackend for OpenAiClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let body = ChatBody {
            model: &self.config.model,
            messages: &req.messages,
            max_tokens: req.max_tokens,
            temperature: req.temperature,
            top_p: req.top_p,
            chat_template: req.template.as_deref(),
        };
        let resp: ChatResponse = self.post("chat/completions", &body)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Protocol("response has no message content".into()))
    }
}

impl EmbedBackend for OpenAiClient {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = EmbedBody {
            model: &self.config.embedding_model,
            input: texts,
        };
        let resp: EmbedResponse = self.post("embeddings", &body)?;
        let mut data = resp.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}

/// Approximate subword tokenizer for remote models: words and punctuation
/// are split into pieces of at most four characters. It overestimates
/// BPE counts for common English words, which keeps chunk budgets safe.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenizer;

impl Tokenizer for ApproxTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        const PIECE: usize = 4;
        let mut spans = Vec::new();
        let mut word: Option<(usize, usize)> = None; // (start, chars)
        let mut iter = text.char_indices().peekable();
        while let Some((i, c)) = iter.next() {
            if c.is_alphanumeric() {
                let (start, n) = word.get_or_insert((i, 0));
                *n += 1;
                let end = iter.peek().map_or(text.len(), |(j, _)| *j);
                if *n == PIECE {
                    spans.push(*start..end);
                    word = None;
                }
                continue;
            }
            if let Some((start, _)) = word.take() {
                spans.push(start..i);
            }
            if !c.is_whitespace() {
                spans.push(i..i + c.len_utf8());
            }
        }
        if let Some((start, _)) = word {
            spans.push(start..text.len());
        }
        spans
    }
}

impl Gateway {
    /// Gateway backed by an OpenAI-compatible server for both chat and
    /// embeddings.
    pub fn http(config: HttpConfig, retry: RetryPolicy, profile: ModelProfile) -> Self {
        let client = Arc::new(OpenAiClient::new(config, retry.timeout));
        Gateway::new(
            client.clone(),
            client,
            Arc::new(ApproxTokenizer),
            retry,
            profile,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Serves each canned `(status, body)` to one connection, in order.
    fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn gateway(url: String, attempts: u32) -> Gateway {
        Gateway::http(
            HttpConfig {
                base_url: url,
                api_key: Some("k".into()),
                model: "m".into(),
                embedding_model: "e".into(),
            },
            RetryPolicy::immediate(attempts),
            ModelProfile::default(),
        )
    }

    fn req() -> ChatRequest {
        ChatRequest::new(vec![Message::system("s"), Message::user("u")], 8)
    }

    #[test]
    fn chat_round_trip() {
        let (url, h) = serve(vec![(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#.into(),
        )]);
        assert_eq!(gateway(url, 1).chat(&req()).unwrap(), "hello");
        let bodies = h.join().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "m");
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["max_tokens"], 8);
    }

    #[test]
    fn server_errors_are_retried() {
        let (url, h) = serve(vec![
            (503, "{}".into()),
            (200, r#"{"choices":[{"message":{"content":"ok"}}]}"#.into()),
        ]);
        assert_eq!(gateway(url, 2).chat(&req()).unwrap(), "ok");
        assert_eq!(h.join().unwrap().len(), 2);
    }

    #[test]
    fn malformed_response_is_protocol_error() {
        let (url, h) = serve(vec![(200, r#"{"nope":1}"#.into())]);
        let err = gateway(url, 3).chat(&req()).unwrap_err();
        assert!(matches!(err, GatewayError::Protocol(_)), "{err:?}");
        h.join().unwrap();
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, h) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
        let err = gateway(url, 3).chat(&req()).unwrap_err();
        assert!(matches!(err, GatewayError::Status { code: 400, .. }));
        h.join().unwrap();
    }

    #[test]
    fn embeddings_are_normalized_and_ordered() {
        let (url, h) = serve(vec![(
            200,
            r#"{"data":[{"index":1,"embedding":[0,2]},{"index":0,"embedding":[3,4]}]}"#.into(),
        )]);
        let v = gateway(url, 1)
            .embed(&["a".to_string(), "b".to_string()])
            .unwrap();
        assert_eq!(v[0].as_slice(), &[0.6, 0.8]);
        assert_eq!(v[1].as_slice(), &[0.0, 1.0]);
        h.join().unwrap();
    }

    #[test]
    fn connection_refused_exhausts_retries() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        drop(listener);
        let err = gateway(url, 2).chat(&req()).unwrap_err();
        assert!(matches!(err, GatewayError::Exhausted { attempts: 2, .. }), "{err:?}");
    }

    #[test]
    fn approx_tokenizer_pieces() {
        let t = ApproxTokenizer;
        let text = "internationalization, ok";
        let toks: Vec<&str> = t.spans(text).iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(toks, ["inte", "rnat", "iona", "liza", "tion", ",", "ok"]);
        assert_eq!(t.count(""), 0);
    }
}
