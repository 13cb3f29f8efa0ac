//! Chat-completion clients.
//!
//! The wire format is the OpenAI-compatible `POST {base}/chat/completions`.
//! Repetition penalty has no field in the strict OpenAI schema, so two
//! dialects exist:
//!
//! * `extended` (vLLM, TGI, llama.cpp server): sent as `repetition_penalty`.
//! * `openai`: mapped to `frequency_penalty = repetition_penalty - 1`.

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{mpsc, Semaphore};

use super::GenerationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    #[default]
    Extended,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub repetition_penalty: f64,
    pub max_tokens: u32,
    pub stream: bool,
}

impl ChatRequest {
    /// JSON body as sent to the endpoint.
    pub fn to_wire(&self, dialect: Dialect) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        });
        match dialect {
            Dialect::Extended => body["repetition_penalty"] = json!(self.repetition_penalty),
            Dialect::Openai => {
                let fp = ((self.repetition_penalty - 1.0) * 1e6).round() / 1e6;
                body["frequency_penalty"] = json!(fp)
            }
        }
        if self.stream {
            body["stream"] = json!(true);
        }
        body
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub model: String,
}

#[async_trait]
pub trait LlmClient: Send + Sync {
    fn model_name(&self) -> &str;

    /// Single attempt; retries are the caller's business.
    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GenerationError>;

    /// Streams text deltas into `sink` and returns the full completion.
    /// The default sends the whole completion as one delta.
    async fn complete_streaming(
        &self,
        request: &ChatRequest,
        sink: mpsc::Sender<String>,
    ) -> Result<Completion, GenerationError> {
        let c = self.complete(request).await?;
        let _ = sink.send(c.text.clone()).await;
        Ok(c)
    }
}

/// Returns the prompt it was given: the user message, or for an instruction
/// prompt the full rendered text.
#[derive(Debug, Clone, Default)]
pub struct EchoClient;

#[async_trait]
impl LlmClient for EchoClient {
    fn model_name(&self) -> &str {
        "echo"
    }

    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GenerationError> {
        let text: Vec<&str> = request.messages.iter().map(|m| m.content.as_str()).collect();
        Ok(Completion { text: text.join("\n\n"), usage: Usage::default(), model: "echo".into() })
    }
}

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct CannedClient {
    pub text: String,
}

impl CannedClient {
    pub fn new(text: impl Into<String>) -> Self {
        CannedClient { text: text.into() }
    }
}

#[async_trait]
impl LlmClient for CannedClient {
    fn model_name(&self) -> &str {
        "canned"
    }

    async fn complete(&self, _request: &ChatRequest) -> Result<Completion, GenerationError> {
        Ok(Completion { text: self.text.clone(), usage: Usage::default(), model: "canned".into() })
    }
}

/// Records the wire body of every request, then delegates.
pub struct CapturingClient<C> {
    pub inner: C,
    pub dialect: Dialect,
    pub captured: Arc<Mutex<Vec<Value>>>,
}

impl<C> CapturingClient<C> {
    pub fn new(inner: C) -> Self {
        CapturingClient { inner, dialect: Dialect::Extended, captured: Arc::default() }
    }
}

#[async_trait]
impl<C: LlmClient> LlmClient for CapturingClient<C> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GenerationError> {
        self.captured.lock().expect("capture lock").push(request.to_wire(self.dialect));
        self.inner.complete(request).await
    }
}

/// HTTP client for an OpenAI-compatible endpoint.
pub struct HttpLlmClient {
    base_url: String,
    model: String,
    api_key: Option<String>,
    dialect: Dialect,
    http: reqwest::Client,
    in_flight: Arc<Semaphore>,
}

impl fmt::Debug for HttpLlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpLlmClient")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("dialect", &self.dialect)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    #[serde(default)]
    message: Option<ChatMessage>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct WireChunk {
    #[serde(default)]
    choices: Vec<WireDeltaChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireDeltaChoice {
    #[serde(default)]
    delta: Option<WireDelta>,
}

#[derive(Deserialize)]
struct WireDelta {
    #[serde(default)]
    content: Option<String>,
}

impl HttpLlmClient {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        dialect: Dialect,
        max_in_flight: usize,
    ) -> Result<Self, GenerationError> {
        let http = reqwest::Client::builder()
            .build()
            .map_err(|e| GenerationError::Remote { status: None, message: e.to_string(), attempts: 0 })?;
        let dialect_name = match dialect {
            Dialect::Extended => "repetition_penalty",
            Dialect::Openai => "frequency_penalty = repetition_penalty - 1",
        };
        tracing::info!(mapping = dialect_name, "repetition penalty mapping");
        Ok(HttpLlmClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            dialect,
            http,
            in_flight: Arc::new(Semaphore::new(max_in_flight.max(1))),
        })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }

    async fn send(&self, request: &ChatRequest) -> Result<reqwest::Response, GenerationError> {
        let mut req = self.http.post(self.url()).json(&request.to_wire(self.dialect));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                GenerationError::Timeout { after: Duration::ZERO }
            } else {
                // without_url keeps query-string secrets out of messages
                GenerationError::Remote { status: None, message: e.without_url().to_string(), attempts: 1 }
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            let message: String = body.chars().take(512).collect();
            return Err(GenerationError::Remote { status: Some(status.as_u16()), message, attempts: 1 });
        }
        Ok(resp)
    }
}

fn decode_error(e: impl fmt::Display) -> GenerationError {
    GenerationError::Remote { status: None, message: format!("malformed response: {e}"), attempts: 1 }
}

#[async_trait]
impl LlmClient for HttpLlmClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    async fn complete(&self, request: &ChatRequest) -> Result<Completion, GenerationError> {
        let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
        let mut request = request.clone();
        request.stream = false;
        let resp = self.send(&request).await?;
        let body: WireResponse = resp.json().await.map_err(decode_error)?;
        let choice = body.choices.into_iter().next().ok_or_else(|| decode_error("no choices"))?;
        let text = choice.message.map(|m| m.content).or(choice.text).unwrap_or_default();
        Ok(Completion {
            text,
            usage: body.usage.unwrap_or_default(),
            model: body.model.unwrap_or_else(|| self.model.clone()),
        })
    }

    async fn complete_streaming(
        &self,
        request: &ChatRequest,
        sink: mpsc::Sender<String>,
    ) -> Result<Completion, GenerationError> {
        let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
        let mut request = request.clone();
        request.stream = true;
        let resp = self.send(&request).await?;
        let mut stream = resp.bytes_stream();
        let mut buf = String::new();
        let mut text = String::new();
        let mut usage = Usage::default();
        'outer: while let Some(chunk) = stream.next().await {
            let chunk = chunk.map_err(decode_error)?;
            buf.push_str(&String::from_utf8_lossy(&chunk));
            while let Some(pos) = buf.find('\n') {
                let line: String = buf.drain(..=pos).collect();
                let Some(data) = line.trim().strip_prefix("data:") else { continue };
                let data = data.trim();
                if data == "[DONE]" {
                    break 'outer;
                }
                let parsed: WireChunk = serde_json::from_str(data).map_err(decode_error)?;
                if let Some(u) = parsed.usage {
                    usage = u;
                }
                for c in parsed.choices {
                    if let Some(delta) = c.delta.and_then(|d| d.content) {
                        text.push_str(&delta);
                        let _ = sink.send(delta).await;
                    }
                }
            }
        }
        Ok(Completion { text, usage, model: self.model.clone() })
    }
}
