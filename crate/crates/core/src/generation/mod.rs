//! Prompt assembly, the chat-completion call and reply post-processing.

pub mod client;
pub mod postprocess;
pub mod prompt;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

pub use client::{
    CannedClient, CapturingClient, ChatMessage, ChatRequest, Completion, Dialect, EchoClient, HttpLlmClient, LlmClient,
    Usage,
};
pub use postprocess::{postprocess, strip_prompt, Answer, Citation};
pub use prompt::{
    assemble_prompt, ContextBlock, PersonaConfig, PromptBundle, PromptError, PromptFormat, ABSTAIN_SENTENCE,
    DEFAULT_SYSTEM_TEXT,
};

use crate::retrieval::{RetrievalError, RetrievalResult, Retriever};

pub const MAX_NEW_TOKENS_CAP: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub repetition_penalty: f64,
    pub max_new_tokens: u32,
    pub request_timeout_secs: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.7,
            top_p: 0.9,
            repetition_penalty: 1.1,
            max_new_tokens: 512,
            request_timeout_secs: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("generation.{field} = {value} is out of range ({bound})")]
pub struct ParamRangeError {
    pub field: &'static str,
    pub value: f64,
    pub bound: &'static str,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), ParamRangeError> {
        let check = |field, value: f64, ok: bool, bound| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ParamRangeError { field, value, bound })
            }
        };
        check("temperature", self.temperature, (0.0..=2.0).contains(&self.temperature), "0 <= x <= 2")?;
        check("top_p", self.top_p, self.top_p > 0.0 && self.top_p <= 1.0, "0 < x <= 1")?;
        check("repetition_penalty", self.repetition_penalty, self.repetition_penalty >= 1.0, "x >= 1")?;
        let m = self.max_new_tokens;
        check("max_new_tokens", m as f64, (1..=MAX_NEW_TOKENS_CAP).contains(&m), "1 <= x <= 1024")?;
        check("request_timeout_secs", self.request_timeout_secs, self.request_timeout_secs > 0.0, "x > 0")?;
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GenerationError {
    #[error("LLM request timed out after {after:?}")]
    Timeout { after: Duration },
    #[error("LLM endpoint error{}: {message} (attempts: {attempts})", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Remote { status: Option<u16>, message: String, attempts: u32 },
    #[error("the model returned an empty completion")]
    EmptyCompletion,
}

impl GenerationError {
    /// Transport failures, timeouts, 429 and 5xx are worth another attempt.
    pub fn is_transient(&self) -> bool {
        match self {
            GenerationError::Timeout { .. } => true,
            GenerationError::Remote { status: None, .. } => true,
            GenerationError::Remote { status: Some(s), .. } => *s == 429 || *s >= 500,
            GenerationError::EmptyCompletion => false,
        }
    }

    fn with_attempts(self, n: u32) -> Self {
        match self {
            GenerationError::Remote { status, message, .. } => GenerationError::Remote { status, message, attempts: n },
            e => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, backoff: Duration::from_millis(250) }
    }
}

/// Chat request for a bundle: one system and one user message for `rag_chat`,
/// the bare rendered prompt as a single user message for `sft_instruction`.
pub fn build_request(bundle: &PromptBundle, params: &GenerationParams, model: &str) -> ChatRequest {
    let messages = match bundle.format {
        PromptFormat::RagChat => vec![ChatMessage::system(&bundle.system_text), ChatMessage::user(bundle.user_message())],
        PromptFormat::SftInstruction => vec![ChatMessage::user(&bundle.rendered)],
    };
    ChatRequest {
        model: model.to_string(),
        messages,
        temperature: params.temperature,
        top_p: params.top_p,
        repetition_penalty: params.repetition_penalty,
        max_tokens: params.max_new_tokens,
        stream: false,
    }
}

async fn attempt(
    client: &dyn LlmClient,
    request: &ChatRequest,
    timeout: Duration,
    sink: Option<&mpsc::Sender<String>>,
) -> Result<Completion, GenerationError> {
    let fut = async {
        match sink {
            Some(s) => client.complete_streaming(request, s.clone()).await,
            None => client.complete(request).await,
        }
    };
    match tokio::time::timeout(timeout, fut).await {
        Ok(r) => r,
        Err(_) => Err(GenerationError::Timeout { after: timeout }),
    }
}

async fn run_with_retries(
    client: &dyn LlmClient,
    request: &ChatRequest,
    timeout: Duration,
    retry: RetryPolicy,
    sink: Option<&mpsc::Sender<String>>,
) -> Result<Completion, GenerationError> {
    let mut tries = 0u32;
    loop {
        tries += 1;
        match attempt(client, request, timeout, sink).await {
            Ok(c) if c.text.trim().is_empty() => return Err(GenerationError::EmptyCompletion),
            Ok(c) => return Ok(c),
            Err(e) if e.is_transient() && tries <= retry.max_retries => {
                tracing::warn!(attempt = tries, error = %e, "LLM call failed, retrying");
                if !retry.backoff.is_zero() {
                    tokio::time::sleep(retry.backoff * 2u32.pow(tries - 1)).await;
                }
            }
            Err(e) => return Err(e.with_attempts(tries)),
        }
    }
}

/// One completion for `bundle`, retried on transient failures.
pub async fn generate(
    bundle: &PromptBundle,
    params: &GenerationParams,
    client: &dyn LlmClient,
    retry: RetryPolicy,
) -> Result<Completion, GenerationError> {
    let request = build_request(bundle, params, client.model_name());
    run_with_retries(client, &request, params.timeout(), retry, None).await
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Retrieval(e) => match e.stage() {
                crate::retrieval::Stage::Query => "query",
                crate::retrieval::Stage::Embed => "embed",
                crate::retrieval::Stage::Dense => "dense",
                crate::retrieval::Stage::Sparse => "sparse",
                crate::retrieval::Stage::Rerank => "rerank",
            },
            PipelineError::Prompt(_) => "prompt",
            PipelineError::Generation(GenerationError::EmptyCompletion) => "postprocess",
            PipelineError::Generation(_) => "generate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryAnswer {
    pub answer: Answer,
    pub retrieval: RetrievalResult,
    pub bundle: PromptBundle,
    pub generate_ms: f64,
}

#[derive(Clone)]
pub struct Generator {
    pub client: Arc<dyn LlmClient>,
    pub params: GenerationParams,
    pub persona: PersonaConfig,
    pub format: PromptFormat,
    pub retry: RetryPolicy,
}

impl Generator {
    pub fn new(client: Arc<dyn LlmClient>, params: GenerationParams, persona: PersonaConfig) -> Self {
        Generator { client, params, persona, format: PromptFormat::RagChat, retry: RetryPolicy::default() }
    }

    /// Assemble, generate and post-process over an existing retrieval result.
    /// Deltas go to `sink` when given.
    pub async fn answer_with(
        &self,
        query: &str,
        retrieval: RetrievalResult,
        params: &GenerationParams,
        sink: Option<&mpsc::Sender<String>>,
    ) -> Result<QueryAnswer, PipelineError> {
        let bundle = assemble_prompt(query, &retrieval.contexts, self.format, &self.persona)?;
        let request = build_request(&bundle, params, self.client.model_name());
        let t = Instant::now();
        let completion = run_with_retries(self.client.as_ref(), &request, params.timeout(), self.retry, sink).await?;
        let generate_ms = t.elapsed().as_secs_f64() * 1000.0;
        let answer = postprocess(&completion, &bundle, &retrieval.contexts, &self.persona.cannot_answer_clause)?;
        Ok(QueryAnswer { answer, retrieval, bundle, generate_ms })
    }
}

/// retrieve -> assemble -> generate -> postprocess.
pub async fn answer_query(query: &str, retriever: &Retriever, generator: &Generator) -> Result<QueryAnswer, PipelineError> {
    let retrieval = retriever.retrieve(query)?;
    generator.answer_with(query, retrieval, &generator.params, None).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use async_trait::async_trait;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
        status: Option<u16>,
    }

    #[async_trait]
    impl LlmClient for Flaky {
        fn model_name(&self) -> &str {
            "flaky"
        }
        async fn complete(&self, _r: &ChatRequest) -> Result<Completion, GenerationError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(GenerationError::Remote { status: self.status, message: "down".into(), attempts: 1 });
            }
            Ok(Completion { text: "ok".into(), usage: Usage::default(), model: "flaky".into() })
        }
    }

    struct Slow;

    #[async_trait]
    impl LlmClient for Slow {
        fn model_name(&self) -> &str {
            "slow"
        }
        async fn complete(&self, _r: &ChatRequest) -> Result<Completion, GenerationError> {
            tokio::time::sleep(Duration::from_secs(5)).await;
            unreachable!()
        }
    }

    fn no_wait() -> RetryPolicy {
        RetryPolicy { max_retries: 2, backoff: Duration::ZERO }
    }

    fn bundle() -> PromptBundle {
        assemble_prompt("hi", &[], PromptFormat::RagChat, &PersonaConfig::default()).unwrap()
    }

    #[test]
    fn default_params_validate() {
        let p = GenerationParams::default();
        assert_eq!((p.temperature, p.top_p, p.repetition_penalty, p.max_new_tokens), (0.7, 0.9, 1.1, 512));
        assert!(p.validate().is_ok());
        let e = GenerationParams { temperature: -1.0, ..p.clone() }.validate().unwrap_err();
        assert!(e.to_string().contains("generation.temperature"));
        let e = GenerationParams { max_new_tokens: 2048, ..p }.validate().unwrap_err();
        assert_eq!(e.field, "max_new_tokens");
    }

    #[tokio::test]
    async fn echo_returns_rendered_prompt() {
        let b = bundle();
        let c = generate(&b, &GenerationParams::default(), &EchoClient, no_wait()).await.unwrap();
        assert_eq!(c.text, b.rendered);
        let sft = assemble_prompt("hi", &[], PromptFormat::SftInstruction, &PersonaConfig::default()).unwrap();
        let c = generate(&sft, &GenerationParams::default(), &EchoClient, no_wait()).await.unwrap();
        assert_eq!(c.text, "Instruction: hi\nResponse:");
    }

    #[tokio::test]
    async fn retries_transient_then_succeeds() {
        let f = Flaky { calls: AtomicU32::new(0), fail_first: 2, status: Some(503) };
        let c = generate(&bundle(), &GenerationParams::default(), &f, no_wait()).await.unwrap();
        assert_eq!(c.text, "ok");
        assert_eq!(f.calls.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn gives_up_after_bounded_retries() {
        let f = Flaky { calls: AtomicU32::new(0), fail_first: 10, status: None };
        let e = generate(&bundle(), &GenerationParams::default(), &f, no_wait()).await.unwrap_err();
        assert!(matches!(e, GenerationError::Remote { attempts: 3, .. }));
        assert_eq!(f.calls.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn client_errors_are_not_retried() {
        let f = Flaky { calls: AtomicU32::new(0), fail_first: 10, status: Some(400) };
        let e = generate(&bundle(), &GenerationParams::default(), &f, no_wait()).await.unwrap_err();
        assert!(matches!(e, GenerationError::Remote { status: Some(400), attempts: 1, .. }));
    }

    #[tokio::test]
    async fn timeout_surfaces() {
        let p = GenerationParams { request_timeout_secs: 0.05, ..Default::default() };
        let policy = RetryPolicy { max_retries: 0, backoff: Duration::ZERO };
        let e = generate(&bundle(), &p, &Slow, policy).await.unwrap_err();
        assert!(matches!(e, GenerationError::Timeout { .. }));
    }

    #[tokio::test]
    async fn blank_completion_is_empty_error() {
        let e = generate(&bundle(), &GenerationParams::default(), &CannedClient::new("  "), no_wait()).await;
        assert!(matches!(e, Err(GenerationError::EmptyCompletion)));
    }

    #[tokio::test]
    async fn capturing_double_sees_default_decoding_values() {
        let cap = CapturingClient::new(CannedClient::new("x"));
        generate(&bundle(), &GenerationParams::default(), &cap, no_wait()).await.unwrap();
        let body = cap.captured.lock().unwrap()[0].clone();
        assert_eq!(body["temperature"], serde_json::json!(0.7));
        assert_eq!(body["top_p"], serde_json::json!(0.9));
        assert_eq!(body["repetition_penalty"], serde_json::json!(1.1));
        assert_eq!(body["messages"].as_array().unwrap().len(), 2);
    }
}
