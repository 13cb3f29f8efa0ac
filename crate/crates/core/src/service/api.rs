//! HTTP API: `/v1/health`, `/v1/stats`, `/v1/query` and `/v1/chat`.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::mpsc;

use super::log::{sha256_hex, InteractionLog, InteractionRecord, Latency, RequestIds, RetrievedEntry};
use crate::corpus::CorpusStats;
use crate::generation::{
    Citation, GenerationError, GenerationParams, Generator, PipelineError, PromptError, QueryAnswer, Usage,
};
use crate::retrieval::{Context, RetrievalError, RetrievalParams, RetrievalResult, Retriever, StageTimings};

/// Longest accepted query, in characters.
pub const MAX_QUERY_CHARS: usize = 4096;

pub struct AppState {
    pub retriever: Retriever,
    pub generator: Generator,
    pub log: InteractionLog,
    pub stats: CorpusStats,
    ids: RequestIds,
}

impl AppState {
    pub fn new(retriever: Retriever, generator: Generator, log: InteractionLog, stats: CorpusStats) -> Self {
        AppState { retriever, generator, log, stats, ids: RequestIds::default() }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/stats", get(stats))
        .route("/v1/query", post(query))
        .route("/v1/chat", post(chat))
        .fallback(not_found)
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub stage: &'static str,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, stage: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), stage }
    }

    fn body(&self, request_id: Option<&str>) -> Value {
        let mut v = json!({ "error": self });
        if let Some(id) = request_id {
            v["request_id"] = json!(id);
        }
        v
    }

    fn respond(self, request_id: Option<&str>) -> Response {
        (self.status, Json(self.body(request_id))).into_response()
    }
}

impl From<&PipelineError> for ApiError {
    fn from(e: &PipelineError) -> Self {
        let stage = e.stage();
        let msg = e.to_string();
        let (status, code) = match e {
            PipelineError::Retrieval(r) => match r {
                RetrievalError::EmptyQuery => (StatusCode::BAD_REQUEST, "empty_query"),
                RetrievalError::Params(_) => (StatusCode::BAD_REQUEST, "invalid_parameter"),
                RetrievalError::Embed(_) => (StatusCode::BAD_GATEWAY, "embedding_failed"),
                RetrievalError::Rerank(_) => (StatusCode::BAD_GATEWAY, "rerank_failed"),
                RetrievalError::Dense(_) => (StatusCode::INTERNAL_SERVER_ERROR, "index_error"),
            },
            PipelineError::Prompt(PromptError::EmptyQuery) => (StatusCode::BAD_REQUEST, "empty_query"),
            PipelineError::Prompt(PromptError::ContextOverflow { .. }) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "context_overflow")
            }
            PipelineError::Generation(GenerationError::Timeout { .. }) => (StatusCode::GATEWAY_TIMEOUT, "llm_timeout"),
            PipelineError::Generation(GenerationError::Remote { .. }) => (StatusCode::BAD_GATEWAY, "llm_error"),
            PipelineError::Generation(GenerationError::EmptyCompletion) => {
                (StatusCode::BAD_GATEWAY, "empty_completion")
            }
        };
        ApiError::new(status, code, stage, msg)
    }
}

async fn not_found() -> Response {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "request", "no such endpoint").respond(None)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "index_chunks": state.retriever.indexes.len(),
        "model": state.generator.client.model_name(),
    }))
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<CorpusStats> {
    Json(state.stats.clone())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let code = if e.is_syntax() || e.is_eof() { "invalid_json" } else { "invalid_request" };
        ApiError::new(StatusCode::BAD_REQUEST, code, "request", e.to_string())
    })
}

fn check_query(q: &str) -> Result<(), ApiError> {
    if q.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_query", "query", "query is empty"));
    }
    let n = q.chars().count();
    if n > MAX_QUERY_CHARS {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_parameter",
            "request",
            format!("query is {n} characters, the limit is {MAX_QUERY_CHARS}"),
        ));
    }
    Ok(())
}

fn invalid(message: String) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "invalid_parameter", "request", message)
}

fn retrieval_params(base: &RetrievalParams, k: Option<usize>, k_candidates: Option<usize>, expansion: Option<bool>) -> Result<RetrievalParams, ApiError> {
    let mut p = base.clone();
    if let Some(c) = k_candidates {
        p.k_candidates = c;
    }
    if let Some(k) = k {
        p.k_final = k;
        if k_candidates.is_none() {
            p.k_candidates = p.k_candidates.max(k);
        }
    }
    if let Some(e) = expansion {
        p.expansion = e;
    }
    p.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(p)
}

async fn run_retrieval(state: &Arc<AppState>, q: String, params: RetrievalParams) -> Result<RetrievalResult, PipelineError> {
    let s = state.clone();
    tokio::task::spawn_blocking(move || s.retriever.retrieve_with(&q, &params))
        .await
        .expect("retrieval task panicked")
        .map_err(PipelineError::from)
}

struct LogEntry<'a> {
    request_id: &'a str,
    endpoint: &'static str,
    query: &'a str,
    retrieval: Option<&'a RetrievalResult>,
    answer: Option<&'a QueryAnswer>,
    status: &'a str,
    started: Instant,
}

async fn log_interaction(log: &InteractionLog, e: LogEntry<'_>) {
    let timings = e.answer.map(|a| &a.retrieval).or(e.retrieval).map(|r| r.timings.clone()).unwrap_or_default();
    let contexts = e.answer.map(|a| &a.retrieval).or(e.retrieval).map(|r| r.contexts.as_slice()).unwrap_or(&[]);
    log.record(InteractionRecord {
        timestamp: Utc::now(),
        request_id: e.request_id.to_string(),
        endpoint: e.endpoint.to_string(),
        query: e.query.to_string(),
        retrieved: contexts.iter().map(|c| RetrievedEntry::from(&c.scores)).collect(),
        prompt_hash: e.answer.map(|a| sha256_hex(&a.bundle.rendered)),
        answer_hash: e.answer.map(|a| sha256_hex(&a.answer.text)),
        latency: Latency {
            retrieval: timings,
            generate_ms: e.answer.map(|a| a.generate_ms).unwrap_or(0.0),
            request_ms: e.started.elapsed().as_secs_f64() * 1000.0,
        },
        model_name: e.answer.map(|a| a.answer.model_name.clone()),
        status: e.status.to_string(),
    })
    .await;
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBody {
    pub query: String,
    pub k: Option<usize>,
    pub k_candidates: Option<usize>,
    pub expansion: Option<bool>,
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let started = Instant::now();
    let request_id = state.ids.next_id();
    let req: QueryBody = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.respond(Some(&request_id)),
    };
    let mut entry =
        LogEntry { request_id: &request_id, endpoint: "/v1/query", query: &req.query, retrieval: None, answer: None, status: "ok", started };
    let params = match check_query(&req.query)
        .and_then(|_| retrieval_params(&state.retriever.params, req.k, req.k_candidates, req.expansion))
    {
        Ok(p) => p,
        Err(e) => {
            entry.status = e.code;
            log_interaction(&state.log, entry).await;
            return e.respond(Some(&request_id));
        }
    };
    match run_retrieval(&state, req.query.clone(), params).await {
        Ok(result) => {
            entry.retrieval = Some(&result);
            log_interaction(&state.log, entry).await;
            let mut v = serde_json::to_value(&result).expect("result serializes");
            v["request_id"] = json!(request_id);
            Json(v).into_response()
        }
        Err(e) => {
            let api = ApiError::from(&e);
            entry.status = api.code;
            log_interaction(&state.log, entry).await;
            api.respond(Some(&request_id))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatBody {
    pub query: String,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub repetition_penalty: Option<f64>,
    pub max_new_tokens: Option<u32>,
    pub k: Option<usize>,
    pub stream: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
pub struct ChatQuery {
    #[serde(default)]
    pub stream: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatTimings {
    #[serde(flatten)]
    pub retrieval: StageTimings,
    pub generate_ms: f64,
    pub request_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatResponse {
    pub request_id: String,
    pub answer: String,
    pub citations: Vec<Citation>,
    pub contexts: Vec<Context>,
    pub abstained: bool,
    pub model: String,
    pub usage: Usage,
    pub timings: ChatTimings,
}

impl ChatResponse {
    fn new(request_id: &str, qa: &QueryAnswer, started: Instant) -> Self {
        ChatResponse {
            request_id: request_id.to_string(),
            answer: qa.answer.text.clone(),
            citations: qa.answer.citations.clone(),
            contexts: qa.retrieval.contexts.clone(),
            abstained: qa.answer.abstained,
            model: qa.answer.model_name.clone(),
            usage: qa.answer.usage,
            timings: ChatTimings {
                retrieval: qa.retrieval.timings.clone(),
                generate_ms: qa.generate_ms,
                request_ms: started.elapsed().as_secs_f64() * 1000.0,
            },
        }
    }
}

fn generation_params(base: &GenerationParams, req: &ChatBody) -> Result<GenerationParams, ApiError> {
    let mut p = base.clone();
    if let Some(v) = req.temperature {
        p.temperature = v;
    }
    if let Some(v) = req.top_p {
        p.top_p = v;
    }
    if let Some(v) = req.repetition_penalty {
        p.repetition_penalty = v;
    }
    if let Some(v) = req.max_new_tokens {
        p.max_new_tokens = v;
    }
    p.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(p)
}

async fn chat(State(state): State<Arc<AppState>>, Query(flags): Query<ChatQuery>, body: Bytes) -> Response {
    let started = Instant::now();
    let request_id = state.ids.next_id();
    let req: ChatBody = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.respond(Some(&request_id)),
    };
    let mut entry =
        LogEntry { request_id: &request_id, endpoint: "/v1/chat", query: &req.query, retrieval: None, answer: None, status: "ok", started };
    let prepared = check_query(&req.query).and_then(|_| {
        Ok((
            retrieval_params(&state.retriever.params, req.k, None, None)?,
            generation_params(&state.generator.params, &req)?,
        ))
    });
    let (rparams, gparams) = match prepared {
        Ok(p) => p,
        Err(e) => {
            entry.status = e.code;
            log_interaction(&state.log, entry).await;
            return e.respond(Some(&request_id));
        }
    };
    let retrieval = match run_retrieval(&state, req.query.clone(), rparams).await {
        Ok(r) => r,
        Err(e) => {
            let api = ApiError::from(&e);
            entry.status = api.code;
            log_interaction(&state.log, entry).await;
            return api.respond(Some(&request_id));
        }
    };

    if flags.stream || req.stream == Some(true) {
        return stream_chat(state.clone(), request_id, req.query, retrieval, gparams, started);
    }

    let result = state.generator.answer_with(&req.query, retrieval.clone(), &gparams, None).await;
    match result {
        Ok(qa) => {
            entry.answer = Some(&qa);
            log_interaction(&state.log, entry).await;
            Json(ChatResponse::new(&request_id, &qa, started)).into_response()
        }
        Err(e) => {
            let api = ApiError::from(&e);
            entry.retrieval = Some(&retrieval);
            entry.status = api.code;
            log_interaction(&state.log, entry).await;
            api.respond(Some(&request_id))
        }
    }
}

fn event(name: &str, data: &impl Serialize) -> Event {
    Event::default().event(name).data(serde_json::to_string(data).expect("event serializes"))
}

/// SSE: one `context` event, `delta` events as text arrives, then `done`
/// with the full [`ChatResponse`] or `error`.
fn stream_chat(
    state: Arc<AppState>,
    request_id: String,
    query: String,
    retrieval: RetrievalResult,
    params: GenerationParams,
    started: Instant,
) -> Response {
    let (tx, rx) = mpsc::channel::<Event>(64);
    tokio::spawn(async move {
        let _ = tx
            .send(event("context", &json!({ "request_id": request_id, "contexts": retrieval.contexts })))
            .await;
        let (dtx, mut drx) = mpsc::channel::<String>(64);
        let generator = state.generator.clone();
        let gen_retrieval = retrieval.clone();
        let q = query.clone();
        let generation = async move {
            let r = generator.answer_with(&q, gen_retrieval, &params, Some(&dtx)).await;
            drop(dtx);
            r
        };
        let forward_tx = tx.clone();
        let forward = async move {
            while let Some(text) = drx.recv().await {
                if forward_tx.send(event("delta", &json!({ "text": text }))).await.is_err() {
                    break;
                }
            }
        };
        let (result, ()) = tokio::join!(generation, forward);
        let mut entry =
            LogEntry { request_id: &request_id, endpoint: "/v1/chat", query: &query, retrieval: None, answer: None, status: "ok", started };
        match result {
            Ok(qa) => {
                let _ = tx.send(event("done", &ChatResponse::new(&request_id, &qa, started))).await;
                entry.answer = Some(&qa);
                log_interaction(&state.log, entry).await;
            }
            Err(e) => {
                let api = ApiError::from(&e);
                let _ = tx.send(event("error", &api.body(Some(&request_id)))).await;
                entry.retrieval = Some(&retrieval);
                entry.status = api.code;
                log_interaction(&state.log, entry).await;
            }
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|e| (Ok::<_, Infallible>(e), rx)) });
    Sse::new(stream).keep_alive(KeepAlive::default()).into_response()
}
