//! HTTP routes over [`Engine`]. Bodies are JSON and every error is an
//! [`ErrorBody`](super::ErrorBody).

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use super::engine::{Engine, EvalRequest};
use super::EngineError;

impl IntoResponse for EngineError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type ApiResult<T> = Result<T, EngineError>;

async fn blocking<T, F>(engine: &Arc<Engine>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> ApiResult<T> + Send + 'static,
{
    let engine = engine.clone();
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| EngineError::Storage(format!("worker task failed: {e}")))?
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| EngineError::BadRequest(format!("body: {e}")))
}

async fn require_token(State(engine): State<Arc<Engine>>, req: Request, next: Next) -> Response {
    if let Some(token) = &engine.config().api_token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return EngineError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Deserialize)]
struct UploadJson {
    filename: String,
    text: String,
}

#[derive(Deserialize)]
struct UploadQuery {
    filename: Option<String>,
}

/// JSON `{filename, text}`, or the raw text with `?filename=`.
async fn post_document(
    State(engine): State<Arc<Engine>>,
    Query(q): Query<UploadQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let upload = if is_json {
        parse_body::<UploadJson>(&body)?
    } else {
        let text = String::from_utf8(body.to_vec()).map_err(|_| EngineError::BadRequest("body is not UTF-8".into()))?;
        UploadJson { filename: q.filename.unwrap_or_else(|| "document.txt".into()), text }
    };
    let doc = blocking(&engine, move |e| e.ingest(&upload.filename, &upload.text)).await?;
    Ok((StatusCode::CREATED, Json(doc)))
}

async fn get_document(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&engine, move |e| e.document(&id)).await?))
}

async fn get_chunks(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let body = blocking(&engine, move |e| e.chunks(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

#[derive(Deserialize)]
struct NewSession {
    document_id: String,
}

async fn post_session(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: NewSession = parse_body(&body)?;
    let s = blocking(&engine, move |e| e.create_session(&req.document_id)).await?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn get_session(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&engine, move |e| e.session(&id)).await?))
}

#[derive(Deserialize)]
struct NewMessage {
    #[serde(default)]
    text: String,
    #[serde(default)]
    finalize: bool,
}

async fn post_message(State(engine): State<Arc<Engine>>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let m: NewMessage = parse_body(&body)?;
    Ok(Json(blocking(&engine, move |e| e.post_message(&id, &m.text, m.finalize)).await?))
}

#[derive(Deserialize, Default)]
struct InterrogateBody {
    d_max: Option<usize>,
}

/// Starts the loop in the background and answers 202 at once; clients
/// poll `/progress`.
async fn post_interrogate(State(engine): State<Arc<Engine>>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let b: InterrogateBody = parse_body(&body)?;
    let sid = id.clone();
    blocking(&engine, move |e| e.start_interrogation(&sid, b.d_max)).await?;
    let runner = engine.clone();
    let sid = id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = runner.run_started(&sid) {
            tracing::warn!(session = %sid, error = %e, "interrogation failed");
        }
    });
    let progress = blocking(&engine, move |e| e.progress(&id)).await?;
    Ok((StatusCode::ACCEPTED, Json(progress)))
}

async fn get_progress(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&engine, move |e| e.progress(&id)).await?))
}

async fn get_report(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&engine, move |e| e.report(&id)).await?))
}

#[derive(Deserialize)]
struct AskBody {
    document_id: String,
    question: String,
    d_max: Option<usize>,
}

/// Synchronous counterpart of the `ask` command.
async fn post_ask(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let a: AskBody = parse_body(&body)?;
    Ok(Json(blocking(&engine, move |e| e.ask(&a.document_id, &a.question, a.d_max)).await?))
}

async fn post_eval(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let r: EvalRequest = parse_body(&body)?;
    Ok(Json(blocking(&engine, move |e| e.eval(&r)).await?))
}

async fn fallback() -> EngineError {
    EngineError::NotFound { what: "route", id: String::new() }
}

pub fn router(engine: Arc<Engine>) -> Router {
    let api = Router::new()
        .route("/documents", post(post_document))
        .route("/documents/:id", get(get_document))
        .route("/documents/:id/chunks", get(get_chunks))
        .route("/sessions", post(post_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/messages", post(post_message))
        .route("/sessions/:id/interrogate", post(post_interrogate))
        .route("/sessions/:id/progress", get(get_progress))
        .route("/sessions/:id/report", get(get_report))
        .route("/ask", post(post_ask))
        .route("/eval", post(post_eval))
        .route_layer(middleware::from_fn_with_state(engine.clone(), require_token));
    Router::new().route("/health", get(health)).merge(api).fallback(fallback).with_state(engine)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Serve until SIGINT or SIGTERM.
pub async fn serve(engine: Arc<Engine>) -> Result<(), EngineError> {
    let addr = engine.config().bind_addr()?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| EngineError::Config(format!("cannot bind {addr}: {e}")))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| EngineError::Storage(format!("server: {e}")))
}
