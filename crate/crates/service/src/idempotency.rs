//! Replays the stored response when a POST is retried with the same
//! `Idempotency-Key`.

use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderMap, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use degusta_api::IDEMPOTENCY_HEADER;
use tokio::sync::Mutex;

use crate::error::AppError;
use crate::AppState;

const MAX_BODY: usize = 16 * 1024 * 1024;
pub const REPLAY_HEADER: &str = "idempotent-replay";

#[derive(Debug)]
pub struct Cached {
    request: Bytes,
    status: StatusCode,
    headers: HeaderMap,
    body: Bytes,
}

pub type Slot = Arc<Mutex<Option<Cached>>>;

fn rebuild(status: StatusCode, headers: &HeaderMap, body: Bytes) -> Response {
    let mut resp = Response::new(Body::from(body));
    *resp.status_mut() = status;
    *resp.headers_mut() = headers.clone();
    resp
}

pub async fn idempotency(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let key = req
        .headers()
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let Some(key) = key.filter(|_| req.method() == Method::POST) else {
        return next.run(req).await;
    };
    let scope = format!("{} {key}", req.uri().path());
    let slot = state.idempotency.entry(scope).or_default().clone();
    // same-key requests wait here, so only the first one reaches the handler
    let mut guard = slot.lock().await;

    let (parts, body) = req.into_parts();
    let request = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return AppError::invalid("bad_body", e.to_string()).into_response(),
    };
    if let Some(c) = guard.as_ref() {
        if c.request != request {
            return AppError::invalid(
                "idempotency_mismatch",
                "idempotency key was already used with a different request body",
            )
            .into_response();
        }
        let mut resp = rebuild(c.status, &c.headers, c.body.clone());
        resp.headers_mut().insert(REPLAY_HEADER, "true".parse().unwrap());
        return resp;
    }

    let resp = next.run(Request::from_parts(parts, Body::from(request.clone()))).await;
    let (rparts, rbody) = resp.into_parts();
    let body = match to_bytes(rbody, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return AppError::internal(e.to_string()).into_response(),
    };
    // transient failures may be retried for real
    if !rparts.status.is_server_error() {
        *guard = Some(Cached {
            request,
            status: rparts.status,
            headers: rparts.headers.clone(),
            body: body.clone(),
        });
    }
    let mut out = Response::from_parts(rparts, Body::from(body));
    out.headers_mut().remove(REPLAY_HEADER);
    out
}
