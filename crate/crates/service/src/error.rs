use axum::body::to_bytes;
use axum::extract::Request;
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use axum::Json;
use degusta_api::{ApiError, REQUEST_ID_HEADER};
use degusta_core::dataset::StoreError;
use degusta_models::PredictError;

const MAX_ERROR_BODY: usize = 64 * 1024;

#[derive(Debug, Clone)]
pub struct AppError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl AppError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn body(&self) -> ApiError {
        ApiError {
            code: self.code.clone(),
            message: self.message.clone(),
            request_id: None,
        }
    }
}

/// Marker so the request-id layer knows the body is already an [`ApiError`].
#[derive(Clone)]
struct Structured(ApiError);

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let body = self.body();
        let mut resp = (self.status, Json(body.clone())).into_response();
        resp.extensions_mut().insert(Structured(body));
        resp
    }
}

impl From<StoreError> for AppError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Conflict { .. } => Self::new(StatusCode::CONFLICT, "duplicate_submission", e.to_string()),
            StoreError::BadTrial(_) => Self::not_found(e.to_string()),
            StoreError::NotFound { .. } => Self::not_found(e.to_string()),
            other => {
                tracing::error!("store failure: {other}");
                Self::internal(other.to_string())
            }
        }
    }
}

impl From<PredictError> for AppError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::Provider { .. } => Self::new(StatusCode::BAD_GATEWAY, "provider_error", e.to_string()),
            PredictError::Unparsable { .. } => {
                Self::new(StatusCode::BAD_GATEWAY, "unparsable_responses", e.to_string())
            }
            PredictError::Aggregate(_) => Self::invalid("aggregation_failed", e.to_string()),
        }
    }
}

fn code_for(status: StatusCode) -> &'static str {
    match status {
        StatusCode::BAD_REQUEST => "bad_request",
        StatusCode::NOT_FOUND => "not_found",
        StatusCode::METHOD_NOT_ALLOWED => "method_not_allowed",
        StatusCode::CONFLICT => "conflict",
        StatusCode::PAYLOAD_TOO_LARGE => "payload_too_large",
        StatusCode::UNSUPPORTED_MEDIA_TYPE => "unsupported_media_type",
        StatusCode::UNPROCESSABLE_ENTITY => "invalid_request",
        StatusCode::BAD_GATEWAY => "provider_error",
        s if s.is_server_error() => "internal",
        _ => "error",
    }
}

/// Tags every response with a request id and turns any non-success body
/// into an [`ApiError`] carrying that id.
pub async fn request_context(req: Request, next: Next) -> Response {
    let id = req
        .headers()
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty() && s.len() <= 128)
        .map(str::to_string)
        .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
    let resp = next.run(req).await;
    let status = resp.status();
    let mut resp = if status.is_client_error() || status.is_server_error() {
        let mut body = match resp.extensions().get::<Structured>() {
            Some(Structured(b)) => b.clone(),
            None => {
                let bytes = to_bytes(resp.into_body(), MAX_ERROR_BODY).await.unwrap_or_default();
                let text = String::from_utf8_lossy(&bytes).trim().to_string();
                // replayed idempotent responses already carry an ApiError body
                serde_json::from_slice::<ApiError>(&bytes).unwrap_or(ApiError {
                    code: code_for(status).to_string(),
                    message: if text.is_empty() {
                        status.canonical_reason().unwrap_or("error").to_string()
                    } else {
                        text
                    },
                    request_id: None,
                })
            }
        };
        if body.request_id.is_none() {
            body.request_id = Some(id.clone());
        }
        let mut out = (status, Json(body.clone())).into_response();
        out.extensions_mut().insert(Structured(body));
        out
    } else {
        resp
    };
    if let Ok(v) = HeaderValue::from_str(&id) {
        resp.headers_mut().insert(REQUEST_ID_HEADER, v);
    }
    resp
}

pub async fn fallback() -> AppError {
    AppError::not_found("no such route")
}
