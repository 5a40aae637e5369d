//! Typed async client for the service's JSON API.
//!
//! Mutating calls carry an idempotency key that is reused when a transport
//! failure forces a resend, so a retried submission is applied once.

use std::time::Duration;

use degusta_api::{
    ApiError, ArrangementSubmission, CatalogView, CreateSession, EvaluateRequest, Health, JobStatus,
    JobTicket, JobView, PredictRequest, Prediction, RatingSubmission, SessionView, TableView,
    IDEMPOTENCY_HEADER,
};
use degusta_core::dataset::{JitterDraw, Phase, Session, StudyRecord};
use degusta_core::evaluation::{EvalReport, Matching};
use degusta_core::Arrangement;
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("server answered {status}: {error}")]
    Api { status: u16, error: ApiError },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response body: {0}")]
    Decode(String),
    #[error("prediction job {job} still running after {waited:?}")]
    Timeout { job: String, waited: Duration },
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }

    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { error, .. } => Some(&error.code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
    attempts: u32,
    poll_interval: Duration,
    poll_timeout: Duration,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Result<Self, ClientError> {
        Ok(Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::builder().timeout(Duration::from_secs(600)).build()?,
            attempts: 3,
            poll_interval: Duration::from_millis(250),
            poll_timeout: Duration::from_secs(1800),
        })
    }

    /// How long `predict` keeps polling a long-running job.
    pub fn with_poll(mut self, interval: Duration, timeout: Duration) -> Self {
        self.poll_interval = interval;
        self.poll_timeout = timeout;
        self
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if !status.is_success() {
            let error = serde_json::from_slice::<ApiError>(&bytes).unwrap_or_else(|_| ApiError {
                code: "unknown".into(),
                message: String::from_utf8_lossy(&bytes).into_owned(),
                request_id: None,
            });
            return Err(ClientError::Api {
                status: status.as_u16(),
                error,
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    /// POST with a fresh idempotency key, resent on connection failures.
    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self.post_raw(path, body).await?;
        Self::decode(resp).await
    }

    async fn post_raw<B: Serialize>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<reqwest::Response, ClientError> {
        let key = uuid::Uuid::new_v4().to_string();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let req = self
                .http
                .request(Method::POST, self.url(path))
                .header(IDEMPOTENCY_HEADER, &key)
                .json(body);
            match req.send().await {
                Ok(r) if r.status() == StatusCode::SERVICE_UNAVAILABLE && attempt < self.attempts => {}
                Ok(r) => return Ok(r),
                Err(e) if (e.is_connect() || e.is_timeout()) && attempt < self.attempts => {}
                Err(e) => return Err(e.into()),
            }
            tokio::time::sleep(Duration::from_millis(100 << attempt)).await;
        }
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn catalog(&self) -> Result<CatalogView, ClientError> {
        self.get("/catalog").await
    }

    pub async fn tables(&self) -> Result<Vec<TableView>, ClientError> {
        self.get("/tables").await
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<Session, ClientError> {
        self.post("/sessions", req).await
    }

    pub async fn sessions(&self) -> Result<Vec<Session>, ClientError> {
        self.get("/sessions").await
    }

    pub async fn session(&self, id: &str) -> Result<SessionView, ClientError> {
        self.get(&format!("/sessions/{id}")).await
    }

    pub async fn submit_arrangement(&self, id: &str, trial: u32, arrangement: &Arrangement) -> Result<StudyRecord, ClientError> {
        let body = ArrangementSubmission {
            trial,
            arrangement: arrangement.clone(),
        };
        self.post(&format!("/sessions/{id}/arrangements"), &body).await
    }

    /// `rating` is the 0 to 100 slider value.
    pub async fn rate(&self, id: &str, trial: u32, phase: Phase, rating: f64) -> Result<StudyRecord, ClientError> {
        let body = RatingSubmission { trial, phase, rating };
        self.post(&format!("/sessions/{id}/ratings"), &body).await
    }

    pub async fn jitter(&self, id: &str, trial: u32) -> Result<JitterDraw, ClientError> {
        self.get(&format!("/sessions/{id}/jitter?trial={trial}")).await
    }

    pub async fn submit_correction(&self, id: &str, trial: u32, arrangement: &Arrangement) -> Result<StudyRecord, ClientError> {
        let body = ArrangementSubmission {
            trial,
            arrangement: arrangement.clone(),
        };
        self.post(&format!("/sessions/{id}/corrections"), &body).await
    }

    /// Runs a prediction, polling if the server hands back a job ticket.
    pub async fn predict(&self, req: &PredictRequest) -> Result<Prediction, ClientError> {
        let resp = self.post_raw("/predict", req).await?;
        if resp.status() != StatusCode::ACCEPTED {
            return Self::decode(resp).await;
        }
        let ticket: JobTicket = Self::decode(resp).await?;
        self.wait_for(&ticket.job).await
    }

    /// Starts a prediction without waiting for it.
    pub async fn submit_prediction(&self, req: &PredictRequest) -> Result<JobTicket, ClientError> {
        let resp = self.post_raw("/predict?wait_ms=0", req).await?;
        if resp.status() == StatusCode::ACCEPTED {
            return Self::decode(resp).await;
        }
        // finished inside the zero wait; there is no job to poll
        let status = resp.status().as_u16();
        Err(ClientError::Decode(format!("expected 202 with a job ticket, got {status}")))
    }

    pub async fn job(&self, job: &str) -> Result<JobView, ClientError> {
        self.get(&format!("/predict/{job}")).await
    }

    pub async fn wait_for(&self, job: &str) -> Result<Prediction, ClientError> {
        let start = tokio::time::Instant::now();
        loop {
            let view = self.job(job).await?;
            match view.status {
                JobStatus::Done => {
                    return view
                        .result
                        .ok_or_else(|| ClientError::Decode("finished job without a result".into()))
                }
                JobStatus::Failed => {
                    let error = view.error.unwrap_or(ApiError {
                        code: "unknown".into(),
                        message: "job failed".into(),
                        request_id: None,
                    });
                    let status = if error.code == "provider_error" || error.code == "unparsable_responses" {
                        502
                    } else {
                        422
                    };
                    return Err(ClientError::Api { status, error });
                }
                JobStatus::Running => {}
            }
            if start.elapsed() >= self.poll_timeout {
                return Err(ClientError::Timeout {
                    job: job.to_string(),
                    waited: start.elapsed(),
                });
            }
            tokio::time::sleep(self.poll_interval).await;
        }
    }

    pub async fn evaluate(&self, gt: &Arrangement, pred: &Arrangement, matching: Option<Matching>) -> Result<EvalReport, ClientError> {
        let body = EvaluateRequest {
            gt: gt.clone(),
            pred: pred.clone(),
            matching,
        };
        self.post("/evaluate", &body).await
    }
}
