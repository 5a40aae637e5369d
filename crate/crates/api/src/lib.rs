//! Request and response bodies of the HTTP API.

use degusta_core::dataset::{JitterDraw, Phase, Session, StudyRecord};
use degusta_core::evaluation::Matching;
use degusta_core::lifting::GridSpec;
use degusta_core::prompt::Method;
use degusta_core::{Arrangement, ObjectSpec, PreferenceContext};
use serde::{Deserialize, Serialize};

pub use degusta_models::Prediction;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const REQUEST_ID_HEADER: &str = "x-request-id";

/// Body of every non-success response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub request_id: Option<String>,
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)?;
        if let Some(id) = &self.request_id {
            write!(f, " (request {id})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogObject {
    #[serde(flatten)]
    pub spec: ObjectSpec,
    pub sprite_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableView {
    pub id: String,
    pub image_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogView {
    pub objects: Vec<CatalogObject>,
    pub tables: Vec<TableView>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub participant: Option<String>,
    /// Fixes the table order; drawn by the server when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session: Session,
    pub records: Vec<StudyRecord>,
    /// Practice plus every experimental trial is complete.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrangementSubmission {
    pub trial: u32,
    pub arrangement: Arrangement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub trial: u32,
    pub phase: Phase,
    /// Slider value in [0, 100]; stored divided by 100.
    pub rating: f64,
}

pub type JitterView = JitterDraw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub context: PreferenceContext,
    /// Target scene; usually an empty table.
    pub initial: Arrangement,
    pub method: Method,
    /// Name of a provider configured on the server.
    pub provider: String,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

/// Returned with 202 when a prediction outlives the synchronous wait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTicket {
    pub job: String,
    pub status: JobStatus,
    pub poll: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub job: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Prediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub gt: Arrangement,
    pub pred: Arrangement,
    #[serde(default)]
    pub matching: Option<Matching>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub objects: usize,
    pub tables: usize,
    pub providers: Vec<String>,
}
