use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use degusta_api::{
    ApiError, ArrangementSubmission, CatalogObject, CatalogView, CreateSession, EvaluateRequest, Health,
    JobStatus, JobTicket, JobView, PredictRequest, RatingSubmission, SessionView, TableView,
};
use degusta_core::acceptability::jitter as apply_jitter;
use degusta_core::dataset::{
    JitterDraw, Phase, Session, StudyRecord, WriteOutcome, EXPERIMENTAL_TRIALS, TRIALS_PER_SESSION,
};
use degusta_core::evaluation::{evaluate_with, EvalReport};
use degusta_core::prompt::{build_prompt, DEFAULT_SAMPLES};
use degusta_core::scene::STUDY_MIN_OBJECTS;
use degusta_core::{arrangement_valid_for_study, Arrangement};
use degusta_models::predict as run_prediction;
use rand::{Rng, SeedableRng};
use serde::Deserialize;
use tokio::sync::watch;

use crate::error::AppError;
use crate::AppState;

type St = State<Arc<AppState>>;

const MAX_SAMPLES: usize = 50;

/// FNV-1a over the parts, for reproducible per-trial seeds.
fn mix(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for part in parts {
        for &b in part.iter().chain(&[0xff]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub async fn health(State(st): St) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        objects: st.catalog.objects().len(),
        tables: st.catalog.tables().len(),
        providers: st.providers.keys().cloned().collect(),
    })
}

fn table_views(st: &AppState) -> Vec<TableView> {
    st.catalog
        .tables()
        .iter()
        .map(|t| TableView {
            id: t.id.clone(),
            image_url: format!("/assets/{}", t.image),
        })
        .collect()
}

pub async fn catalog(State(st): St) -> Json<CatalogView> {
    Json(CatalogView {
        objects: st
            .catalog
            .objects()
            .iter()
            .map(|o| CatalogObject {
                sprite_url: format!("/assets/{}", o.sprite),
                spec: o.clone(),
            })
            .collect(),
        tables: table_views(&st),
    })
}

pub async fn tables(State(st): St) -> Json<Vec<TableView>> {
    Json(table_views(&st))
}

pub async fn create_session(State(st): St, body: Option<Json<CreateSession>>) -> Result<Response, AppError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let n = st.counter.fetch_add(1, Ordering::Relaxed);
    let id = uuid::Uuid::new_v4().simple().to_string();
    let seed = req.seed.unwrap_or_else(|| match st.config.seed {
        Some(s) => mix(s, &[b"session", &n.to_le_bytes()]),
        None => rand::random(),
    });
    let participant = req
        .participant
        .filter(|p| !p.trim().is_empty())
        .unwrap_or_else(|| format!("anon-{}", &id[..8]));
    let tables: Vec<String> = st.catalog.tables().iter().map(|t| t.id.clone()).collect();
    if tables.is_empty() {
        return Err(AppError::invalid("no_tables", "the catalog has no tables"));
    }
    let session = Session::new(id, participant, &tables, seed);
    st.store.put_session(&session)?;
    tracing::info!(session = %session.id, "session created");
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

pub async fn list_sessions(State(st): St) -> Result<Json<Vec<Session>>, AppError> {
    Ok(Json(st.store.sessions()?))
}

fn load_session(st: &AppState, id: &str) -> Result<Session, AppError> {
    st.store.session(id).map_err(|e| match e {
        degusta_core::dataset::StoreError::NotFound { .. } => AppError::not_found(format!("no session {id}")),
        other => other.into(),
    })
}

fn check_trial(session: &Session, trial: u32) -> Result<&str, AppError> {
    if trial >= TRIALS_PER_SESSION {
        return Err(AppError::not_found(format!(
            "trial {trial} does not exist (trials are 0..={})",
            TRIALS_PER_SESSION - 1
        )));
    }
    session
        .table_for(trial)
        .ok_or_else(|| AppError::not_found(format!("session {} has no trial {trial}", session.id)))
}

pub async fn get_session(State(st): St, Path(id): Path<String>) -> Result<Json<SessionView>, AppError> {
    let session = load_session(&st, &id)?;
    let records: Vec<StudyRecord> = (0..TRIALS_PER_SESSION)
        .filter_map(|t| st.store.record(&id, t).transpose())
        .collect::<Result<_, _>>()?;
    let complete =
        records.len() == (EXPERIMENTAL_TRIALS + 1) as usize && records.iter().all(StudyRecord::is_complete);
    Ok(Json(SessionView {
        session,
        records,
        complete,
    }))
}

/// Objects must exist and lie on the table shown for this trial.
fn check_scene(st: &AppState, a: &Arrangement, table: &str) -> Result<(), AppError> {
    if a.table != table {
        return Err(AppError::invalid(
            "wrong_table",
            format!("this trial uses table {table}, got {}", a.table),
        ));
    }
    if let Some(p) = a.placements.iter().find(|p| st.catalog.get(p.object).is_none()) {
        return Err(AppError::invalid("unknown_object", format!("object {} is not in the catalog", p.object)));
    }
    if let Some(p) = a.placements.iter().find(|p| !p.in_bounds()) {
        return Err(AppError::invalid(
            "out_of_bounds",
            format!("object {} at ({}, {}, {}) is outside the table", p.object, p.x, p.y, p.rotation),
        ));
    }
    Ok(())
}

fn stored(outcome: WriteOutcome, record: StudyRecord) -> Response {
    let status = match outcome {
        WriteOutcome::Created => StatusCode::CREATED,
        WriteOutcome::Updated | WriteOutcome::Unchanged => StatusCode::OK,
    };
    (status, Json(record)).into_response()
}

pub async fn submit_arrangement(
    State(st): St,
    Path(id): Path<String>,
    Json(req): Json<ArrangementSubmission>,
) -> Result<Response, AppError> {
    let lock = st.session_lock(&id);
    let _guard = lock.lock().await;
    let session = load_session(&st, &id)?;
    let table = check_trial(&session, req.trial)?;
    check_scene(&st, &req.arrangement, table)?;
    if !arrangement_valid_for_study(&req.arrangement) {
        return Err(AppError::invalid(
            "too_few_objects",
            format!(
                "an arrangement needs at least {STUDY_MIN_OBJECTS} objects, got {}",
                req.arrangement.len()
            ),
        ));
    }
    let mut update = StudyRecord::new(&id, req.trial);
    update.arrangement = Some(req.arrangement);
    let (record, outcome) = st.store.upsert_record(&update)?;
    Ok(stored(outcome, record))
}

fn existing(st: &AppState, id: &str, trial: u32) -> Result<StudyRecord, AppError> {
    st.store
        .record(id, trial)?
        .ok_or_else(|| AppError::invalid("phase_order", format!("trial {trial} has no arrangement yet")))
}

pub async fn submit_rating(
    State(st): St,
    Path(id): Path<String>,
    Json(req): Json<RatingSubmission>,
) -> Result<Response, AppError> {
    if !(0.0..=100.0).contains(&req.rating) {
        return Err(AppError::invalid(
            "rating_out_of_range",
            format!("rating must be within 0..=100, got {}", req.rating),
        ));
    }
    let lock = st.session_lock(&id);
    let _guard = lock.lock().await;
    let session = load_session(&st, &id)?;
    check_trial(&session, req.trial)?;
    let current = existing(&st, &id, req.trial)?;
    let ready = match req.phase {
        Phase::Baseline => current.arrangement.is_some(),
        Phase::Jitter => current.jitter.is_some(),
        Phase::Correction => current.corrected.is_some(),
    };
    if !ready {
        return Err(AppError::invalid(
            "phase_order",
            format!("trial {} is not ready for a {:?} rating", req.trial, req.phase).to_lowercase(),
        ));
    }
    let mut update = StudyRecord::new(&id, req.trial);
    let value = Some(req.rating / 100.0);
    match req.phase {
        Phase::Baseline => update.ratings.baseline = value,
        Phase::Jitter => update.ratings.jitter = value,
        Phase::Correction => update.ratings.correction = value,
    }
    let (record, outcome) = st.store.upsert_record(&update)?;
    Ok(stored(outcome, record))
}

#[derive(Debug, Deserialize)]
pub struct TrialQuery {
    trial: u32,
}

/// Draws and persists the jitter for a trial on first call; later calls
/// return the stored draw.
pub async fn jitter(State(st): St, Path(id): Path<String>, Query(q): Query<TrialQuery>) -> Result<Json<JitterDraw>, AppError> {
    let lock = st.session_lock(&id);
    let _guard = lock.lock().await;
    let session = load_session(&st, &id)?;
    check_trial(&session, q.trial)?;
    let record = existing(&st, &id, q.trial)?;
    if let Some(draw) = record.jitter {
        return Ok(Json(draw));
    }
    let original = record
        .arrangement
        .as_ref()
        .ok_or_else(|| AppError::invalid("phase_order", "submit the arrangement first"))?;
    let seed = match st.config.seed {
        Some(s) => mix(s, &[id.as_bytes(), &q.trial.to_le_bytes()]),
        None => rand::random(),
    };
    let magnitude: f64 = rand::rngs::StdRng::seed_from_u64(seed).random();
    let arrangement = apply_jitter(original, magnitude, seed, &st.config.jitter)
        .map_err(|e| AppError::invalid("jitter_failed", e.to_string()))?;
    let draw = JitterDraw {
        magnitude,
        seed,
        arrangement,
    };
    let mut update = StudyRecord::new(&id, q.trial);
    update.jitter = Some(draw.clone());
    st.store.upsert_record(&update)?;
    Ok(Json(draw))
}

pub async fn submit_correction(
    State(st): St,
    Path(id): Path<String>,
    Json(req): Json<ArrangementSubmission>,
) -> Result<Response, AppError> {
    let lock = st.session_lock(&id);
    let _guard = lock.lock().await;
    let session = load_session(&st, &id)?;
    let table = check_trial(&session, req.trial)?;
    check_scene(&st, &req.arrangement, table)?;
    let current = existing(&st, &id, req.trial)?;
    if current.jitter.is_none() {
        return Err(AppError::invalid("phase_order", "fetch the jittered scene before correcting it"));
    }
    let mut update = StudyRecord::new(&id, req.trial);
    update.corrected = Some(req.arrangement);
    let (record, outcome) = st.store.upsert_record(&update)?;
    Ok(stored(outcome, record))
}

#[derive(Debug, Deserialize)]
pub struct WaitQuery {
    wait_ms: Option<u64>,
}

fn api(e: AppError) -> ApiError {
    e.body()
}

fn outcome_response(job: &str, result: &Result<degusta_api::Prediction, ApiError>) -> Response {
    match result {
        Ok(p) => Json(p.clone()).into_response(),
        Err(e) => {
            let status = match e.code.as_str() {
                "provider_error" | "unparsable_responses" => StatusCode::BAD_GATEWAY,
                "internal" => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            };
            tracing::warn!(job, "prediction failed: {e}");
            AppError::new(status, e.code.clone(), e.message.clone()).into_response()
        }
    }
}

pub async fn predict(
    State(st): St,
    Query(q): Query<WaitQuery>,
    Json(req): Json<PredictRequest>,
) -> Result<Response, AppError> {
    let client = st
        .providers
        .get(&req.provider)
        .cloned()
        .ok_or_else(|| {
            AppError::invalid(
                "unknown_provider",
                format!(
                    "provider `{}` is not configured (available: {})",
                    req.provider,
                    st.providers.keys().cloned().collect::<Vec<_>>().join(", ")
                ),
            )
        })?;
    let samples = req.samples.unwrap_or(DEFAULT_SAMPLES);
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(AppError::invalid("bad_samples", format!("samples must be within 1..={MAX_SAMPLES}")));
    }
    if req.method.grid_marked() && req.grid.is_none() {
        return Err(AppError::invalid("missing_grid", format!("method {} needs a grid", req.method)));
    }
    if st.catalog.table(&req.initial.table).is_none() {
        return Err(AppError::invalid("unknown_table", format!("no table {}", req.initial.table)));
    }

    let job = uuid::Uuid::new_v4().simple().to_string();
    let (tx, rx) = watch::channel(None);
    st.jobs.insert(job.clone(), rx.clone());
    let catalog = st.catalog.clone();
    tokio::spawn(async move {
        let table = req.initial.table.clone();
        let prompt_catalog = catalog.clone();
        let built = tokio::task::spawn_blocking(move || {
            build_prompt(req.method, &req.context, &prompt_catalog, &req.initial, req.grid.as_ref()).map(|mut b| {
                b.samples = samples;
                b.label = req.label;
                b
            })
        })
        .await;
        let result = match built {
            Err(e) => Err(api(AppError::internal(e.to_string()))),
            Ok(Err(e)) => Err(api(AppError::invalid("bad_prompt", e.to_string()))),
            Ok(Ok(bundle)) => run_prediction(&client, &bundle, &catalog, &table)
                .await
                .map_err(|e| api(e.into())),
        };
        let _ = tx.send(Some(result));
    });

    let wait = Duration::from_millis(q.wait_ms.unwrap_or(st.config.predict_wait_ms));
    let mut rx = rx;
    let done = tokio::time::timeout(wait, rx.wait_for(Option::is_some)).await;
    match done {
        Ok(Ok(v)) => {
            let result = v.as_ref().expect("waited for a value").clone();
            Ok(outcome_response(&job, &result))
        }
        Ok(Err(_)) => Err(AppError::internal("prediction task ended without a result")),
        Err(_) => Ok((
            StatusCode::ACCEPTED,
            Json(JobTicket {
                poll: format!("/predict/{job}"),
                job,
                status: JobStatus::Running,
            }),
        )
            .into_response()),
    }
}

pub async fn poll_prediction(State(st): St, Path(job): Path<String>) -> Result<Json<JobView>, AppError> {
    let rx = st
        .jobs
        .get(&job)
        .map(|r| r.clone())
        .ok_or_else(|| AppError::not_found(format!("no prediction job {job}")))?;
    let view = match rx.borrow().as_ref() {
        None => JobView {
            job,
            status: JobStatus::Running,
            result: None,
            error: None,
        },
        Some(Ok(p)) => JobView {
            job,
            status: JobStatus::Done,
            result: Some(p.clone()),
            error: None,
        },
        Some(Err(e)) => JobView {
            job,
            status: JobStatus::Failed,
            result: None,
            error: Some(e.clone()),
        },
    };
    Ok(Json(view))
}

pub async fn evaluate(State(st): St, Json(req): Json<EvaluateRequest>) -> Json<EvalReport> {
    Json(evaluate_with(&req.gt, &req.pred, &st.catalog, req.matching.unwrap_or_default()))
}
