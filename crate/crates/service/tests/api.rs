use std::path::Path;
use std::time::Duration;

use degusta_api::{CreateSession, PredictRequest, IDEMPOTENCY_HEADER, REQUEST_ID_HEADER};
use degusta_client::{Client, ClientError};
use degusta_core::dataset::{build_contexts, complete_sessions, DatasetStore, Phase};
use degusta_core::lifting::GridSpec;
use degusta_core::placeholder::write_placeholder_catalog;
use degusta_core::prediction::format_unmarked_answer;
use degusta_core::prompt::Method;
use degusta_core::{Arrangement, Catalog, Placement, PreferenceContext};
use degusta_models::ProviderConfig;
use degusta_service::{Server, ServiceConfig, REPLAY_HEADER};

struct Harness {
    client: Client,
    base: String,
    catalog: Catalog,
    data: std::path::PathBuf,
    _dir: tempfile::TempDir,
}

fn answer(catalog: &Catalog) -> Arrangement {
    Arrangement::new(
        "oak",
        vec![
            Placement::new(75, 0.5, 0.625, 0.0),
            Placement::new(25, 0.3125, 0.625, 0.0),
            Placement::new(50, 0.6875, 0.625, 0.0),
        ],
    )
    .tap(|a| assert!(a.placements.iter().all(|p| catalog.get(p.object).is_some())))
}

trait Tap: Sized {
    fn tap(self, f: impl FnOnce(&Self)) -> Self {
        f(&self);
        self
    }
}
impl<T> Tap for T {}

async fn start(configure: impl FnOnce(&mut ServiceConfig, &Path, &Catalog)) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let catalog = write_placeholder_catalog(dir.path().join("catalog")).unwrap();
    let data = dir.path().join("data");
    let mut cfg = ServiceConfig::new(&data, dir.path().join("catalog"));
    cfg.seed = Some(42);
    configure(&mut cfg, dir.path(), &catalog);
    let server = Server::bind(cfg, "127.0.0.1:0".parse().unwrap()).await.unwrap();
    let (addr, _) = server.spawn();
    let base = format!("http://{addr}");
    Harness {
        client: Client::new(&base).unwrap().with_poll(Duration::from_millis(20), Duration::from_secs(30)),
        base,
        catalog,
        data,
        _dir: dir,
    }
}

async fn plain() -> Harness {
    start(|_, _, _| {}).await
}

/// A scene on the table assigned to `trial`, shifted by `k` so trials differ.
fn scene(table: &str, k: u32, n: usize) -> Arrangement {
    let ids = [75 + k, 25 + k, 50 + k, k, 100 + k];
    Arrangement::new(
        table,
        (0..n)
            .map(|i| Placement::new(ids[i], 0.2 + 0.15 * i as f64, 0.5 + 0.01 * k as f64, 0.0))
            .collect(),
    )
}

#[tokio::test]
async fn catalog_and_assets() {
    let h = plain().await;
    let health = h.client.health().await.unwrap();
    assert_eq!((health.status.as_str(), health.objects), ("ok", 125));
    let cat = h.client.catalog().await.unwrap();
    assert_eq!(cat.objects.len(), 125);
    assert_eq!(cat.tables.len(), h.catalog.tables().len());
    let sprite = reqwest::get(format!("{}{}", h.base, cat.objects[7].sprite_url)).await.unwrap();
    assert_eq!(sprite.status(), 200);
    assert!(sprite.bytes().await.unwrap().starts_with(b"\x89PNG"));
    let table = reqwest::get(format!("{}{}", h.base, cat.tables[0].image_url)).await.unwrap();
    assert_eq!(table.status(), 200);
}

#[tokio::test]
async fn too_few_objects_is_rejected() {
    let h = plain().await;
    let s = h.client.create_session(&CreateSession::default()).await.unwrap();
    let err = h
        .client
        .submit_arrangement(&s.id, 1, &scene(&s.tables[1], 1, 2))
        .await
        .unwrap_err();
    assert_eq!(err.status(), Some(422));
    assert_eq!(err.code(), Some("too_few_objects"));
    let ClientError::Api { error, .. } = err else { unreachable!() };
    assert!(error.request_id.is_some());
    h.client.submit_arrangement(&s.id, 1, &scene(&s.tables[1], 1, 3)).await.unwrap();
}

#[tokio::test]
async fn unknown_session_and_trial_are_404() {
    let h = plain().await;
    let err = h.client.session("nope").await.unwrap_err();
    assert_eq!(err.status(), Some(404));
    let s = h.client.create_session(&CreateSession::default()).await.unwrap();
    let err = h.client.submit_arrangement(&s.id, 6, &scene(&s.tables[0], 0, 3)).await.unwrap_err();
    assert_eq!(err.status(), Some(404));
    let err = h.client.jitter(&s.id, 9).await.unwrap_err();
    assert_eq!(err.status(), Some(404));
    let resp = reqwest::get(format!("{}/no/such/route", h.base)).await.unwrap();
    assert_eq!(resp.status(), 404);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["code"], "not_found");
}

#[tokio::test]
async fn wrong_table_and_unknown_objects_are_422() {
    let h = plain().await;
    let s = h.client.create_session(&CreateSession::default()).await.unwrap();
    let other = h.catalog.tables().iter().find(|t| t.id != s.tables[2]).unwrap().id.clone();
    let err = h.client.submit_arrangement(&s.id, 2, &scene(&other, 2, 3)).await.unwrap_err();
    assert_eq!(err.code(), Some("wrong_table"));
    let mut a = scene(&s.tables[2], 2, 3);
    a.placements[0].object = 999;
    let err = h.client.submit_arrangement(&s.id, 2, &a).await.unwrap_err();
    assert_eq!(err.code(), Some("unknown_object"));
}

#[tokio::test]
async fn jitter_is_drawn_once_per_trial() {
    let h = plain().await;
    let s = h.client.create_session(&CreateSession::default()).await.unwrap();
    let err = h.client.jitter(&s.id, 1).await.unwrap_err();
    assert_eq!(err.status(), Some(422));
    h.client.submit_arrangement(&s.id, 1, &scene(&s.tables[1], 1, 4)).await.unwrap();
    let a = h.client.jitter(&s.id, 1).await.unwrap();
    let b = h.client.jitter(&s.id, 1).await.unwrap();
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.magnitude));
    assert_eq!(a.arrangement.len(), 4);
}

#[tokio::test]
async fn conflicting_resubmission_is_409() {
    let h = plain().await;
    let s = h.client.create_session(&CreateSession::default()).await.unwrap();
    let a = scene(&s.tables[3], 3, 3);
    h.client.submit_arrangement(&s.id, 3, &a).await.unwrap();
    // the same data again is harmless
    h.client.submit_arrangement(&s.id, 3, &a).await.unwrap();
    let err = h.client.submit_arrangement(&s.id, 3, &scene(&s.tables[3], 3, 4)).await.unwrap_err();
    assert_eq!(err.status(), Some(409));
    h.client.rate(&s.id, 3, Phase::Baseline, 80.0).await.unwrap();
    let err = h.client.rate(&s.id, 3, Phase::Baseline, 20.0).await.unwrap_err();
    assert_eq!(err.status(), Some(409));
}

#[tokio::test]
async fn ratings_follow_the_phase_order() {
    let h = plain().await;
    let s = h.client.create_session(&CreateSession::default()).await.unwrap();
    h.client.submit_arrangement(&s.id, 1, &scene(&s.tables[1], 1, 3)).await.unwrap();
    let err = h.client.rate(&s.id, 1, Phase::Jitter, 50.0).await.unwrap_err();
    assert_eq!(err.code(), Some("phase_order"));
    let err = h.client.rate(&s.id, 1, Phase::Baseline, 150.0).await.unwrap_err();
    assert_eq!(err.code(), Some("rating_out_of_range"));
    let r = h.client.rate(&s.id, 1, Phase::Baseline, 100.0).await.unwrap();
    assert_eq!(r.ratings.baseline, Some(1.0));
    let err = h.client.submit_correction(&s.id, 1, &scene(&s.tables[1], 1, 3)).await.unwrap_err();
    assert_eq!(err.code(), Some("phase_order"));
}

#[tokio::test]
async fn idempotency_key_replays_the_first_response() {
    let h = plain().await;
    let http = reqwest::Client::new();
    let send = |body: serde_json::Value| {
        http.post(format!("{}/sessions", h.base))
            .header(IDEMPOTENCY_HEADER, "k-1")
            .json(&body)
            .send()
    };
    let first = send(serde_json::json!({"participant": "p1"})).await.unwrap();
    assert_eq!(first.status(), 201);
    assert!(first.headers().get(REPLAY_HEADER).is_none());
    let first: serde_json::Value = first.json().await.unwrap();
    let again = send(serde_json::json!({"participant": "p1"})).await.unwrap();
    assert_eq!(again.status(), 201);
    assert_eq!(again.headers().get(REPLAY_HEADER).unwrap(), "true");
    let again: serde_json::Value = again.json().await.unwrap();
    assert_eq!(first, again);
    assert_eq!(h.client.sessions().await.unwrap().len(), 1);
    let other = send(serde_json::json!({"participant": "p2"})).await.unwrap();
    assert_eq!(other.status(), 422);
    let body: serde_json::Value = other.json().await.unwrap();
    assert_eq!(body["code"], "idempotency_mismatch");
    assert!(body["request_id"].is_string());
}

#[tokio::test]
async fn request_id_is_echoed() {
    let h = plain().await;
    let resp = reqwest::Client::new()
        .get(format!("{}/sessions/missing", h.base))
        .header(REQUEST_ID_HEADER, "trace-7")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers().get(REQUEST_ID_HEADER).unwrap(), "trace-7");
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["request_id"], "trace-7");
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let h = plain().await;
    let resp = reqwest::Client::new()
        .request(reqwest::Method::OPTIONS, format!("{}/sessions", h.base))
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "content-type,idempotency-key")
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_success());
    assert_eq!(resp.headers().get("access-control-allow-origin").unwrap(), "*");
}

#[tokio::test]
async fn evaluate_identity_is_perfect() {
    let h = plain().await;
    let a = scene("oak", 0, 5);
    let r = h.client.evaluate(&a, &a, None).await.unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert!(r.rmsd.unwrap().abs() < 1e-12);
}

fn mock_harness_config(cfg: &mut ServiceConfig, dir: &Path, catalog: &Catalog) {
    let script = dir.join("script.json");
    let text = format_unmarked_answer(&answer(catalog), catalog);
    std::fs::write(&script, serde_json::json!({"good": text, "bad": "no list here"}).to_string()).unwrap();
    cfg.providers.insert("mock".into(), ProviderConfig::mock(&script));
}

fn request(method: Method, label: &str) -> PredictRequest {
    PredictRequest {
        context: PreferenceContext::new("p"),
        initial: Arrangement::empty("oak"),
        method,
        provider: "mock".into(),
        samples: None,
        grid: None,
        label: Some(label.into()),
    }
}

#[tokio::test]
async fn predict_with_mock_provider() {
    let h = start(mock_harness_config).await;
    let p = h.client.predict(&request(Method::Louma, "good")).await.unwrap();
    assert_eq!(p.plan.samples, 5);
    assert_eq!(p.arrangement, answer(&h.catalog));
    assert_eq!(p.usage.requests, 1);

    let err = h.client.predict(&request(Method::Louma, "bad")).await.unwrap_err();
    assert_eq!((err.status(), err.code()), (Some(502), Some("unparsable_responses")));
    let err = h.client.predict(&request(Method::Louma, "unscripted")).await.unwrap_err();
    assert_eq!((err.status(), err.code()), (Some(502), Some("provider_error")));

    let err = h.client.predict(&request(Method::Logma, "good")).await.unwrap_err();
    assert_eq!(err.code(), Some("missing_grid"));
    let mut r = request(Method::Louma, "good");
    r.provider = "gpt".into();
    assert_eq!(h.client.predict(&r).await.unwrap_err().code(), Some("unknown_provider"));
}

#[tokio::test]
async fn predict_can_be_polled() {
    let h = start(mock_harness_config).await;
    let mut r = request(Method::Mouma, "good");
    r.context = PreferenceContext::from_arrangements("p", [answer(&h.catalog)], &h.catalog);
    let ticket = h.client.submit_prediction(&r).await.unwrap();
    assert!(ticket.poll.ends_with(&ticket.job));
    let p = h.client.wait_for(&ticket.job).await.unwrap();
    assert_eq!(p.arrangement, answer(&h.catalog));
    let mut grid = request(Method::Mogma, "good");
    grid.grid = Some(GridSpec::default());
    // the oracle answers with points, which a grid method cannot place
    let p = h.client.predict(&grid).await.unwrap();
    assert!(p.arrangement.is_empty());
    assert!(p.plan.steps.iter().all(|s| s.invalid.is_some()));
    assert_eq!(h.client.job("nope").await.unwrap_err().status(), Some(404));
}

#[tokio::test]
async fn full_study_flow_yields_complete_records() {
    let h = plain().await;
    let s = h
        .client
        .create_session(&CreateSession {
            participant: Some("walkthrough".into()),
            seed: Some(3),
        })
        .await
        .unwrap();
    assert_eq!(s.tables.len(), 6);
    for trial in 0..6u32 {
        let table = &s.tables[trial as usize];
        let a = scene(table, trial, 3 + (trial as usize % 3));
        h.client.submit_arrangement(&s.id, trial, &a).await.unwrap();
        h.client.rate(&s.id, trial, Phase::Baseline, 90.0).await.unwrap();
        let j = h.client.jitter(&s.id, trial).await.unwrap();
        h.client.rate(&s.id, trial, Phase::Jitter, 40.0 + trial as f64).await.unwrap();
        // the participant puts everything back
        assert_eq!(j.arrangement.len(), a.len());
        h.client.submit_correction(&s.id, trial, &a).await.unwrap();
        h.client.rate(&s.id, trial, Phase::Correction, 85.0).await.unwrap();
    }
    let view = h.client.session(&s.id).await.unwrap();
    assert!(view.complete);
    assert_eq!(view.records.len(), 6);

    let records = DatasetStore::open(&h.data).unwrap().records().unwrap();
    assert_eq!(complete_sessions(&records), vec![s.id.clone()]);
    for k in [0, 2, 4] {
        let (pairs, skipped) = build_contexts(&records, k, &h.catalog);
        assert!(skipped.is_empty());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].context.len(), k);
        assert_eq!(pairs[0].held_out_trial, k as u32 + 1);
    }
}

#[tokio::test]
async fn concurrent_writes_to_one_session_all_land() {
    let h = plain().await;
    let s = h.client.create_session(&CreateSession::default()).await.unwrap();
    let tasks: Vec<_> = (0..6u32)
        .map(|trial| {
            let c = h.client.clone();
            let id = s.id.clone();
            let a = scene(&s.tables[trial as usize], trial, 3);
            tokio::spawn(async move {
                c.submit_arrangement(&id, trial, &a).await.unwrap();
                c.rate(&id, trial, Phase::Baseline, 50.0).await.unwrap();
                c.jitter(&id, trial).await.unwrap()
            })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    let view = h.client.session(&s.id).await.unwrap();
    assert_eq!(view.records.len(), 6);
    assert!(view.records.iter().all(|r| r.jitter.is_some() && r.ratings.baseline == Some(0.5)));
}
