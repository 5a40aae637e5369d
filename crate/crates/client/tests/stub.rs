//! The client against a hand-rolled server that misbehaves on purpose.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use degusta_api::IDEMPOTENCY_HEADER;
use degusta_client::{Client, ClientError};
use degusta_core::evaluation::{evaluate, EvalReport};
use degusta_core::Arrangement;

#[derive(Clone, Default)]
struct Seen(Arc<Mutex<Vec<String>>>);

async fn flaky_evaluate(State(seen): State<Seen>, headers: HeaderMap) -> Response {
    let key = headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    let attempt = {
        let mut seen = seen.0.lock().unwrap();
        seen.push(key);
        seen.len()
    };
    if attempt < 3 {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    let empty = Arrangement::empty("oak");
    let catalog = degusta_core::Catalog::from_parts("/unused", vec![], vec![]).unwrap();
    Json(evaluate(&empty, &empty, &catalog)).into_response()
}

async fn serve(seen: Seen) -> Client {
    let app = Router::new()
        .route("/evaluate", post(flaky_evaluate))
        .route("/health", get(|| async { (StatusCode::BAD_GATEWAY, "upstream fell over") }))
        .route("/tables", get(|| async { "not json" }))
        .with_state(seen);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Client::new(format!("http://{addr}/")).unwrap()
}

#[tokio::test]
async fn unavailable_is_retried_with_the_same_key() {
    let seen = Seen::default();
    let client = serve(seen.clone()).await;
    let empty = Arrangement::empty("oak");
    let report: EvalReport = client.evaluate(&empty, &empty, None).await.unwrap();
    assert_eq!(report.gt_objects, 0);
    let keys = seen.0.lock().unwrap().clone();
    assert_eq!(keys.len(), 3);
    assert!(!keys[0].is_empty());
    assert!(keys.iter().all(|k| k == &keys[0]), "{keys:?}");

    // a second call gets its own key
    client.evaluate(&empty, &empty, None).await.unwrap();
    let keys = seen.0.lock().unwrap().clone();
    assert_ne!(keys[3], keys[0]);
}

#[tokio::test]
async fn non_json_errors_keep_their_body() {
    let client = serve(Seen::default()).await;
    match client.health().await.unwrap_err() {
        ClientError::Api { status, error } => {
            assert_eq!(status, 502);
            assert_eq!(error.code, "unknown");
            assert_eq!(error.message, "upstream fell over");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(client.tables().await.unwrap_err(), ClientError::Decode(_)));
}

#[tokio::test]
async fn closed_port_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = Client::new(format!("http://{addr}"))
        .unwrap()
        .with_poll(Duration::from_millis(10), Duration::from_millis(10));
    let err = client.health().await.unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)), "{err:?}");
    assert_eq!(err.status(), None);
}
