use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use debtfree_cli::server::router;
use debtfree_core::active::{Policy, PolicyConfig};
use debtfree_core::pipeline::{run_cell, Dataset, RunOptions, Treatment};
use debtfree_core::session::SessionStore;
use debtfree_core::synthetic::{generate, SyntheticSpec};
use serde_json::{json, Value};
use tower::ServiceExt;

fn dataset() -> Dataset {
    Dataset::new(generate(&SyntheticSpec::uniform(3, 120, 12, 5)), 4000).unwrap()
}

fn app() -> Router {
    router(
        Arc::new(SessionStore::in_memory("default", dataset())),
        None,
    )
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes)
        .unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into_owned()));
    (status, value)
}

fn config(policy: &str, seed: u64) -> Value {
    json!({ "policy": policy, "seed": seed, "n_trees": 10, "retrain_every": 3 })
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, Method::POST, "/api/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn lists_corpora() {
    let app = app();
    let (status, v) = call(&app, Method::GET, "/api/v1/corpora", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["corpora"], json!(["default"]));
}

#[tokio::test]
async fn label_flow_and_error_statuses() {
    let app = app();
    let id = create(
        &app,
        json!({ "target_project": "project-a", "config": config("falcon", 1) }),
    )
    .await;
    let (status, next) = call(
        &app,
        Method::GET,
        &format!("/api/v1/sessions/{id}/next"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(next["stopped"], false);
    assert_eq!(next["project"], "project-a");
    let cid = next["comment_id"].as_u64().unwrap();
    let labels = format!("/api/v1/sessions/{id}/labels");
    let body = json!({ "comment_id": cid, "label": "satd" });
    let (status, p) = call(&app, Method::POST, &labels, Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["reviewed"], 1);
    assert_eq!(p["found"], 1);

    let (status, _) = call(&app, Method::POST, &labels, Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let bad = json!({ "comment_id": 9999, "label": "satd" });
    let (status, _) = call(&app, Method::POST, &labels, Some(bad)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/api/v1/sessions/missing/next", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, p) = call(
        &app,
        Method::POST,
        &format!("/api/v1/sessions/{id}/stop"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["stopped"], true);
    assert_eq!(p["stop_reason"], "manual");
    let (_, next) = call(
        &app,
        Method::GET,
        &format!("/api/v1/sessions/{id}/next"),
        None,
    )
    .await;
    assert_eq!(next["stopped"], true);
}

#[tokio::test]
async fn create_validation_errors() {
    let app = app();
    let (status, _) = call(
        &app,
        Method::POST,
        "/api/v1/sessions",
        Some(json!({ "target_project": "nope" })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        Method::POST,
        "/api/v1/sessions",
        Some(json!({ "target_project": "project-a", "config": { "policy": "emblem" }, "filter": "cla" })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(
        &app,
        Method::POST,
        "/api/v1/sessions",
        Some(json!({ "target_project": "project-a", "bogus": 1 })),
    )
    .await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn oracle_needs_a_truth_session() {
    let app = app();
    let id = create(
        &app,
        json!({ "target_project": "project-a", "config": config("hard", 0) }),
    )
    .await;
    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/api/v1/sessions/{id}/oracle?steps=5"),
        None,
    )
    .await;
    assert!(status.is_client_error(), "{status}");
}

#[tokio::test]
async fn truth_session_matches_the_simulator() {
    let ds = dataset();
    let app = app();
    for (policy, p) in [("hard", Policy::Hard), ("falcon", Policy::Falcon)] {
        let id = create(
            &app,
            json!({
                "target_project": "project-b",
                "config": config(policy, 4),
                "pseudo_label": "cla",
                "oracle": "truth",
            }),
        )
        .await;
        let (status, p_done) = call(
            &app,
            Method::POST,
            &format!("/api/v1/sessions/{id}/oracle?steps=100000"),
            None,
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(p_done["stopped"], true);
        let (_, report) = call(
            &app,
            Method::GET,
            &format!("/api/v1/sessions/{id}/export?format=report_json"),
            None,
        )
        .await;

        let opts = RunOptions {
            policy: PolicyConfig {
                n_trees: 10,
                retrain_every: 3,
                ..PolicyConfig::default()
            },
            ..RunOptions::default()
        };
        let treatment = Treatment::Active {
            pseudo_label: true,
            filter: None,
            policy: p,
        };
        let sim = run_cell(&ds, &treatment.name(), treatment, "project-b", 4, &opts).unwrap();
        assert_eq!(report["reviewed"], sim.report.reviewed, "{policy}");
        assert_eq!(
            report["counts"],
            serde_json::to_value(sim.report.counts).unwrap()
        );
        assert_eq!(
            report["stop_reason"],
            serde_json::to_value(sim.report.stop_reason).unwrap()
        );

        let (_, trace) = call(
            &app,
            Method::GET,
            &format!("/api/v1/sessions/{id}/trace"),
            None,
        )
        .await;
        assert_eq!(
            trace["entries"],
            serde_json::to_value(sim.trace.unwrap().entries).unwrap()
        );
    }
}

#[tokio::test]
async fn exports_have_expected_shapes() {
    let app = app();
    let id = create(
        &app,
        json!({ "target_project": "project-c", "config": config("falcon", 2), "oracle": "truth" }),
    )
    .await;
    call(
        &app,
        Method::POST,
        &format!("/api/v1/sessions/{id}/oracle?steps=5"),
        None,
    )
    .await;
    let (status, trace) = call(
        &app,
        Method::GET,
        &format!("/api/v1/sessions/{id}/export?format=trace_csv"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trace.as_str().unwrap().lines().count(), 6);
    let (status, labels) = call(
        &app,
        Method::GET,
        &format!("/api/v1/sessions/{id}/export?format=labels_csv"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(labels.as_str().unwrap().lines().count() > 1);
    let (status, _) = call(
        &app,
        Method::GET,
        &format!("/api/v1/sessions/{id}/export?format=pdf"),
        None,
    )
    .await;
    assert!(status.is_client_error());
}
