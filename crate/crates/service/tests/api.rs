use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dragrank_core::{RankingResult, SessionConfig};
use dragrank_service::{router, AppState, Store};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn banks_csv(n: usize) -> String {
    let types = ["Large", "Joint", "City", "Rural"];
    let mut s = String::from("bank,type,asset,npl[%],car[%]\n");
    for i in 0..n {
        s.push_str(&format!(
            "bank{i:02},{},{},{},{}\n",
            types[i % 4],
            200.0 - i as f64 * 5.0 + ((i * 7) % 6) as f64,
            ((i * 13) % 17) as f64 / 10.0,
            10.0 + ((i * 5) % 9) as f64
        ));
    }
    s
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Body>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            b
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn upload(app: &Router, csv: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method("POST")
        .uri("/sessions")
        .header("content-type", "text/csv")
        .body(Body::from(csv.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn json_body(v: Value) -> Option<Body> {
    Some(Body::from(v.to_string()))
}

fn app() -> Router {
    router(Arc::new(AppState::new(SessionConfig::default(), None)))
}

async fn entity_at(app: &Router, sid: &str, rank: usize) -> String {
    let (_, r) = call(app, "GET", &format!("/sessions/{sid}/rankings"), None).await;
    r["entities"][rank - 1]["entityId"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn upload_creates_default_scheme() {
    let app = app();
    let (status, body) = upload(&app, &banks_csv(30)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["schemes"].as_array().unwrap().len(), 1);
    assert_eq!(body["schemes"][0]["label"], "Default");
    assert_eq!(body["ranking"]["entities"].as_array().unwrap().len(), 30);
    assert_eq!(body["indicators"][1]["unit"], "%");

    let (again, body2) = upload(&app, &banks_csv(30)).await;
    assert_eq!(again, StatusCode::CREATED);
    assert_ne!(body["sessionId"], body2["sessionId"]);
}

#[tokio::test]
async fn malformed_upload_is_400_with_row() {
    let app = app();
    let (status, body) = upload(&app, "bank,type,a,b\nx,T,1,2\ny,T,oops,3\n").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let msg = body["error"]["message"].as_str().unwrap();
    assert!(msg.contains("oops"), "{msg}");
    assert!(msg.contains('3') || msg.contains('2'), "{msg}");
}

#[tokio::test]
async fn drag_save_compare_flow() {
    let app = app();
    let (_, created) = upload(&app, &banks_csv(30)).await;
    let sid = created["sessionId"].as_str().unwrap().to_string();
    let moved = entity_at(&app, &sid, 5).await;

    let (status, preview) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/drags"),
        json_body(json!({ "entityId": moved, "fromRank": 5, "toRank": 13 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{preview}");
    for slot in ["local", "global", "type"] {
        assert!(preview[slot].is_object(), "{slot} missing: {preview}");
        assert_eq!(preview[slot]["result"]["entities"].as_array().unwrap().len(), 30);
    }
    // preview does not touch saved schemes
    let (_, schemes) = call(&app, "GET", &format!("/sessions/{sid}/schemes"), None).await;
    assert_eq!(schemes.as_array().unwrap().len(), 1);

    let (status, _) = call(&app, "GET", &format!("/sessions/{sid}/comparison"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, saved) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/schemes"),
        json_body(json!({ "which": "type", "label": "" })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(saved["scheme"]["label"], "Scheme 1 (type)");
    assert_eq!(saved["ranking"], preview["type"]["result"]);

    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/schemes"),
        json_body(json!({ "which": "type" })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, cmp) = call(&app, "GET", &format!("/sessions/{sid}/comparison"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cmp["axes"].as_array().unwrap().len(), 2);
    assert_eq!(cmp["draggedEntity"], moved.as_str());

    let scheme_id = saved["scheme"]["id"].as_str().unwrap();
    let (status, r) = call(&app, "GET", &format!("/sessions/{sid}/rankings?scheme={scheme_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r, saved["ranking"]);

    let (status, proj) = call(&app, "GET", &format!("/sessions/{sid}/projection?scheme=default"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(proj["points"].as_array().unwrap().len(), 30);
    let (_, proj2) = call(&app, "GET", &format!("/sessions/{sid}/projection?scheme=default"), None).await;
    assert_eq!(proj, proj2);
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let (status, _) = call(&app, "GET", "/sessions/nope/rankings", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, created) = upload(&app, &banks_csv(12)).await;
    let sid = created["sessionId"].as_str().unwrap();

    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/drags"),
        json_body(json!({ "entityId": "ghost", "toRank": 2 })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/drags"),
        json_body(json!({ "entityId": "bank01", "toRank": 40 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/schemes"),
        json_body(json!({ "which": "local" })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = call(&app, "GET", &format!("/sessions/{sid}/projection?scheme=zzz"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", &format!("/sessions/{sid}/rankings?scheme=zzz"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn persisted_sessions_replay_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::new(SessionConfig::default(), Some(Store::open(dir.path()).unwrap())));
    let app = router(state);
    let (_, created) = upload(&app, &banks_csv(20)).await;
    let sid = created["sessionId"].as_str().unwrap().to_string();
    for (from, to, which) in [(3, 11, "global"), (15, 2, "local")] {
        let moved = entity_at(&app, &sid, from).await;
        call(
            &app,
            "POST",
            &format!("/sessions/{sid}/drags"),
            json_body(json!({ "entityId": moved, "toRank": to })),
        )
        .await;
        let (status, _) = call(
            &app,
            "POST",
            &format!("/sessions/{sid}/schemes"),
            json_body(json!({ "which": which })),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let (_, before) = call(&app, "GET", &format!("/sessions/{sid}/comparison"), None).await;

    let restored = Arc::new(AppState::new(SessionConfig::default(), Some(Store::open(dir.path()).unwrap())));
    assert_eq!(restored.restore().unwrap(), 1);
    let app2 = router(restored);
    let (status, after) = call(&app2, "GET", &format!("/sessions/{sid}/comparison"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    for scheme in ["default", "s1-global", "s2-local"] {
        let uri = format!("/sessions/{sid}/rankings?scheme={scheme}");
        let a: RankingResult = serde_json::from_value(call(&app, "GET", &uri, None).await.1).unwrap();
        let b: RankingResult = serde_json::from_value(call(&app2, "GET", &uri, None).await.1).unwrap();
        assert_eq!(a, b);
    }
}
