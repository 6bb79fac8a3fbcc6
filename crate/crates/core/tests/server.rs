mod common;

use std::sync::{Arc, OnceLock};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

use transfer_portal::pipeline::{PipelineConfig, PipelineState};
use transfer_portal::server::{router, StateHandle};
use transfer_portal::synthworld::{generate, WorldConfig};

fn state() -> &'static PipelineState {
    static STATE: OnceLock<PipelineState> = OnceLock::new();
    STATE.get_or_init(|| {
        let world = generate(&WorldConfig::small(11)).unwrap();
        PipelineState::build(&world.records, world.topology, world.metadata, PipelineConfig::default()).unwrap().0
    })
}

fn app() -> axum::Router {
    router(Arc::new(StateHandle::new(state().clone())))
}

async fn call(request: Request<Body>) -> (StatusCode, Vec<u8>) {
    let response = app().oneshot(request).await.unwrap();
    let status = response.status();
    (status, to_bytes(response.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get(uri: &str) -> (StatusCode, Value) {
    let (status, body) = call(Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap())
}

async fn post_raw(uri: &str, body: &Value) -> (StatusCode, Vec<u8>) {
    let request = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    call(request).await
}

async fn post(uri: &str, body: &Value) -> (StatusCode, Value) {
    let (status, bytes) = post_raw(uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn every_body_carries_the_version() {
    let (status, body) = get("/version").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["version"], state().version.as_str());
    let (status, body) = get("/ratings/NOPE/history").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["version"], state().version.as_str());
    assert_eq!(body["error"], "UnknownTeam");
}

#[tokio::test]
async fn predict_happy_path_is_deterministic() {
    let s = common::subject(state());
    let request = json!({"player": s.player, "position": s.position, "destination_team": s.destination});
    let (status, first) = post_raw("/predict", &request).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = post_raw("/predict", &request).await;
    assert_eq!(first, second);
    let body: Value = serde_json::from_slice(&first).unwrap();
    let data = &body["data"];
    assert_eq!(data["scenario"]["destination_league"], s.destination_league.as_str());
    assert_eq!(data["scenario"]["origin_team"], s.team.as_str());
    for (_, v) in data["percentiles"].as_object().unwrap() {
        assert!((0.0..=100.0).contains(&v.as_f64().unwrap()));
    }
}

#[tokio::test]
async fn predict_unknown_entities_are_not_found() {
    let s = common::subject(state());
    let (status, body) = post("/predict", &json!({"player": s.player, "position": s.position, "destination_team": "NOPE"})).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownTeam")));
    let (status, _) = post("/predict", &json!({"player": "NOBODY", "position": "W"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = post("/predict", &json!({"player": s.player, "position": "XX"})).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("Config")));
}

#[tokio::test]
async fn shortlist_rejects_zero_weights() {
    let s = common::subject(state());
    let request = json!({"destination_team": s.destination, "position": "W", "weights": {"xg": 0.0, "xa": 0.0}});
    let (status, body) = post("/shortlist", &request).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "AllZeroWeights");
}

#[tokio::test]
async fn shortlist_ranks_and_filters() {
    let s = common::subject(state());
    let request = json!({"destination_team": s.destination, "position": "W", "weights": {"xg": 1.0, "take_ons": 0.5}, "k": 4});
    let (status, first) = post_raw("/shortlist", &request).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first, post_raw("/shortlist", &request).await.1);
    let body: Value = serde_json::from_slice(&first).unwrap();
    let entries = body["data"].as_array().unwrap();
    assert!(!entries.is_empty() && entries.len() <= 4);
    let scores: Vec<f64> = entries.iter().map(|e| e["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(entries.iter().all(|e| e["candidate"]["team"] != s.destination.as_str()));

    let strict = json!({"destination_team": s.destination, "position": "W", "weights": {"xg": 1.0}, "filters": {"max_age": 1}});
    let (status, body) = post("/shortlist", &strict).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("EmptyAfterFilters")));
}

#[tokio::test]
async fn compare_and_swarm() {
    let s = common::subject(state());
    let request = json!({"player": s.player, "position": "W", "destinations": [s.destination], "weights": {"xg": 1.0, "xa": 1.0}});
    let (status, body) = post("/compare", &request).await;
    assert_eq!(status, StatusCode::OK);
    let verdict = &body["data"]["destinations"][0][1]["verdict"];
    assert!(["Hot", "Tepid", "Not"].contains(&verdict.as_str().unwrap()), "{verdict}");

    let uri = format!("/swarm?league={}&position=W&metric=xg&player={}", s.league, s.player);
    let (status, body) = get(&uri).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["data"]["points"][0]["highlight"], "subject");
    let (status, _) = get(&format!("/swarm?league=NOPE&position=W&metric=xg&player={}", s.player)).await;
    assert!(status.is_client_error());
    let (status, body) = get("/swarm?league=x").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("Config")));
}

#[tokio::test]
async fn players_and_history() {
    let s = common::subject(state());
    let (status, body) = get(&format!("/players?team={}&position=W", s.team)).await;
    assert_eq!(status, StatusCode::OK);
    let players = body["data"].as_array().unwrap();
    assert!(players.iter().any(|p| p["player_id"] == s.player.as_str()));
    assert!(players.iter().all(|p| p["team"] == s.team.as_str()));
    let (status, body) = get(&format!("/ratings/{}/history", s.team)).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!body["data"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn reload_without_source_is_an_error() {
    let (status, body) = post("/reload", &json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["version"], state().version.as_str());
}
