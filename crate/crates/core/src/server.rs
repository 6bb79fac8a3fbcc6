//! Read-only JSON service over an immutable [`PipelineState`].
//!
//! Every response body is `{"version": …, "data": …}` or
//! `{"version": …, "error": kind, "message": …}`. A reload builds a new
//! state off to the side and swaps the pointer, so a request sees exactly
//! one version.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::RagStatus;
use crate::metrics::{Metric, Position};
use crate::pipeline::{PipelineConfig, PipelineState, Workspace};
use crate::predictor::{Prediction, Predictor};
use crate::recruitment::{build_shortlist, swarm, verdict, ShortlistRequest, VerdictReport, WeightProfile};

/// The current state plus, optionally, where to reload it from.
pub struct StateHandle {
    current: RwLock<Arc<PipelineState>>,
    source: Option<(Workspace, PipelineConfig)>,
}

impl StateHandle {
    pub fn new(state: PipelineState) -> Self {
        StateHandle { current: RwLock::new(Arc::new(state)), source: None }
    }

    pub fn with_source(state: PipelineState, workspace: Workspace, config: PipelineConfig) -> Self {
        StateHandle { current: RwLock::new(Arc::new(state)), source: Some((workspace, config)) }
    }

    pub fn current(&self) -> Arc<PipelineState> {
        self.current.read().expect("state lock").clone()
    }

    pub fn swap(&self, state: PipelineState) {
        *self.current.write().expect("state lock") = Arc::new(state);
    }

    /// Rebuilds from the source directory and swaps it in.
    pub fn reload(&self) -> Result<String> {
        let (ws, cfg) = self.source.as_ref().ok_or_else(|| Error::Config("service has no reload source".into()))?;
        let state = ws.load_state(cfg.clone())?;
        let version = state.version.clone();
        self.swap(state);
        Ok(version)
    }
}

type Shared = Arc<StateHandle>;

#[derive(Serialize)]
struct Envelope<'a, T> {
    version: &'a str,
    data: T,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    version: &'a str,
    error: &'static str,
    message: String,
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::MissingEntity(_) | Error::UnknownTeam(_) | Error::UnknownLeague(_) | Error::NoData => StatusCode::NOT_FOUND,
        Error::EmptyAfterFilters | Error::EmptyCohort => StatusCode::UNPROCESSABLE_ENTITY,
        Error::AllZeroWeights
        | Error::Config(_)
        | Error::Json(_)
        | Error::UnknownMetric(_)
        | Error::UnknownPosition(_)
        | Error::MalformedRow { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn respond<T: Serialize>(version: &str, result: Result<T>) -> Response {
    match result {
        Ok(data) => (StatusCode::OK, Json(Envelope { version, data })).into_response(),
        Err(e) => {
            let body = ErrorBody { version, error: e.kind(), message: e.to_string() };
            (status_for(&e), Json(body)).into_response()
        }
    }
}

/// Runs `f` on a blocking thread against one state snapshot.
async fn with_state<T, F>(shared: Shared, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&PipelineState) -> Result<T> + Send + 'static,
{
    let state = shared.current();
    let out = tokio::task::spawn_blocking(move || {
        let result = f(&state);
        respond(&state.version, result)
    })
    .await;
    out.unwrap_or_else(|_| StatusCode::INTERNAL_SERVER_ERROR.into_response())
}

type QueryResult<T> = std::result::Result<Query<T>, QueryRejection>;

fn bad_query(s: &Shared, e: QueryRejection) -> Response {
    respond::<()>(&s.current().version, Err(Error::Config(e.body_text())))
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::Config(format!("invalid request body: {e}")))
}

fn default_date(state: &PipelineState, date: Option<NaiveDate>) -> Result<NaiveDate> {
    date.or_else(|| state.stores().next_date()).ok_or(Error::NoData)
}

#[derive(Debug, Deserialize)]
struct PlayersQuery {
    league: Option<String>,
    team: Option<String>,
    position: Option<Position>,
}

#[derive(Debug, Serialize)]
pub struct PlayerSummary {
    pub player_id: String,
    pub name: Option<String>,
    pub position: Position,
    pub team: String,
    pub league: String,
    pub last_played: NaiveDate,
    pub minutes: f64,
    pub rag: RagStatus,
}

fn players(state: &PipelineState, q: &PlayersQuery) -> Vec<PlayerSummary> {
    let cfg = &state.features.config;
    state
        .features
        .players
        .iter()
        .filter_map(|((player, position), tl)| {
            let s = tl.current()?;
            let keep = q.league.as_ref().is_none_or(|l| *l == s.context.league)
                && q.team.as_ref().is_none_or(|t| *t == s.context.team)
                && q.position.is_none_or(|p| p == *position);
            keep.then(|| PlayerSummary {
                player_id: player.clone(),
                name: state.metadata.players.get(player).map(|m| m.name.clone()),
                position: *position,
                team: s.context.team.clone(),
                league: s.context.league.clone(),
                last_played: s.date,
                minutes: s.cum_minutes,
                rag: crate::features::rag_status(s.cum_minutes, cfg.prior_constant, cfg.red_minutes),
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
pub struct PredictRequest {
    pub player: String,
    pub position: Position,
    /// Omitted: the player stays at their current club.
    #[serde(default)]
    pub destination_team: Option<String>,
    #[serde(default)]
    pub date: Option<NaiveDate>,
}

pub fn predict(state: &PipelineState, r: &PredictRequest) -> Result<Prediction> {
    let predictor = Predictor::new(state.stores(), &state.transfer_model);
    let date = default_date(state, r.date)?;
    let scenario = match &r.destination_team {
        Some(team) => predictor.move_scenario(&r.player, r.position, team, date)?,
        None => predictor.stay_scenario(&r.player, r.position, date)?,
    };
    predictor.predict(&scenario)
}

#[derive(Debug, Deserialize)]
pub struct CompareRequest {
    pub player: String,
    pub position: Position,
    pub destinations: Vec<String>,
    pub weights: BTreeMap<Metric, f64>,
    #[serde(default)]
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub origin: Prediction,
    pub destinations: Vec<(Prediction, VerdictReport)>,
}

/// Side-by-side forecasts for up to four destinations with verdicts.
pub fn compare(state: &PipelineState, r: &CompareRequest) -> Result<Comparison> {
    if r.destinations.is_empty() || r.destinations.len() > 4 {
        return Err(Error::Config("between one and four destinations".into()));
    }
    let weights = WeightProfile::new(r.weights.clone())?;
    let predictor = Predictor::new(state.stores(), &state.transfer_model);
    let date = default_date(state, r.date)?;
    let origin = predictor.predict(&predictor.stay_scenario(&r.player, r.position, date)?)?;
    let mut destinations = Vec::new();
    for team in &r.destinations {
        let p = predictor.predict(&predictor.move_scenario(&r.player, r.position, team, date)?)?;
        let v = verdict(&p, &origin, &weights, &state.config.verdict);
        destinations.push((p, v));
    }
    Ok(Comparison { origin, destinations })
}

#[derive(Debug, Deserialize)]
pub struct SwarmQuery {
    pub league: String,
    pub position: Position,
    pub metric: Metric,
    pub player: String,
    /// Destination of the subject scenario; omitted means staying put.
    #[serde(default)]
    pub destination_team: Option<String>,
    #[serde(default)]
    pub date: Option<NaiveDate>,
}

pub fn swarm_for(state: &PipelineState, q: &SwarmQuery) -> Result<crate::recruitment::SwarmDataset> {
    let predictor = Predictor::new(state.stores(), &state.transfer_model);
    let date = default_date(state, q.date)?;
    let scenario = match &q.destination_team {
        Some(team) => predictor.move_scenario(&q.player, q.position, team, date)?,
        None => predictor.stay_scenario(&q.player, q.position, date)?,
    };
    swarm(&predictor, &q.league, q.position, q.metric, &scenario)
}

pub fn router(handle: Arc<StateHandle>) -> Router {
    Router::new()
        .route("/version", get(|State(s): State<Shared>| async move { with_state(s, |_| Ok(())).await }))
        .route(
            "/players",
            get(|State(s): State<Shared>, q: QueryResult<PlayersQuery>| async move {
                match q {
                    Ok(Query(q)) => with_state(s, move |st| Ok(players(st, &q))).await,
                    Err(e) => bad_query(&s, e),
                }
            }),
        )
        .route(
            "/predict",
            post(|State(s): State<Shared>, body: Bytes| async move {
                with_state(s, move |st| predict(st, &parse_body(&body)?)).await
            }),
        )
        .route(
            "/compare",
            post(|State(s): State<Shared>, body: Bytes| async move {
                with_state(s, move |st| compare(st, &parse_body(&body)?)).await
            }),
        )
        .route(
            "/shortlist",
            post(|State(s): State<Shared>, body: Bytes| async move {
                with_state(s, move |st| {
                    let request: ShortlistRequest = parse_body(&body)?;
                    let predictor = Predictor::new(st.stores(), &st.transfer_model);
                    build_shortlist(&predictor, &st.metadata, &request)
                })
                .await
            }),
        )
        .route(
            "/swarm",
            get(|State(s): State<Shared>, q: QueryResult<SwarmQuery>| async move {
                match q {
                    Ok(Query(q)) => with_state(s, move |st| swarm_for(st, &q)).await,
                    Err(e) => bad_query(&s, e),
                }
            }),
        )
        .route(
            "/ratings/{team}/history",
            get(|State(s): State<Shared>, Path(team): Path<String>| async move {
                with_state(s, move |st| {
                    let h = st.ratings.team_history(&team);
                    if h.is_empty() {
                        Err(Error::UnknownTeam(team))
                    } else {
                        Ok(h)
                    }
                })
                .await
            }),
        )
        .route(
            "/reload",
            post(|State(s): State<Shared>| async move {
                let handle = s.clone();
                let result = tokio::task::spawn_blocking(move || handle.reload()).await;
                let result = result.unwrap_or_else(|_| Err(Error::Config("reload panicked".into())));
                let version = s.current().version.clone();
                respond(&version, result)
            }),
        )
        .with_state(handle)
}

pub async fn serve(handle: Arc<StateHandle>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(handle))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
