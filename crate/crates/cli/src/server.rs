//! HTTP service behind the listening-test client.
//!
//! Sessions are rebuilt deterministically from the assessor id, so the
//! service keeps no session state beyond a cache and the rating store.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use plc_lab::mushra::{
    compute_ranking, validate_rating, MushraError, MushraSession, Rating, RatingStore,
    SessionConfig, SessionView,
};

/// Environment variable holding the organizer key for `/api/results`.
pub const RESULTS_KEY_ENV: &str = "PLC_LAB_RESULTS_KEY";
pub const AUDIO_PREFIX: &str = "/api/audio/";

pub struct AppState {
    pub config: SessionConfig,
    pub store: Mutex<RatingStore>,
    /// None disables `/api/results` entirely.
    pub results_key: Option<String>,
    sessions: Mutex<HashMap<String, MushraSession>>,
    tokens: Mutex<HashMap<String, PathBuf>>,
}

impl AppState {
    pub fn new(config: SessionConfig, store: RatingStore, results_key: Option<String>) -> Self {
        Self {
            config,
            store: Mutex::new(store),
            results_key,
            sessions: Mutex::default(),
            tokens: Mutex::default(),
        }
    }

    fn session(&self, assessor: &str) -> Result<MushraSession, MushraError> {
        if let Some(s) = self.sessions.lock().unwrap().get(assessor) {
            return Ok(s.clone());
        }
        let s = self.config.session_for(assessor)?;
        self.tokens.lock().unwrap().extend(s.token_paths());
        self.sessions
            .lock()
            .unwrap()
            .insert(assessor.to_string(), s.clone());
        Ok(s)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/audio/{token}", get(get_audio))
        .route("/api/ratings", post(post_ratings))
        .route("/api/results", get(get_results))
        .with_state(state)
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (
        status,
        Json(ErrorBody {
            error: msg.to_string(),
        }),
    )
        .into_response()
}

#[derive(Deserialize)]
struct SessionQuery {
    assessor: Option<String>,
}

#[derive(Serialize)]
struct SessionResponse {
    assessor_id: String,
    #[serde(flatten)]
    session: SessionView,
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Query(q): Query<SessionQuery>,
) -> Response {
    let Some(assessor) = q.assessor.filter(|a| !a.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing assessor");
    };
    match state.session(&assessor) {
        Ok(s) => Json(SessionResponse {
            assessor_id: assessor,
            session: s.public_view(AUDIO_PREFIX),
        })
        .into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn get_audio(State(state): State<Arc<AppState>>, Path(token): Path<String>) -> Response {
    let path = state.tokens.lock().unwrap().get(&token).cloned();
    let Some(path) = path else {
        return error(StatusCode::NOT_FOUND, "unknown token");
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Err(e) => {
            log::error!("reading {}: {e}", path.display());
            error(StatusCode::INTERNAL_SERVER_ERROR, "stimulus unavailable")
        }
    }
}

#[derive(Serialize)]
struct Stored {
    stored: usize,
}

async fn post_ratings(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<Vec<Rating>>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let Json(batch) = match payload {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let mut by_assessor: BTreeMap<String, Vec<Rating>> = BTreeMap::new();
    for r in batch {
        by_assessor
            .entry(r.assessor_id.clone())
            .or_default()
            .push(r);
    }
    // Validate the whole request before storing any of it.
    let mut sessions = Vec::new();
    for (assessor, ratings) in &by_assessor {
        let session = match state.session(assessor) {
            Ok(s) => s,
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e),
        };
        for r in ratings {
            if let Err(e) = validate_rating(&session, r) {
                return error(StatusCode::BAD_REQUEST, e);
            }
        }
        sessions.push(session);
    }
    let mut store = state.store.lock().unwrap();
    let mut stored = 0;
    for (session, (_, ratings)) in sessions.iter().zip(by_assessor) {
        stored += ratings.len();
        if let Err(e) = store.record_batch(session, ratings) {
            return error(StatusCode::INTERNAL_SERVER_ERROR, e);
        }
    }
    Json(Stored { stored }).into_response()
}

#[derive(Deserialize)]
struct ResultsQuery {
    key: Option<String>,
}

async fn get_results(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<ResultsQuery>,
) -> Response {
    let Some(expected) = &state.results_key else {
        return error(
            StatusCode::FORBIDDEN,
            format!("results disabled: {RESULTS_KEY_ENV} not set"),
        );
    };
    let given = headers
        .get("x-results-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or(q.key);
    if given.as_deref() != Some(expected.as_str()) {
        return error(StatusCode::UNAUTHORIZED, "bad or missing results key");
    }
    let ratings = state.store.lock().unwrap().ratings();
    match compute_ranking(&ratings, &state.config.trial_clips, &state.config.systems) {
        Ok(r) => Json(r).into_response(),
        Err(e @ MushraError::IncompleteTrials(_)) => error(StatusCode::CONFLICT, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
