//! HTTP+JSON tutoring service.
//!
//! Graphs are built on first use per problem and shared. Each session sits
//! behind its own lock, so requests on one session apply in order while
//! different sessions proceed independently.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, SystemTime};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prooftutor::{Corpus, CorpusProblem, KgBounds, KgError, KnowledgeGraph};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::session::{Session, SessionError, SessionView, StepSubmission, Verbosity};

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::GoalReached => StatusCode::CONFLICT,
            SessionError::Unparseable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Kg(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type Shared<T> = Arc<tokio::sync::Mutex<T>>;

pub struct AppState {
    problems: BTreeMap<String, Arc<CorpusProblem>>,
    graphs: Mutex<HashMap<String, Arc<OnceLock<Arc<KnowledgeGraph>>>>>,
    bounds: KgBounds,
    ttl: Duration,
    sessions: Mutex<HashMap<String, Shared<Session>>>,
}

impl AppState {
    pub fn new(corpus: &Corpus, bounds: KgBounds, ttl: Duration) -> AppState {
        AppState {
            problems: corpus
                .problems
                .iter()
                .map(|p| (p.problem.id.clone(), Arc::new(p.clone())))
                .collect(),
            graphs: Mutex::default(),
            bounds,
            ttl,
            sessions: Mutex::default(),
        }
    }

    async fn graph(&self, problem: &Arc<CorpusProblem>) -> Result<Arc<KnowledgeGraph>, ApiError> {
        let cell = self
            .graphs
            .lock()
            .unwrap()
            .entry(problem.problem.id.clone())
            .or_default()
            .clone();
        let (problem, bounds) = (problem.clone(), self.bounds);
        tokio::task::spawn_blocking(move || cell.get_or_init(|| Arc::new(problem.build_kg(bounds))).clone())
            .await
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    }

    /// Looks up a live session, dropping it if it has expired.
    fn session(&self, id: &str) -> Result<Shared<Session>, ApiError> {
        let mut sessions = self.sessions.lock().unwrap();
        let now = SystemTime::now();
        sessions.retain(|_, s| s.try_lock().map_or(true, |s| !s.expired(now)));
        sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no session {id:?}")))
    }

    pub fn live_sessions(&self) -> Vec<Shared<Session>> {
        self.sessions.lock().unwrap().values().cloned().collect()
    }
}

#[derive(Serialize)]
struct ProblemSummary {
    id: String,
    level: u8,
    premises: Vec<String>,
    conclusion: String,
    conclusion_unicode: String,
}

async fn problems(State(app): State<Arc<AppState>>) -> Json<Vec<ProblemSummary>> {
    Json(
        app.problems
            .values()
            .map(|p| ProblemSummary {
                id: p.problem.id.clone(),
                level: p.problem.level,
                premises: p.problem.premises.iter().map(|f| f.ascii()).collect(),
                conclusion: p.problem.conclusion.ascii(),
                conclusion_unicode: p.problem.conclusion.unicode(),
            })
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    problem_id: String,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<NewSession>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let problem = app
        .problems
        .get(&req.problem_id)
        .cloned()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no problem {:?}", req.problem_id)))?;
    let kg = app.graph(&problem).await?;
    kg.ensure_reachable()
        .map_err(|e: KgError| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let session = Session::new(uuid::Uuid::new_v4().simple().to_string(), problem, kg, app.ttl);
    let view = session.view();
    app.sessions
        .lock()
        .unwrap()
        .insert(session.id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let s = app.session(&id)?;
    let view = s.lock().await.view();
    Ok(Json(view))
}

async fn submit_step(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(sub): Json<StepSubmission>,
) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let mut session = s.lock().await;
    Ok(Json(session.submit(&sub)?).into_response())
}

async fn hint(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let verbosity = match q.get("verbosity") {
        None => Verbosity::default(),
        Some(v) => Verbosity::parse(v).ok_or_else(|| {
            ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("verbosity must be \"tutor\" or \"teacher\", got {v:?}"),
            )
        })?,
    };
    let s = app.session(&id)?;
    let session = s.lock().await;
    Ok(Json(session.hint(verbosity)?).into_response())
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/problems", get(problems))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/step", post(submit_step))
        .route("/sessions/{id}/hint", post(hint))
        .with_state(app)
}

pub async fn serve(app: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
