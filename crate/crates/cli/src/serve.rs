use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use afroforge_core::service::{
    load_tasks, EvalService, GroupKey, RaterMeta, RatingSubmission, ServiceError, ServicePaths, TaskView,
};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clap::Args;
use log::info;
use tower_http::services::ServeDir;

use crate::CliError;

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    tasks: PathBuf,
    /// Append-only event log; created if missing, replayed if present.
    #[arg(long)]
    log: PathBuf,
    /// Directory that relative task audio paths resolve against.
    /// Defaults to the directory holding the task file.
    #[arg(long)]
    audio_root: Option<PathBuf>,
    /// Static rater UI bundle served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

type Shared = Arc<Mutex<EvalService>>;

struct ApiError(StatusCode, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::UnknownTask(_) | ServiceError::UnknownRater(_) | ServiceError::NoEligibleTask => {
                StatusCode::NOT_FOUND
            }
            ServiceError::InvalidRating(_) | ServiceError::InvalidTask { .. } | ServiceError::Parse { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::CountryMismatch { .. } => StatusCode::FORBIDDEN,
            ServiceError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    state: Shared,
    f: impl FnOnce(&mut EvalService) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut svc = state.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut svc)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(ApiError::from)
}

async fn register(State(state): State<Shared>, Json(meta): Json<RaterMeta>) -> Result<Response, ApiError> {
    let token = blocking(state, move |svc| svc.register_rater(meta)).await?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "rater_id": token }))).into_response())
}

async fn next_task(
    State(state): State<Shared>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<TaskView>, ApiError> {
    let rater = q
        .get("rater")
        .cloned()
        .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "missing 'rater' query parameter".into()))?;
    let svc = state.lock().unwrap_or_else(|p| p.into_inner());
    Ok(Json(TaskView::of(svc.next_task(&rater)?)))
}

async fn submit(State(state): State<Shared>, Json(sub): Json<RatingSubmission>) -> Result<Response, ApiError> {
    let ack = blocking(state, move |svc| svc.submit(&sub)).await?;
    Ok(Json(ack).into_response())
}

async fn results(
    State(state): State<Shared>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let keys = GroupKey::parse_list(q.get("group_by").map_or("model", String::as_str))
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e))?;
    let body = state.lock().unwrap_or_else(|p| p.into_inner()).results_json(&keys);
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn audio(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let path = state
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .audio_path(&id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown utterance '{id}'")))?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

pub fn router(svc: EvalService, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/raters", post(register))
        .route("/api/tasks/next", get(next_task))
        .route("/api/ratings", post(submit))
        .route("/api/results", get(results))
        .route("/api/audio/{id}", get(audio))
        .with_state(Arc::new(Mutex::new(svc)));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub fn run(args: ServeArgs) -> Result<(), CliError> {
    let tasks = load_tasks(&args.tasks).map_err(|e| CliError::Input(e.to_string()))?;
    let audio_root = args.audio_root.clone().unwrap_or_else(|| {
        args.tasks
            .parent()
            .map(std::path::Path::to_path_buf)
            .unwrap_or_default()
    });
    let svc = EvalService::open(tasks, &ServicePaths::beside_log(&args.log), audio_root)
        .map_err(|e| CliError::Input(e.to_string()))?;
    info!("loaded {} tasks, replayed {} ratings", svc.tasks().len(), svc.event_count());
    let app = router(svc, args.static_dir);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.to_string()))?;
    rt.block_on(async move {
        let addr: SocketAddr = format!("{}:{}", args.host, args.port)
            .parse()
            .map_err(|e| CliError::Usage(format!("--host/--port: {e}")))?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Input(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Input(e.to_string()))?;
        println!("listening on http://{local}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Input(e.to_string()))
    })
}
