//! JSON over HTTP.
//!
//! | method | path | body / query |
//! |---|---|---|
//! | GET | `/health` | |
//! | GET, POST | `/projects` | `{"name", "project_id"?}` |
//! | GET | `/projects/{id}` | |
//! | POST | `/projects/{id}/claims` | `{"claim_text", "expected_revision"?}` |
//! | POST | `/projects/{id}/drawings` | `{"pages": [...], "expected_revision"?}` |
//! | PATCH | `/projects/{id}/figures/{n}` | `{"brief_description", "expected_revision"?}` |
//! | PATCH | `/projects/{id}/figures/{n}/components/{num}` | `{"name"?, "number"?, "expected_revision"?}` |
//! | GET | `/projects/{id}/suggestions` | `?threshold=&k=` |
//! | POST | `/projects/{id}/suggestions/accept` | `?threshold=&k=&expected_revision=` |
//! | PUT | `/projects/{id}/mappings` | `{"feature_id", "component_ref", "expected_revision"?}` |
//! | DELETE | `/projects/{id}/mappings` | `?feature_id=&component_ref=&expected_revision=` |
//! | POST | `/projects/{id}/generate` | `{"backend_id"?, "allow_unmapped"?}` |
//! | GET | `/projects/{id}/jobs/{job}` | |
//! | GET | `/projects/{id}/specification`, `.json`, `.txt` | `?numbered=true` |
//! | GET | `/projects/{id}/export` | |
//! | POST | `/projects/import` | project JSON, `?replace=true` |
//!
//! Errors are `{"error": kind, "message", "line"?}` with 404, 409 (stale revision,
//! duplicate id), 422 (validation, parse errors) or 500.

use std::net::SocketAddr;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{ComponentPatch, ProjectService, ServiceConfig, ServiceError};
use crate::claims::FeatureId;
use crate::drawings::{ComponentRef, DrawingPage};
use crate::generation::MOCK_BACKEND_ID;

#[derive(Clone)]
pub struct AppState {
    pub service: ProjectService,
    pub token: Option<String>,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::DuplicateId(_) | ServiceError::Conflict { .. } => StatusCode::CONFLICT,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Mapping(_) if self.0.kind() == "not_found" => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let mut body = json!({ "error": self.0.kind(), "message": self.0.to_string() });
        if let ServiceError::Claims(e) = &self.0 {
            if let Some(line) = e.line() {
                body["line"] = json!(line);
            }
        }
        if let ServiceError::Conflict { actual, .. } = &self.0 {
            body["revision"] = json!(actual);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking store work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Storage(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    let Some(token) = state.token.as_deref() else {
        return next.run(request).await;
    };
    let authorized = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token);
    if authorized {
        next.run(request).await
    } else {
        (
            StatusCode::UNAUTHORIZED,
            Json(json!({ "error": "unauthorized", "message": "missing or invalid bearer token" })),
        )
            .into_response()
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/import", post(import_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/claims", post(upload_claims))
        .route("/projects/{id}/drawings", post(upload_drawings))
        .route("/projects/{id}/figures/{n}", patch(patch_figure))
        .route("/projects/{id}/figures/{n}/components/{num}", patch(patch_component))
        .route("/projects/{id}/suggestions", get(suggestions))
        .route("/projects/{id}/suggestions/accept", post(accept_suggestions))
        .route("/projects/{id}/mappings", put(put_mapping).delete(delete_mapping))
        .route("/projects/{id}/generate", post(generate))
        .route("/projects/{id}/jobs/{job}", get(get_job))
        .route("/projects/{id}/specification", get(specification_json))
        .route("/projects/{id}/specification.json", get(specification_json))
        .route("/projects/{id}/specification.txt", get(specification_txt))
        .route("/projects/{id}/export", get(export_project))
        .layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .merge(api)
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "backends": state.service.backends() }))
}

#[derive(Deserialize)]
struct CreateBody {
    name: String,
    #[serde(default)]
    project_id: Option<String>,
}

async fn create_project(State(s): State<AppState>, Json(body): Json<CreateBody>) -> ApiResult<Response> {
    let p = blocking(move || s.service.create_project(&body.name, body.project_id.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(p)).into_response())
}

async fn list_projects(State(s): State<AppState>) -> ApiResult<Response> {
    let list = blocking(move || s.service.list_projects()).await?;
    Ok(Json(list).into_response())
}

async fn get_project(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let p = blocking(move || s.service.get_project(&id)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct ClaimsBody {
    claim_text: String,
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn upload_claims(State(s): State<AppState>, Path(id): Path<String>, Json(b): Json<ClaimsBody>) -> ApiResult<Response> {
    let p = blocking(move || s.service.upload_claims(&id, &b.claim_text, b.expected_revision)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct DrawingsBody {
    pages: Vec<DrawingPage>,
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn upload_drawings(State(s): State<AppState>, Path(id): Path<String>, Json(b): Json<DrawingsBody>) -> ApiResult<Response> {
    let p = blocking(move || s.service.upload_drawings(&id, &b.pages, b.expected_revision)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct FigureBody {
    brief_description: String,
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn patch_figure(
    State(s): State<AppState>,
    Path((id, n)): Path<(String, u32)>,
    Json(b): Json<FigureBody>,
) -> ApiResult<Response> {
    let p = blocking(move || s.service.patch_figure(&id, n, &b.brief_description, b.expected_revision)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct ComponentBody {
    #[serde(flatten)]
    patch: ComponentPatch,
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn patch_component(
    State(s): State<AppState>,
    Path((id, n, num)): Path<(String, u32, String)>,
    Json(b): Json<ComponentBody>,
) -> ApiResult<Response> {
    let p = blocking(move || s.service.patch_component(&id, n, &num, &b.patch, b.expected_revision)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct SuggestQuery {
    #[serde(default)]
    threshold: Option<f64>,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn suggestions(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<SuggestQuery>) -> ApiResult<Response> {
    let set = blocking(move || s.service.suggestions(&id, q.threshold, q.k)).await?;
    Ok(Json(set).into_response())
}

async fn accept_suggestions(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SuggestQuery>,
) -> ApiResult<Response> {
    let p = blocking(move || s.service.accept_suggestions(&id, q.threshold, q.k, q.expected_revision)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize)]
struct MappingBody {
    feature_id: FeatureId,
    component_ref: ComponentRef,
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn put_mapping(State(s): State<AppState>, Path(id): Path<String>, Json(b): Json<MappingBody>) -> ApiResult<Response> {
    let p = blocking(move || s.service.put_mapping(&id, b.feature_id, &b.component_ref, b.expected_revision)).await?;
    Ok(Json(p).into_response())
}

async fn delete_mapping(State(s): State<AppState>, Path(id): Path<String>, Query(b): Query<MappingBody>) -> ApiResult<Response> {
    let p = blocking(move || s.service.delete_mapping(&id, b.feature_id, &b.component_ref, b.expected_revision)).await?;
    Ok(Json(p).into_response())
}

#[derive(Deserialize, Default)]
struct GenerateBody {
    #[serde(default)]
    backend_id: Option<String>,
    #[serde(default)]
    allow_unmapped: bool,
}

async fn generate(State(s): State<AppState>, Path(id): Path<String>, body: Option<Json<GenerateBody>>) -> ApiResult<Response> {
    let b = body.map(|Json(b)| b).unwrap_or_default();
    let backend = b.backend_id.unwrap_or_else(|| MOCK_BACKEND_ID.to_string());
    let job = blocking(move || s.service.start_generation(&id, &backend, b.allow_unmapped)).await?;
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn get_job(State(s): State<AppState>, Path((id, job)): Path<(String, String)>) -> ApiResult<Response> {
    let job = blocking(move || s.service.job(&id, &job)).await?;
    Ok(Json(job).into_response())
}

#[derive(Deserialize)]
struct SpecQuery {
    #[serde(default)]
    numbered: bool,
}

async fn specification_json(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<SpecQuery>) -> ApiResult<Response> {
    let spec = blocking(move || s.service.specification(&id, q.numbered)).await?;
    Ok(Json(spec).into_response())
}

async fn specification_txt(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<SpecQuery>) -> ApiResult<Response> {
    let spec = blocking(move || s.service.specification(&id, q.numbered)).await?;
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, "text/plain; charset=utf-8".parse().unwrap());
    Ok((headers, spec.text).into_response())
}

async fn export_project(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let json = blocking(move || s.service.export_project(&id)).await?;
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, "application/json".parse().unwrap());
    Ok((headers, json).into_response())
}

#[derive(Deserialize)]
struct ImportQuery {
    #[serde(default)]
    replace: bool,
}

async fn import_project(State(s): State<AppState>, Query(q): Query<ImportQuery>, body: String) -> ApiResult<Response> {
    let p = blocking(move || s.service.import_project(&body, q.replace)).await?;
    Ok((StatusCode::CREATED, Json(p)).into_response())
}

/// Binds `config.bind` (or `addr`) and serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig, addr: Option<SocketAddr>) -> std::io::Result<()> {
    let service = ProjectService::from_config(config).map_err(std::io::Error::other)?;
    let state = AppState {
        service,
        token: config.token.clone(),
    };
    let listener = match addr {
        Some(a) => tokio::net::TcpListener::bind(a).await?,
        None => tokio::net::TcpListener::bind(&config.bind).await?,
    };
    tracing::info!(addr = %listener.local_addr()?, data_dir = %config.data_dir.display(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
