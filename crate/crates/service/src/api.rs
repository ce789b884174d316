use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shadowcost::domain::ValidationReport;
use shadowcost::scenario::{self, ScenarioFile};
use shadowcost::solver::SolverConfig;
use shadowcost::whatif::{self, WhatIf, WhatIfResult};

use crate::store::{Store, StoreError, StoredScenario};

/// Cached compute bodies kept before the cache is cleared.
const CACHE_LIMIT: usize = 1024;

/// `(id, revision, params hash)`.
type CacheKey = (String, u64, [u8; 32]);

pub struct AppState {
    pub store: Store,
    solver: SolverConfig,
    cache: Mutex<HashMap<CacheKey, Bytes>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self {
            store,
            solver: SolverConfig::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/scenarios", post(create))
        .route("/scenarios/{id}", get(fetch).put(replace).delete(remove))
        .route("/scenarios/{id}/compute", post(compute))
        .with_state(state)
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
                report: None,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            StoreError::Conflict { .. } => ApiError::new(StatusCode::CONFLICT, "revision_conflict", e.to_string()),
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", e.to_string())
            }
        }
    }
}

impl From<shadowcost::Error> for ApiError {
    fn from(e: shadowcost::Error) -> Self {
        use shadowcost::Error as E;
        let message = e.to_string();
        match e.root() {
            E::Validation(report) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: ErrorBody {
                    code: "validation_failed",
                    message,
                    report: Some(report.clone()),
                },
            },
            E::NoRealEquilibrium { .. } | E::NotConverged { .. } | E::SingularJacobian { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_equilibrium", message)
            }
            E::Infeasible { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "infeasible", message),
            E::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", message),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", message),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = format!("at {path}: {inner}");
        if inner.is_syntax() || inner.is_eof() {
            ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", message)
        } else {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", message)
        }
    })
}

/// Reads a scenario from JSON, or from the TOML file format when the
/// content type says so, and validates it.
fn scenario_body(headers: &HeaderMap, body: &[u8]) -> ApiResult<ScenarioFile> {
    let toml = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/toml"));
    let file = if toml {
        let text = std::str::from_utf8(body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))?;
        scenario::parse_scenario_unchecked(text)?
    } else {
        parse_json::<ScenarioFile>(body)?
    };
    file.inputs()?.validate().into_result()?;
    Ok(file)
}

fn if_match(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    let Some(raw) = headers.get(header::IF_MATCH) else {
        return Ok(None);
    };
    let text = raw.to_str().unwrap_or_default().trim();
    let text = text.strip_prefix("W/").unwrap_or(text).trim_matches('"');
    text.parse().map(Some).map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_revision_header",
            format!("If-Match must be a revision number, got `{text}`"),
        )
    })
}

fn etag(revision: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{revision}\"")).expect("digits are a valid header")
}

fn stored_response(status: StatusCode, stored: &StoredScenario) -> Response {
    let mut resp = (status, Json(stored)).into_response();
    resp.headers_mut().insert(header::ETAG, etag(stored.revision));
    resp
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let file = scenario_body(&headers, &body)?;
    let stored = state.store.create(file).await?;
    let mut resp = stored_response(StatusCode::CREATED, &stored);
    let location = HeaderValue::from_str(&format!("/scenarios/{}", stored.id)).expect("ids are hex");
    resp.headers_mut().insert(header::LOCATION, location);
    Ok(resp)
}

#[derive(Debug, Deserialize)]
struct RevisionQuery {
    revision: Option<u64>,
}

async fn fetch(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<RevisionQuery>,
) -> ApiResult<Response> {
    let stored = match q.revision {
        Some(r) => state.store.get_revision(&id, r)?,
        None => state.store.get(&id)?,
    };
    Ok(stored_response(StatusCode::OK, &stored))
}

async fn replace(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    state.store.get(&id)?;
    let expected = if_match(&headers)?.ok_or_else(|| {
        ApiError::new(
            StatusCode::PRECONDITION_REQUIRED,
            "revision_required",
            "PUT needs an If-Match revision header",
        )
    })?;
    let file = scenario_body(&headers, &body)?;
    let stored = state.store.update(&id, expected, file).await?;
    Ok(stored_response(StatusCode::OK, &stored))
}

async fn remove(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<StatusCode> {
    state.store.delete(&id, if_match(&headers)?).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize)]
pub struct ComputeResponse<'a> {
    pub id: &'a str,
    pub revision: u64,
    pub params: &'a WhatIf,
    pub result: &'a WhatIfResult,
}

fn params_hash(params: &WhatIf) -> [u8; 32] {
    let bytes = serde_json::to_vec(params).expect("params serialize");
    Sha256::digest(bytes).into()
}

async fn compute(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let stored = match if_match(&headers)? {
        Some(r) => {
            let current = state.store.get(&id)?;
            if current.revision != r {
                return Err(StoreError::Conflict {
                    id,
                    requested: r,
                    current: current.revision,
                }
                .into());
            }
            current
        }
        None => state.store.get(&id)?,
    };
    let params: WhatIf = if body.iter().all(u8::is_ascii_whitespace) {
        WhatIf::default()
    } else {
        parse_json(&body)?
    };

    let key = (stored.id.clone(), stored.revision, params_hash(&params));
    let cached = state.cache.lock().unwrap().get(&key).cloned();
    let (bytes, hit) = match cached {
        Some(b) => (b, true),
        None => {
            let worker = state.clone();
            let stored_for_work = stored.clone();
            let params_for_work = params.clone();
            let result = tokio::task::spawn_blocking(move || {
                let inputs = stored_for_work.scenario.inputs()?;
                whatif::evaluate(&inputs, &params_for_work, &worker.solver)
            })
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
            let body = ComputeResponse {
                id: &stored.id,
                revision: stored.revision,
                params: &params,
                result: &result,
            };
            let bytes = Bytes::from(serde_json::to_vec(&body).expect("results serialize"));
            let mut cache = state.cache.lock().unwrap();
            if cache.len() >= CACHE_LIMIT {
                cache.clear();
            }
            cache.insert(key, bytes.clone());
            (bytes, false)
        }
    };

    let mut resp = (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], bytes).into_response();
    resp.headers_mut().insert(header::ETAG, etag(stored.revision));
    resp.headers_mut()
        .insert("x-cache", HeaderValue::from_static(if hit { "hit" } else { "miss" }));
    Ok(resp)
}
