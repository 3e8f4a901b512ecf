//! HTTP + JSON routes.

use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, FromRequestParts, Multipart, Path, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use hasr_core::pipeline::{PipelineError, Recognition};
use hasr_core::textnorm::{normalize_text, NormalizeOptions};
use hasr_core::AudioError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::auth::{verify_against_dummy, verify_password, Session};
use crate::store::{validate_id, DocSummary, EditFilter, EditRecord, StoreError, TranscriptDoc};
use crate::AppState;

/// Upper bound on request bodies (audio uploads included).
pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug)]
pub enum ApiError {
    AuthFailed,
    NotFound,
    VersionConflict { current_version: u64 },
    BadRequest(String),
    Audio(AudioError),
    NoModelLoaded,
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::NotFound,
            StoreError::VersionConflict { current } => ApiError::VersionConflict { current_version: current },
            StoreError::InvalidId(_) => ApiError::NotFound,
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::AuthFailed => (StatusCode::UNAUTHORIZED, json!({"error": "auth_failed"})),
            ApiError::NotFound => (StatusCode::NOT_FOUND, json!({"error": "not_found"})),
            ApiError::VersionConflict { current_version } => {
                (StatusCode::CONFLICT, json!({"error": "version_conflict", "current_version": current_version}))
            }
            ApiError::BadRequest(detail) => (StatusCode::BAD_REQUEST, json!({"error": "bad_request", "detail": detail})),
            ApiError::Audio(e) => {
                let code = match e {
                    AudioError::MalformedContainer(_) => "malformed_container",
                    AudioError::UnsupportedEncoding { .. } => "unsupported_encoding",
                    _ => "bad_audio",
                };
                (StatusCode::BAD_REQUEST, json!({"error": code, "detail": e.to_string()}))
            }
            ApiError::NoModelLoaded => (StatusCode::SERVICE_UNAVAILABLE, json!({"error": "no_model_loaded"})),
            ApiError::Internal(detail) => {
                log::error!("internal error: {detail}");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal"}))
            }
        };
        (status, Json(body)).into_response()
    }
}

/// A request carrying a live session, from `Authorization: Bearer <token>`
/// or, for media elements that cannot set headers, a `token` query parameter.
pub struct Authed(pub Session);

impl FromRequestParts<AppState> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let header = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::to_string);
        let token = match header {
            Some(t) => t,
            None => Query::<HashMap<String, String>>::try_from_uri(&parts.uri)
                .ok()
                .and_then(|q| q.0.get("token").cloned())
                .ok_or(ApiError::AuthFailed)?,
        };
        state.inner.sessions.check(&token).map(Authed).ok_or(ApiError::AuthFailed)
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

#[derive(Deserialize)]
pub struct LoginRequest {
    pub user_id: String,
    pub password: String,
}

#[derive(Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub user_id: String,
    pub language_id: String,
    pub expires_in_secs: u64,
}

async fn login(State(state): State<AppState>, body: Result<Json<LoginRequest>, JsonRejection>) -> Result<Json<LoginResponse>, ApiError> {
    let Json(req) = body?;
    let st = state.clone();
    let account = blocking(move || {
        match st.inner.store.user(&req.user_id) {
            Some(acc) if verify_password(&req.password, &acc.password_hash) => return Ok(Some(acc)),
            Some(_) => {}
            None => verify_against_dummy(&req.password),
        }
        Ok(None)
    })
    .await?
    .ok_or(ApiError::AuthFailed)?;
    let token = state.inner.sessions.issue(&account.user_id, &account.language_id);
    Ok(Json(LoginResponse {
        token,
        user_id: account.user_id,
        language_id: account.language_id,
        expires_in_secs: state.inner.sessions.ttl().as_secs(),
    }))
}

async fn list_transcripts(State(state): State<AppState>, Authed(s): Authed) -> Json<Vec<DocSummary>> {
    Json(state.inner.store.list(&s.language_id))
}

fn visible_doc(state: &AppState, session: &Session, doc_id: &str) -> Result<TranscriptDoc, ApiError> {
    let doc = state.inner.store.get(doc_id)?;
    if doc.language_id != session.language_id {
        return Err(ApiError::NotFound);
    }
    Ok(doc)
}

async fn get_transcript(State(state): State<AppState>, Authed(s): Authed, Path(id): Path<String>) -> Result<Json<TranscriptDoc>, ApiError> {
    Ok(Json(visible_doc(&state, &s, &id)?))
}

#[derive(Deserialize)]
pub struct SaveRequest {
    pub text: String,
    pub base_version: u64,
}

#[derive(Serialize, Deserialize)]
pub struct SaveResponse {
    pub doc_id: String,
    pub version: u64,
    pub record_id: u64,
}

async fn save_transcript(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(id): Path<String>,
    body: Result<Json<SaveRequest>, JsonRejection>,
) -> Result<Json<SaveResponse>, ApiError> {
    let Json(req) = body?;
    visible_doc(&state, &s, &id)?;
    let rec: EditRecord =
        blocking(move || Ok(state.inner.store.save(&id, &s.user_id, &req.text, req.base_version)?)).await?;
    Ok(Json(SaveResponse { doc_id: rec.doc_id, version: rec.resulting_version, record_id: rec.record_id }))
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeKind {
    Numbers,
    Abbrev,
    All,
}

#[derive(Deserialize)]
pub struct NormalizeRequest {
    pub text: String,
    pub kind: NormalizeKind,
}

#[derive(Serialize, Deserialize)]
pub struct NormalizeResponse {
    pub text: String,
}

async fn normalize(
    State(state): State<AppState>,
    Authed(_): Authed,
    body: Result<Json<NormalizeRequest>, JsonRejection>,
) -> Result<Json<NormalizeResponse>, ApiError> {
    let Json(req) = body?;
    let inner = &state.inner;
    let opts = NormalizeOptions {
        numbers: matches!(req.kind, NormalizeKind::Numbers | NormalizeKind::All).then_some(&inner.numbers),
        abbreviations: matches!(req.kind, NormalizeKind::Abbrev | NormalizeKind::All).then_some(&inner.abbreviations),
    };
    Ok(Json(NormalizeResponse { text: normalize_text(&req.text, opts) }))
}

#[derive(Deserialize)]
pub struct EditQuery {
    pub doc: Option<String>,
    pub user: Option<String>,
}

async fn edits(State(state): State<AppState>, Authed(_): Authed, Query(q): Query<EditQuery>) -> Json<Vec<EditRecord>> {
    let filter = match (q.doc.as_deref(), q.user.as_deref()) {
        (Some(d), Some(u)) => EditFilter::DocAndUser(d, u),
        (Some(d), None) => EditFilter::Doc(d),
        (None, Some(u)) => EditFilter::User(u),
        (None, None) => EditFilter::All,
    };
    Json(state.inner.store.edits(filter))
}

async fn edit_counts(State(state): State<AppState>, Authed(_): Authed) -> Json<std::collections::BTreeMap<String, usize>> {
    Json(state.inner.store.edit_counts())
}

#[derive(Deserialize)]
struct Base64Audio {
    audio_base64: String,
}

/// Accepts `multipart/form-data` (first file field), JSON with an
/// `audio_base64` field, or a raw `audio/wav` body.
async fn read_audio(state: &AppState, req: Request) -> Result<Bytes, ApiError> {
    let ctype = req.headers().get(CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("").to_ascii_lowercase();
    if ctype.starts_with("multipart/form-data") {
        let mut mp = Multipart::from_request(req, state).await.map_err(|e| ApiError::BadRequest(e.body_text()))?;
        while let Some(field) = mp.next_field().await.map_err(|e| ApiError::BadRequest(e.body_text()))? {
            if field.name() == Some("audio") || field.file_name().is_some() {
                return field.bytes().await.map_err(|e| ApiError::BadRequest(e.body_text()));
            }
        }
        Err(ApiError::BadRequest("multipart body has no audio field".into()))
    } else if ctype.starts_with("application/json") {
        let Json(b) = Json::<Base64Audio>::from_request(req, state).await?;
        base64::engine::general_purpose::STANDARD
            .decode(b.audio_base64.trim())
            .map(Bytes::from)
            .map_err(|e| ApiError::BadRequest(format!("audio_base64: {e}")))
    } else {
        Bytes::from_request(req, state).await.map_err(|e| ApiError::BadRequest(e.body_text()))
    }
}

async fn recognize(State(state): State<AppState>, Authed(_): Authed, req: Request) -> Result<Json<Recognition>, ApiError> {
    if state.inner.recognizer.is_none() {
        return Err(ApiError::NoModelLoaded);
    }
    let wav = read_audio(&state, req).await?;
    blocking(move || {
        let rec = state.inner.recognizer.as_ref().ok_or(ApiError::NoModelLoaded)?;
        rec.recognize_wav(&wav, &state.inner.vad).map_err(|e| match e {
            PipelineError::Audio(a) => ApiError::Audio(a),
            other => ApiError::Internal(other.to_string()),
        })
    })
    .await
    .map(Json)
}

async fn audio_file(State(state): State<AppState>, Authed(_): Authed, Path(name): Path<String>) -> Result<Response, ApiError> {
    validate_id(&name).map_err(|_| ApiError::NotFound)?;
    let path = state.inner.store.audio_dir().join(&name);
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError::NotFound)?;
    let ctype = if name.to_ascii_lowercase().ends_with(".wav") { "audio/wav" } else { "application/octet-stream" };
    Ok(([(CONTENT_TYPE, ctype)], bytes).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/login", post(login))
        .route("/api/transcripts", get(list_transcripts))
        .route("/api/transcripts/{id}", get(get_transcript).put(save_transcript))
        .route("/api/normalize", post(normalize))
        .route("/api/edits", get(edits))
        .route("/api/edits/counts", get(edit_counts))
        .route("/api/recognize", post(recognize))
        .route("/audio/{name}", get(audio_file))
        .layer(axum::extract::DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}
