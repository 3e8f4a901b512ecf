//! Collaborative transcript-correction server: logins, versioned
//! transcripts with an append-only change log, server-side text
//! normalization and a recognition endpoint.

pub mod api;
pub mod auth;
pub mod store;

use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use hasr_core::align::Model;
use hasr_core::pipeline::Recognizer;
use hasr_core::textnorm::{AbbrevTable, NumberWordTable};
use hasr_core::VadConfig;
use thiserror::Error;
use tokio::net::TcpListener;

pub use api::router;
pub use store::{EditRecord, Store, StoreError, TranscriptDoc, UserAccount};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("model {path}: {reason}")]
    Model { path: PathBuf, reason: String },
    #[error("abbreviation table {path}: {reason}")]
    Abbrev { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub model_path: Option<PathBuf>,
    pub abbrev_path: Option<PathBuf>,
    pub session_ttl: Duration,
    pub vad: VadConfig,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            model_path: None,
            abbrev_path: None,
            session_ttl: Duration::from_secs(12 * 3600),
            vad: VadConfig::default(),
        }
    }
}

pub struct Inner {
    pub store: Store,
    pub sessions: auth::Sessions,
    pub recognizer: Option<Recognizer>,
    pub vad: VadConfig,
    pub numbers: NumberWordTable,
    pub abbreviations: AbbrevTable,
}

#[derive(Clone)]
pub struct AppState {
    pub inner: Arc<Inner>,
}

pub fn load_model(path: &Path) -> Result<Recognizer, ServiceError> {
    let err = |reason: String| ServiceError::Model { path: path.to_path_buf(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let model = Model::from_json(&text).map_err(|e| err(e.to_string()))?;
    Recognizer::new(model).map_err(|e| err(e.to_string()))
}

impl AppState {
    pub fn load(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let store = Store::open(&cfg.data_dir)?;
        let recognizer = cfg.model_path.as_deref().map(load_model).transpose()?;
        let abbreviations = match &cfg.abbrev_path {
            Some(p) => {
                let err = |reason: String| ServiceError::Abbrev { path: p.clone(), reason };
                AbbrevTable::from_tsv(&std::fs::read_to_string(p).map_err(|e| err(e.to_string()))?)
                    .map_err(|e| err(e.to_string()))?
            }
            None => AbbrevTable::bundled(),
        };
        Ok(Self {
            inner: Arc::new(Inner {
                store,
                sessions: auth::Sessions::new(cfg.session_ttl),
                recognizer,
                vad: cfg.vad,
                numbers: NumberWordTable::bundled(),
                abbreviations,
            }),
        })
    }
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(listener: TcpListener, state: AppState, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
