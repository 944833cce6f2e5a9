//! HTTP service for the chart alt-text authoring loop.
//!
//! An author uploads a chart image and gets the most similar corpus charts
//! with their alt-texts; typing a draft and refining fuses draft-text
//! similarity into the ranking. All routes live under `/api/v1`; see
//! `docs/api.md` for the schema.

mod error;
mod routes;
mod session;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use alt4blind_core::{Corpus, EmbeddingProvider, Index};
use thiserror::Error;

pub use error::ApiError;
pub use routes::{router, CandidatePayload, MULTIPART_SLACK};
pub use session::{Session, SessionStore};

/// Text served by `/guidelines` when no guideline file is configured or it
/// cannot be read.
pub const DEFAULT_GUIDELINES: &str = include_str!("guidelines.md");

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Candidates per response.
    pub k: usize,
    /// Fusion weight for refine requests that do not set one.
    pub alpha: f64,
    pub session_ttl: Duration,
    /// Largest accepted upload in bytes.
    pub max_upload_bytes: usize,
    pub guidelines: Option<PathBuf>,
    /// Allowed browser origin; `None` allows any origin.
    pub cors_origin: Option<String>,
    /// Directory for spooled uploads; uploads stay in memory when `None`.
    pub spool_uploads: Option<PathBuf>,
    /// Directory that relative `image_ref`s resolve against.
    pub image_root: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            k: 3,
            alpha: 0.5,
            session_ttl: Duration::from_secs(30 * 60),
            max_upload_bytes: 10 * 1024 * 1024,
            guidelines: None,
            cors_origin: None,
            spool_uploads: None,
            image_root: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("index was built with provider {index} but the service uses {service}")]
    ProviderMismatch { index: String, service: String },
    #[error("index entry {0} has no record in the corpus")]
    MissingRecord(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Shared, read-mostly service state.
pub struct AppState {
    pub config: ServiceConfig,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub corpus: Option<Arc<Corpus>>,
    pub index: Option<Arc<Index>>,
    pub sessions: SessionStore,
}

impl AppState {
    /// Checks that the index matches the provider and that every indexed id
    /// has a corpus record.
    pub fn new(
        config: ServiceConfig,
        provider: Arc<dyn EmbeddingProvider>,
        corpus: Option<Corpus>,
        index: Option<Index>,
    ) -> Result<Self, StateError> {
        if config.k == 0 {
            return Err(StateError::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&config.alpha) {
            return Err(StateError::Config(format!(
                "alpha {} outside [0, 1]",
                config.alpha
            )));
        }
        if let Some(index) = &index {
            if index.provider_id() != provider.provider_id() {
                return Err(StateError::ProviderMismatch {
                    index: index.provider_id().to_string(),
                    service: provider.provider_id().to_string(),
                });
            }
            let Some(corpus) = &corpus else {
                return Err(StateError::Config("an index needs its corpus".into()));
            };
            if let Some(missing) = index.ids().iter().find(|id| corpus.get(id).is_none()) {
                return Err(StateError::MissingRecord(missing.clone()));
            }
        }
        Ok(Self {
            sessions: SessionStore::new(config.session_ttl),
            config,
            provider,
            corpus: corpus.map(Arc::new),
            index: index.map(Arc::new),
        })
    }

    pub fn index_size(&self) -> usize {
        self.index.as_ref().map_or(0, |i| i.len())
    }
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve<F>(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: F,
) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
