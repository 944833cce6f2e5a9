//! Unit-norm 512-dimensional embeddings and the encoder provider contract.
//!
//! Tolerances:
//! - construction: `|‖v‖ − 1| ≤ 1e-5` ([`NORM_TOLERANCE`])
//! - remote responses deviating by more than that but less than `1e-2`
//!   ([`RENORMALIZE_LIMIT`]) are re-normalized; beyond, they are rejected.

mod remote;
mod surrogate;

pub use remote::{RemoteConfig, RemoteProvider};
pub use surrogate::{SurrogateProvider, FEATURE_BUCKETS};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, Scalar};

/// Embedding dimension shared by both encoders.
pub const DIM: usize = 512;
pub const NORM_TOLERANCE: f64 = 1e-5;
pub const RENORMALIZE_LIMIT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Image => "image",
            Modality::Text => "text",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("encoder unavailable: {0}")]
    EncoderUnavailable(String),
    #[error("encoder rejected the image: {0}")]
    InvalidImage(String),
    #[error("expected {DIM} values, got {0}")]
    DimensionMismatch(usize),
    #[error("vector norm {0} outside accepted range")]
    NormOutOfRange(f64),
    #[error("text is empty")]
    EmptyText,
    #[error("provider mismatch: {left} vs {right}")]
    ProviderMismatch { left: String, right: String },
    #[error("vector contains non-finite values")]
    NonFinite,
}

/// A unit-norm vector of exactly [`DIM`] values tagged with its modality and
/// the provider that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<S: Scalar> {
    values: Vec<S>,
    modality: Modality,
    provider_id: Arc<str>,
}

impl<S: Scalar> EmbeddingVector<S> {
    /// Accepts `values` only if they already have length 512 and unit norm.
    pub fn new(
        values: Vec<S>,
        modality: Modality,
        provider_id: impl Into<Arc<str>>,
    ) -> Result<Self, EmbedError> {
        check_shape(&values)?;
        let n = scalar::norm(&values);
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbedError::NormOutOfRange(n));
        }
        Ok(Self {
            values,
            modality,
            provider_id: provider_id.into(),
        })
    }

    /// Scales `values` to unit norm. Zero vectors are rejected.
    pub fn normalized(
        mut values: Vec<S>,
        modality: Modality,
        provider_id: impl Into<Arc<str>>,
    ) -> Result<Self, EmbedError> {
        check_shape(&values)?;
        let n = scalar::norm(&values);
        if n == 0.0 {
            return Err(EmbedError::NormOutOfRange(0.0));
        }
        let inv = S::of(1.0 / n);
        for v in &mut values {
            *v *= inv;
        }
        Self::new(values, modality, provider_id)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub(crate) fn provider_arc(&self) -> &Arc<str> {
        &self.provider_id
    }

    pub fn norm(&self) -> f64 {
        scalar::norm(&self.values)
    }

    /// Converts to another scalar type, re-normalizing in the target precision.
    pub fn cast<T: Scalar>(&self) -> EmbeddingVector<T> {
        let values = self.values.iter().map(|v| T::of(v.widen())).collect();
        EmbeddingVector::normalized(values, self.modality, self.provider_id.clone())
            .expect("casting a unit vector keeps it unit")
    }
}

fn check_shape<S: Scalar>(values: &[S]) -> Result<(), EmbedError> {
    if values.len() != DIM {
        return Err(EmbedError::DimensionMismatch(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    Ok(())
}

/// Cosine similarity of two unit vectors from the same provider.
pub fn cosine<S: Scalar>(a: &EmbeddingVector<S>, b: &EmbeddingVector<S>) -> Result<S, EmbedError> {
    if a.provider_id != b.provider_id {
        return Err(EmbedError::ProviderMismatch {
            left: a.provider_id.to_string(),
            right: b.provider_id.to_string(),
        });
    }
    Ok(scalar::dot(&a.values, &b.values))
}

/// An encoder producing comparable image and text embeddings.
///
/// Vectors from different `provider_id`s are not comparable and are never
/// mixed in one index.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    fn dimension(&self) -> usize {
        DIM
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<EmbeddingVector<f32>, EmbedError>;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector<f32>, EmbedError>;
}

/// Parsed form of `surrogate:<seed>` or `remote:<url>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Surrogate { seed: u64 },
    Remote { endpoint: String },
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(seed) = s.strip_prefix("surrogate:") {
            let seed = seed
                .parse()
                .map_err(|_| format!("invalid surrogate seed {seed:?}"))?;
            Ok(ProviderSpec::Surrogate { seed })
        } else if let Some(url) = s.strip_prefix("remote:") {
            if !(url.starts_with("http://") || url.starts_with("https://")) {
                return Err(format!(
                    "remote endpoint must be an http(s) URL, got {url:?}"
                ));
            }
            Ok(ProviderSpec::Remote {
                endpoint: url.to_string(),
            })
        } else {
            Err(format!(
                "provider must be surrogate:<seed> or remote:<url>, got {s:?}"
            ))
        }
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderSpec::Surrogate { seed } => write!(f, "surrogate:{seed}"),
            ProviderSpec::Remote { endpoint } => write!(f, "remote:{endpoint}"),
        }
    }
}

impl ProviderSpec {
    /// Instantiates the provider. `timeout` and `max_in_flight` only apply to
    /// remote encoders.
    pub fn build(
        &self,
        timeout: Duration,
        max_in_flight: usize,
    ) -> Result<Arc<dyn EmbeddingProvider>, EmbedError> {
        Ok(match self {
            ProviderSpec::Surrogate { seed } => Arc::new(SurrogateProvider::new(*seed)),
            ProviderSpec::Remote { endpoint } => Arc::new(RemoteProvider::new(RemoteConfig {
                endpoint: endpoint.clone(),
                timeout,
                max_in_flight,
            })?),
        })
    }
}
