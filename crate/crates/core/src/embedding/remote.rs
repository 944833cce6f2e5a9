use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use reqwest::blocking::Client;
use reqwest::header::CONTENT_TYPE;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{
    EmbedError, EmbeddingProvider, EmbeddingVector, Modality, DIM, NORM_TOLERANCE,
    RENORMALIZE_LIMIT,
};
use crate::scalar;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL; requests go to `{endpoint}/embed`.
    pub endpoint: String,
    /// Per-request timeout.
    pub timeout: Duration,
    /// Maximum concurrent in-flight requests.
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout: Duration::from_secs(10),
            max_in_flight: 8,
        }
    }
}

/// Encoder reached over HTTP with the JSON `/embed` protocol.
pub struct RemoteProvider {
    id: String,
    url: String,
    // Option so Drop can hand the client off to a plain thread: the blocking
    // client must not be dropped on an async runtime worker.
    client: Option<Client>,
    slots: Slots,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("url", &self.url)
            .finish()
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    dimension: usize,
    values: Vec<f64>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, EmbedError> {
        let base = config.endpoint.trim_end_matches('/');
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(EmbedError::EncoderUnavailable(format!(
                "invalid endpoint {:?}",
                config.endpoint
            )));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .connect_timeout(config.timeout)
            .build()
            .map_err(|e| EmbedError::EncoderUnavailable(e.to_string()))?;
        Ok(Self {
            id: format!("remote:{base}"),
            url: format!("{base}/embed"),
            client: Some(client),
            slots: Slots::new(config.max_in_flight.max(1)),
        })
    }

    fn request(
        &self,
        body: serde_json::Value,
        modality: Modality,
    ) -> Result<EmbeddingVector<f32>, EmbedError> {
        let _permit = self.slots.acquire();
        let client = self.client.as_ref().expect("client present until drop");
        let response = client
            .post(&self.url)
            .header(CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| EmbedError::EncoderUnavailable(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| EmbedError::EncoderUnavailable(e.to_string()))?;
        if status != StatusCode::OK {
            let rejected_payload = matches!(
                status,
                StatusCode::BAD_REQUEST
                    | StatusCode::UNSUPPORTED_MEDIA_TYPE
                    | StatusCode::UNPROCESSABLE_ENTITY
            );
            return Err(if modality == Modality::Image && rejected_payload {
                EmbedError::InvalidImage(format!("{status}: {text}"))
            } else {
                EmbedError::EncoderUnavailable(format!("encoder answered {status}"))
            });
        }
        let parsed: EmbedResponse = serde_json::from_str(&text).map_err(|e| {
            EmbedError::EncoderUnavailable(format!("malformed encoder response: {e}"))
        })?;
        accept(parsed, modality, &self.id)
    }
}

/// Applies the dimension and norm rules to a decoded response.
fn accept(
    resp: EmbedResponse,
    modality: Modality,
    id: &str,
) -> Result<EmbeddingVector<f32>, EmbedError> {
    if resp.values.len() != DIM {
        return Err(EmbedError::DimensionMismatch(resp.values.len()));
    }
    if resp.dimension != DIM {
        return Err(EmbedError::DimensionMismatch(resp.dimension));
    }
    let values: Vec<f32> = resp.values.iter().map(|v| *v as f32).collect();
    let n = scalar::norm(&values);
    let deviation = (n - 1.0).abs();
    if deviation <= NORM_TOLERANCE {
        EmbeddingVector::new(values, modality, id)
    } else if deviation < RENORMALIZE_LIMIT {
        EmbeddingVector::normalized(values, modality, id)
    } else {
        Err(EmbedError::NormOutOfRange(n))
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<EmbeddingVector<f32>, EmbedError> {
        if image_bytes.is_empty() {
            return Err(EmbedError::InvalidImage("empty payload".into()));
        }
        let body = json!({"modality": "image", "data_b64": BASE64.encode(image_bytes)});
        self.request(body, Modality::Image)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector<f32>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        self.request(json!({"modality": "text", "text": text}), Modality::Text)
    }
}

impl Drop for RemoteProvider {
    fn drop(&mut self) {
        if let Some(client) = self.client.take() {
            let _ = std::thread::spawn(move || drop(client));
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}
