use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector, Modality, DIM};
use crate::hash::Fnv1a64;

/// Width of the hashed feature space fed into the random projection.
pub const FEATURE_BUCKETS: usize = 4096;
const HISTOGRAM_BINS: usize = 256;
const SHINGLE: usize = 4;

/// Deterministic offline stand-in for a trained dual encoder.
///
/// Text: hashed unigram and bigram counts of lowercased tokens. Image: a
/// 256-bin byte histogram plus hashed 4-byte shingle counts. Both feature
/// vectors go through the same seeded Gaussian projection to 512 dimensions
/// and are normalized. Image features are content hashes, not perceptual.
#[derive(Clone)]
pub struct SurrogateProvider {
    id: String,
    /// Column-major `DIM x FEATURE_BUCKETS`: column `j` is `projection[j*DIM..(j+1)*DIM]`.
    projection: Arc<[f32]>,
}

impl std::fmt::Debug for SurrogateProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurrogateProvider")
            .field("id", &self.id)
            .finish()
    }
}

impl SurrogateProvider {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection: Vec<f32> = (0..DIM * FEATURE_BUCKETS)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self {
            id: format!("surrogate:{seed}"),
            projection: projection.into(),
        }
    }

    /// Euclidean norm of each of the 512 projection rows.
    pub fn projection_row_norms(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; DIM];
        for column in self.projection.chunks_exact(DIM) {
            for (s, v) in sums.iter_mut().zip(column) {
                *s += (*v as f64) * (*v as f64);
            }
        }
        sums.into_iter().map(f64::sqrt).collect()
    }

    fn project(
        &self,
        features: &BTreeMap<usize, f64>,
        modality: Modality,
    ) -> Result<EmbeddingVector<f32>, EmbedError> {
        let mut out = vec![0.0f64; DIM];
        for (&bucket, &weight) in features {
            let column = &self.projection[bucket * DIM..(bucket + 1) * DIM];
            for (o, p) in out.iter_mut().zip(column) {
                *o += weight * (*p as f64);
            }
        }
        let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(EmbedError::NormOutOfRange(0.0));
        }
        let values = out.iter().map(|v| (v / n) as f32).collect();
        EmbeddingVector::normalized(values, modality, self.id.as_str())
    }
}

fn bucket(prefix: &[u8], parts: &[&[u8]], offset: usize, width: usize) -> usize {
    let mut h = Fnv1a64::new().update(prefix);
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h = h.update(b" ");
        }
        h = h.update(p);
    }
    offset + (h.finish() % width as u64) as usize
}

fn text_features(text: &str) -> BTreeMap<usize, f64> {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered
        .split_whitespace()
        .map(|t| {
            let trimmed = t.trim_matches(|c: char| c.is_ascii_punctuation());
            if trimmed.is_empty() {
                t
            } else {
                trimmed
            }
        })
        .collect();
    let mut features = BTreeMap::new();
    for t in &tokens {
        *features
            .entry(bucket(b"u:", &[t.as_bytes()], 0, FEATURE_BUCKETS))
            .or_insert(0.0) += 1.0;
    }
    for pair in tokens.windows(2) {
        *features
            .entry(bucket(
                b"b:",
                &[pair[0].as_bytes(), pair[1].as_bytes()],
                0,
                FEATURE_BUCKETS,
            ))
            .or_insert(0.0) += 1.0;
    }
    features
}

fn image_features(bytes: &[u8]) -> BTreeMap<usize, f64> {
    let mut features = BTreeMap::new();
    let mut histogram = [0u64; HISTOGRAM_BINS];
    for &b in bytes {
        histogram[b as usize] += 1;
    }
    let total = bytes.len() as f64;
    for (bin, &count) in histogram.iter().enumerate() {
        if count > 0 {
            features.insert(bin, count as f64 / total);
        }
    }
    if bytes.len() >= SHINGLE {
        let windows = (bytes.len() - SHINGLE + 1) as f64;
        let width = FEATURE_BUCKETS - HISTOGRAM_BINS;
        let mut shingles: BTreeMap<usize, f64> = BTreeMap::new();
        for w in bytes.windows(SHINGLE) {
            *shingles
                .entry(bucket(b"s:", &[w], HISTOGRAM_BINS, width))
                .or_insert(0.0) += 1.0;
        }
        for (k, v) in shingles {
            features.insert(k, v / windows);
        }
    }
    features
}

impl EmbeddingProvider for SurrogateProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<EmbeddingVector<f32>, EmbedError> {
        if image_bytes.is_empty() {
            return Err(EmbedError::InvalidImage("empty payload".into()));
        }
        self.project(&image_features(image_bytes), Modality::Image)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector<f32>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        self.project(&text_features(text), Modality::Text)
    }
}
