use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EvalError, RelevanceJudgment};
use crate::corpus::{ChartRecord, ChartType, Corpus, CorpusMetadata};
use crate::embedding::{EmbeddingVector, Modality, DIM};
use crate::index::{IndexError, IndexVariant, VectorIndex};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SyntheticEntry<S: Scalar> {
    pub id: String,
    pub cluster: usize,
    pub image: EmbeddingVector<S>,
    pub text: EmbeddingVector<S>,
}

/// A labeled clustered corpus with embeddings.
#[derive(Debug, Clone)]
pub struct SyntheticSet<S: Scalar> {
    pub corpus: Corpus,
    pub entries: Vec<SyntheticEntry<S>>,
    pub judgments: Vec<RelevanceJudgment>,
    pub provider_id: String,
}

impl<S: Scalar> SyntheticSet<S> {
    pub fn build_index(&self, variant: IndexVariant) -> Result<VectorIndex<S>, IndexError> {
        let mut index = VectorIndex::new(self.provider_id.as_str(), variant);
        for e in &self.entries {
            index.insert(e.id.clone(), &e.image, &e.text)?;
        }
        Ok(index)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..DIM).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit<S: Scalar>(values: &[f64], modality: Modality, provider: &str) -> EmbeddingVector<S> {
    EmbeddingVector::normalized(
        values.iter().map(|v| S::of(*v)).collect(),
        modality,
        provider,
    )
    .expect("non-degenerate synthetic vector")
}

/// Perturbs `center` by `noise` times an isotropic Gaussian of unit expected norm.
fn member(center: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g = gaussian(rng);
    let scale = noise / (DIM as f64).sqrt();
    center.iter().zip(&g).map(|(c, x)| c + scale * x).collect()
}

/// Generates `n_clusters * per_cluster` records around random cluster centers.
///
/// Cluster `c` gets independent random image and text centers; each member is
/// `normalize(center + noise * g / sqrt(512))` with `g` standard normal, so
/// `noise` is the relative perturbation size. Members carry chart type
/// `ChartType::ALL[c % 8]`, and every record judges all of its cluster
/// (itself included) relevant.
pub fn synth_corpus<S: Scalar>(
    n_clusters: usize,
    per_cluster: usize,
    noise: f64,
    seed: u64,
) -> Result<SyntheticSet<S>, EvalError> {
    if n_clusters < 2 || per_cluster < 2 {
        return Err(EvalError::InvalidParameter(
            "need at least 2 clusters of at least 2 members".into(),
        ));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(EvalError::InvalidParameter(format!(
            "noise {noise} outside [0, 1)"
        )));
    }
    let provider_id = format!("synthetic:{seed}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cw = digits(n_clusters - 1);
    let mw = digits(per_cluster - 1);

    let mut records = Vec::with_capacity(n_clusters * per_cluster);
    let mut entries = Vec::with_capacity(n_clusters * per_cluster);
    let mut judgments = Vec::with_capacity(n_clusters * per_cluster);
    for c in 0..n_clusters {
        let image_center = gaussian(&mut rng);
        let text_center = gaussian(&mut rng);
        let norm_i = image_center.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_t = text_center.iter().map(|v| v * v).sum::<f64>().sqrt();
        let image_center: Vec<f64> = image_center.iter().map(|v| v / norm_i).collect();
        let text_center: Vec<f64> = text_center.iter().map(|v| v / norm_t).collect();
        let chart_type = ChartType::ALL[c % ChartType::ALL.len()];
        let ids: Vec<String> = (0..per_cluster)
            .map(|m| format!("c{c:0cw$}-m{m:0mw$}"))
            .collect();
        for (m, id) in ids.iter().enumerate() {
            let image = member(&image_center, noise, &mut rng);
            let text = member(&text_center, noise, &mut rng);
            entries.push(SyntheticEntry {
                id: id.clone(),
                cluster: c,
                image: unit(&image, Modality::Image, &provider_id),
                text: unit(&text, Modality::Text, &provider_id),
            });
            records.push(ChartRecord {
                id: id.clone(),
                image_ref: format!("synthetic/{id}.png"),
                alt_text: format!("Synthetic {chart_type} chart {m} of cluster {c}."),
                caption: None,
                chart_type,
                source_venue: "synthetic".into(),
                year: 2024,
                semantic_profile: None,
                quality_score: None,
            });
            judgments.push(RelevanceJudgment {
                query_id: id.clone(),
                relevant_ids: ids.iter().cloned().collect(),
            });
        }
    }
    let mut metadata = CorpusMetadata::new(format!(
        "synthetic-{n_clusters}x{per_cluster}-noise{noise}-seed{seed}"
    ));
    metadata.seed = Some(seed);
    let corpus = Corpus::new(metadata, records).expect("generated ids are unique");
    Ok(SyntheticSet {
        corpus,
        entries,
        judgments,
        provider_id,
    })
}

fn digits(n: usize) -> usize {
    n.to_string().len()
}
