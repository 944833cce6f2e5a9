//! Corpus to index: embed every record's image and alt-text, then insert.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{ChartRecord, Corpus};
use crate::embedding::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::index::{IndexError, IndexVariant, VectorIndex};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("encoder failed on record {record_id:?}: {source}")]
    Encoder {
        record_id: String,
        #[source]
        source: EmbedError,
    },
    #[error("cannot read image of record {record_id:?} at {path}: {source}")]
    ImageRead {
        record_id: String,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Resolves a record's `image_ref` against `root`. URLs are not fetched.
pub fn resolve_image(root: &Path, image_ref: &str) -> Option<PathBuf> {
    if image_ref.contains("://") {
        return None;
    }
    Some(root.join(image_ref))
}

fn embed_record(
    record: &ChartRecord,
    provider: &dyn EmbeddingProvider,
    image_root: &Path,
) -> Result<(EmbeddingVector<f32>, EmbeddingVector<f32>), BuildError> {
    let path =
        resolve_image(image_root, &record.image_ref).ok_or_else(|| BuildError::ImageRead {
            record_id: record.id.clone(),
            path: PathBuf::from(&record.image_ref),
            source: std::io::Error::new(
                std::io::ErrorKind::Unsupported,
                "remote image refs are not fetched",
            ),
        })?;
    let bytes = std::fs::read(&path).map_err(|source| BuildError::ImageRead {
        record_id: record.id.clone(),
        path: path.clone(),
        source,
    })?;
    let encoder_err = |source| BuildError::Encoder {
        record_id: record.id.clone(),
        source,
    };
    let image = provider.embed_image(&bytes).map_err(encoder_err)?;
    let text = provider.embed_text(&record.alt_text).map_err(encoder_err)?;
    Ok((image, text))
}

/// Embeds all records (in parallel) and inserts them in corpus order.
///
/// `progress` is called with `(done, total)` as records finish embedding.
pub fn build_index(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    variant: IndexVariant,
    image_root: &Path,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<VectorIndex<f32>, BuildError> {
    let total = corpus.len();
    let done = AtomicUsize::new(0);
    let vectors: Vec<_> = corpus
        .records()
        .par_iter()
        .map(|r| {
            let out = embed_record(r, provider, image_root);
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(n, total);
            }
            out
        })
        .collect::<Result<_, _>>()?;
    let mut index = VectorIndex::new(provider.provider_id(), variant);
    for (record, (image, text)) in corpus.records().iter().zip(&vectors) {
        index.insert(record.id.clone(), image, text)?;
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChartType, CorpusMetadata};
    use crate::embedding::SurrogateProvider;

    fn record(id: &str, image_ref: &str) -> ChartRecord {
        ChartRecord {
            id: id.into(),
            image_ref: image_ref.into(),
            alt_text: format!("A line chart {id}."),
            caption: None,
            chart_type: ChartType::Line,
            source_venue: "CHI".into(),
            year: 2020,
            semantic_profile: None,
            quality_score: None,
        }
    }

    #[test]
    fn builds_deterministically_in_corpus_order() {
        let dir = tempfile::tempdir().unwrap();
        for (i, name) in ["a.png", "b.png", "c.png"].iter().enumerate() {
            std::fs::write(dir.path().join(name), vec![i as u8 + 1; 64 + i]).unwrap();
        }
        let corpus = Corpus::new(
            CorpusMetadata::new("p"),
            vec![
                record("z", "a.png"),
                record("y", "b.png"),
                record("x", "c.png"),
            ],
        )
        .unwrap();
        let p = SurrogateProvider::new(7);
        let a = build_index(&corpus, &p, IndexVariant::Exact, dir.path(), None).unwrap();
        let b = build_index(&corpus, &p, IndexVariant::Exact, dir.path(), None).unwrap();
        assert_eq!(a.ids(), ["z", "y", "x"]);
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.provider_id(), "surrogate:7");
    }

    #[test]
    fn missing_image_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let corpus =
            Corpus::new(CorpusMetadata::new("p"), vec![record("gone", "nope.png")]).unwrap();
        let err = build_index(
            &corpus,
            &SurrogateProvider::new(1),
            IndexVariant::Exact,
            dir.path(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, BuildError::ImageRead { record_id, .. } if record_id == "gone"));
    }

    #[test]
    fn urls_are_not_resolved() {
        assert_eq!(resolve_image(Path::new("/r"), "https://x/y.png"), None);
        assert_eq!(
            resolve_image(Path::new("/r"), "y.png"),
            Some(PathBuf::from("/r/y.png"))
        );
    }
}
