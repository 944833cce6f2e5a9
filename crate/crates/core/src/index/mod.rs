//! Top-k cosine search over paired image/text embeddings.
//!
//! Every record stores an image vector and a text vector. A [`FusedQuery`]
//! scores a record as `alpha * cos(image) + (1 - alpha) * cos(text)`, or the
//! plain image cosine when the query carries no text. Rankings sort by score
//! descending, then record id ascending.
//!
//! Two variants share this contract: [`IndexVariant::Exact`] scores every
//! entry; [`IndexVariant::Ann`] walks a layered proximity graph per modality
//! and rescores the union of graph candidates exactly.

mod graph;
mod oracle;
mod persist;

pub use oracle::query_exact_oracle;
pub use persist::{load_index, save_index, MAGIC, VERSION};

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingVector, Modality, DIM};
use crate::scalar::{self, Scalar};
use graph::LayeredGraph;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("record id {0:?} already indexed")]
    DuplicateId(String),
    #[error("provider mismatch: index holds {expected}, vector from {found}")]
    ProviderMismatch { expected: String, found: String },
    #[error("expected a {expected} vector, got {found}")]
    WrongModality { expected: Modality, found: Modality },
    #[error("index is empty")]
    EmptyIndex,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a supported index file: {0}")]
    VersionMismatch(String),
    #[error("index file checksum mismatch")]
    ChecksumMismatch,
    #[error("index file is structurally invalid: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnParams {
    /// Links per node on upper layers; layer 0 allows twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Seeds node level assignment.
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "variant")]
pub enum IndexVariant {
    Exact,
    Ann(AnnParams),
}

/// A top-k request. `alpha` weights image similarity against text similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedQuery<S: Scalar> {
    image: EmbeddingVector<S>,
    text: Option<EmbeddingVector<S>>,
    alpha: S,
    k: usize,
    exclude: BTreeSet<String>,
}

impl<S: Scalar> FusedQuery<S> {
    /// Image-only query (`alpha = 1`).
    pub fn image(image: EmbeddingVector<S>, k: usize) -> Result<Self, IndexError> {
        expect_modality(&image, Modality::Image)?;
        if k == 0 {
            return Err(IndexError::InvalidQuery("k must be at least 1".into()));
        }
        Ok(Self {
            image,
            text: None,
            alpha: S::one(),
            k,
            exclude: BTreeSet::new(),
        })
    }

    /// Image plus draft-text query.
    pub fn fused(
        image: EmbeddingVector<S>,
        text: EmbeddingVector<S>,
        alpha: S,
        k: usize,
    ) -> Result<Self, IndexError> {
        let mut q = Self::image(image, k)?;
        expect_modality(&text, Modality::Text)?;
        if text.provider_id() != q.image.provider_id() {
            return Err(IndexError::ProviderMismatch {
                expected: q.image.provider_id().to_string(),
                found: text.provider_id().to_string(),
            });
        }
        if !(alpha >= S::zero() && alpha <= S::one()) {
            return Err(IndexError::InvalidQuery(format!(
                "alpha {alpha} outside [0, 1]"
            )));
        }
        q.text = Some(text);
        q.alpha = alpha;
        Ok(q)
    }

    /// Drops the given record ids from the ranking.
    pub fn excluding<I, T>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        self.exclude.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn image_vector(&self) -> &EmbeddingVector<S> {
        &self.image
    }

    pub fn text_vector(&self) -> Option<&EmbeddingVector<S>> {
        self.text.as_ref()
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn excluded(&self) -> &BTreeSet<String> {
        &self.exclude
    }

    /// Scores one record's vectors against this query.
    pub(crate) fn score(&self, image: &[S], text: &[S]) -> Ranked<S> {
        let image_score = scalar::dot(self.image.values(), image);
        let text_score = self.text.as_ref().map(|t| scalar::dot(t.values(), text));
        let fused_score = match text_score {
            Some(t) => self.alpha * image_score + (S::one() - self.alpha) * t,
            None => image_score,
        };
        Ranked {
            record_id: String::new(),
            fused_score,
            image_score,
            text_score,
        }
    }
}

fn expect_modality<S: Scalar>(
    v: &EmbeddingVector<S>,
    expected: Modality,
) -> Result<(), IndexError> {
    if v.modality() != expected {
        return Err(IndexError::WrongModality {
            expected,
            found: v.modality(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked<S> {
    pub record_id: String,
    pub fused_score: S,
    pub image_score: S,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text_score: Option<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult<S> {
    pub ranked: Vec<Ranked<S>>,
}

impl<S> RetrievalResult<S> {
    pub fn ids(&self) -> Vec<&str> {
        self.ranked.iter().map(|r| r.record_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }
}

/// Ranking order: higher fused score first, then ascending record id.
pub(crate) fn rank_order<S: Scalar>(a: &Ranked<S>, b: &Ranked<S>) -> Ordering {
    b.fused_score
        .partial_cmp(&a.fused_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.record_id.cmp(&b.record_id))
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Search {
    Exact,
    Ann {
        params: AnnParams,
        image_graph: LayeredGraph,
        text_graph: LayeredGraph,
    },
}

/// Stored embeddings for a corpus, searchable by fused cosine similarity.
///
/// Built single-writer through [`insert`](Self::insert); once built, share it
/// behind an `Arc` for concurrent queries.
#[derive(Debug, Clone)]
pub struct VectorIndex<S: Scalar> {
    provider_id: Arc<str>,
    ids: Vec<String>,
    positions: HashMap<String, u32>,
    images: Vec<S>,
    texts: Vec<S>,
    search: Search,
}

/// Borrowed view of one index entry.
#[derive(Debug, Clone, Copy)]
pub struct EntryRef<'a, S> {
    pub id: &'a str,
    pub image: &'a [S],
    pub text: &'a [S],
}

impl<S: Scalar> VectorIndex<S> {
    pub fn new(provider_id: impl Into<Arc<str>>, variant: IndexVariant) -> Self {
        let search = match variant {
            IndexVariant::Exact => Search::Exact,
            IndexVariant::Ann(params) => Search::Ann {
                params,
                image_graph: LayeredGraph::new(params.m, params.ef_construction, params.seed),
                text_graph: LayeredGraph::new(
                    params.m,
                    params.ef_construction,
                    params.seed ^ 0x5445_5854,
                ),
            },
        };
        Self {
            provider_id: provider_id.into(),
            ids: Vec::new(),
            positions: HashMap::new(),
            images: Vec::new(),
            texts: Vec::new(),
            search,
        }
    }

    pub fn exact(provider_id: impl Into<Arc<str>>) -> Self {
        Self::new(provider_id, IndexVariant::Exact)
    }

    pub fn ann(provider_id: impl Into<Arc<str>>, params: AnnParams) -> Self {
        Self::new(provider_id, IndexVariant::Ann(params))
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn variant(&self) -> IndexVariant {
        match &self.search {
            Search::Exact => IndexVariant::Exact,
            Search::Ann { params, .. } => IndexVariant::Ann(*params),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Changes the search beam width of an ANN index; no-op for exact.
    pub fn set_ef_search(&mut self, ef: usize) {
        if let Search::Ann { params, .. } = &mut self.search {
            params.ef_search = ef.max(1);
        }
    }

    fn entry_at(&self, pos: usize) -> EntryRef<'_, S> {
        EntryRef {
            id: &self.ids[pos],
            image: &self.images[pos * DIM..(pos + 1) * DIM],
            text: &self.texts[pos * DIM..(pos + 1) * DIM],
        }
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = EntryRef<'_, S>> + '_ {
        (0..self.ids.len()).map(move |pos| self.entry_at(pos))
    }

    pub fn entry(&self, id: &str) -> Option<EntryRef<'_, S>> {
        self.positions
            .get(id)
            .map(|&pos| self.entry_at(pos as usize))
    }

    /// Reconstructs the stored vectors of a record.
    pub fn vectors(&self, id: &str) -> Option<(EmbeddingVector<S>, EmbeddingVector<S>)> {
        let e = self.entry(id)?;
        let image =
            EmbeddingVector::new(e.image.to_vec(), Modality::Image, self.provider_id.clone())
                .ok()?;
        let text =
            EmbeddingVector::new(e.text.to_vec(), Modality::Text, self.provider_id.clone()).ok()?;
        Some((image, text))
    }

    fn check_vector(&self, v: &EmbeddingVector<S>, modality: Modality) -> Result<(), IndexError> {
        if v.provider_arc().as_ref() != self.provider_id.as_ref() {
            return Err(IndexError::ProviderMismatch {
                expected: self.provider_id.to_string(),
                found: v.provider_id().to_string(),
            });
        }
        expect_modality(v, modality)
    }

    pub fn insert(
        &mut self,
        record_id: impl Into<String>,
        image: &EmbeddingVector<S>,
        text: &EmbeddingVector<S>,
    ) -> Result<(), IndexError> {
        let record_id = record_id.into();
        if self.positions.contains_key(&record_id) {
            return Err(IndexError::DuplicateId(record_id));
        }
        self.check_vector(image, Modality::Image)?;
        self.check_vector(text, Modality::Text)?;
        if self.ids.len() >= u32::MAX as usize {
            return Err(IndexError::InvalidQuery("index is full".into()));
        }
        self.push_raw(record_id, image.values(), text.values());
        Ok(())
    }

    /// Appends vectors that are already known to be valid (file load path).
    fn push_raw(&mut self, record_id: String, image: &[S], text: &[S]) {
        let pos = self.ids.len() as u32;
        self.positions.insert(record_id.clone(), pos);
        self.ids.push(record_id);
        self.images.extend_from_slice(image);
        self.texts.extend_from_slice(text);
        if let Search::Ann {
            image_graph,
            text_graph,
            ..
        } = &mut self.search
        {
            image_graph.insert(pos, &self.images);
            text_graph.insert(pos, &self.texts);
        }
    }

    fn check_query(&self, q: &FusedQuery<S>) -> Result<(), IndexError> {
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if q.image.provider_id() != self.provider_id.as_ref() {
            return Err(IndexError::ProviderMismatch {
                expected: self.provider_id.to_string(),
                found: q.image.provider_id().to_string(),
            });
        }
        Ok(())
    }

    pub fn query(&self, q: &FusedQuery<S>) -> Result<RetrievalResult<S>, IndexError> {
        self.check_query(q)?;
        let ranked = match &self.search {
            Search::Exact => self.top_k(q, 0..self.ids.len()),
            Search::Ann {
                params,
                image_graph,
                text_graph,
            } => {
                let ef = params.ef_search.max(q.k + q.exclude.len());
                let mut candidates: Vec<usize> = image_graph
                    .search(q.image.values(), ef, &self.images)
                    .into_iter()
                    .map(|p| p as usize)
                    .collect();
                if let Some(text) = &q.text {
                    if q.alpha < S::one() {
                        candidates.extend(
                            text_graph
                                .search(text.values(), ef, &self.texts)
                                .into_iter()
                                .map(|p| p as usize),
                        );
                        candidates.sort_unstable();
                        candidates.dedup();
                    }
                }
                self.top_k(q, candidates.into_iter())
            }
        };
        Ok(RetrievalResult { ranked })
    }

    /// Scores the given positions and keeps the best `k` by partial selection.
    fn top_k(&self, q: &FusedQuery<S>, positions: impl Iterator<Item = usize>) -> Vec<Ranked<S>> {
        let mut scored: Vec<(Ranked<S>, usize)> = positions
            .filter(|&pos| !q.exclude.contains(&self.ids[pos]))
            .map(|pos| {
                let e = self.entry_at(pos);
                (q.score(e.image, e.text), pos)
            })
            .collect();
        let cmp = |a: &(Ranked<S>, usize), b: &(Ranked<S>, usize)| {
            b.0.fused_score
                .partial_cmp(&a.0.fused_score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        if scored.len() > q.k {
            scored.select_nth_unstable_by(q.k - 1, cmp);
            scored.truncate(q.k);
        }
        scored.sort_unstable_by(cmp);
        scored
            .into_iter()
            .map(|(mut r, pos)| {
                r.record_id = self.ids[pos].clone();
                r
            })
            .collect()
    }

    /// Number of nodes reachable from the entry point on the bottom layer of
    /// each graph (image, text). `None` for the exact variant.
    pub fn graph_reachability(&self) -> Option<(usize, usize)> {
        match &self.search {
            Search::Exact => None,
            Search::Ann {
                image_graph,
                text_graph,
                ..
            } => Some((
                image_graph.reachable_from_entry(),
                text_graph.reachable_from_entry(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Modality;

    fn vec_from(pairs: &[(usize, f64)], modality: Modality) -> EmbeddingVector<f64> {
        let mut v = vec![0.0; DIM];
        for &(i, x) in pairs {
            v[i] = x;
        }
        EmbeddingVector::normalized(v, modality, "p").unwrap()
    }

    fn img(pairs: &[(usize, f64)]) -> EmbeddingVector<f64> {
        vec_from(pairs, Modality::Image)
    }

    fn txt(pairs: &[(usize, f64)]) -> EmbeddingVector<f64> {
        vec_from(pairs, Modality::Text)
    }

    /// Five hand-built records over the first three axes.
    #[allow(clippy::type_complexity)]
    fn fixture() -> VectorIndex<f64> {
        let mut idx = VectorIndex::exact("p");
        let rows: [(&str, [(usize, f64); 2], [(usize, f64); 2]); 5] = [
            ("a", [(0, 1.0), (1, 0.0)], [(0, 0.0), (2, 1.0)]),
            ("b", [(0, 1.0), (1, 1.0)], [(0, 1.0), (2, 0.0)]),
            ("c", [(0, 0.0), (1, 1.0)], [(0, 1.0), (2, 1.0)]),
            ("d", [(0, 3.0), (1, 1.0)], [(1, 1.0), (2, 0.0)]),
            ("e", [(0, 1.0), (2, 1.0)], [(0, 2.0), (2, 1.0)]),
        ];
        for (id, i, t) in rows {
            idx.insert(id, &img(&i), &txt(&t)).unwrap();
        }
        idx
    }

    #[test]
    fn self_retrieval() {
        let idx = fixture();
        let (i, _) = idx.vectors("c").unwrap();
        let r = idx.query(&FusedQuery::image(i, 1).unwrap()).unwrap();
        assert_eq!(r.ids(), ["c"]);
        assert!((r.ranked[0].image_score - 1.0).abs() < 1e-6);
        assert_eq!(r.ranked[0].text_score, None);
    }

    #[test]
    fn duplicate_and_provider_checks() {
        let mut idx = fixture();
        assert!(matches!(
            idx.insert("a", &img(&[(0, 1.0)]), &txt(&[(0, 1.0)])),
            Err(IndexError::DuplicateId(_))
        ));
        let other = EmbeddingVector::normalized(vec![1.0; DIM], Modality::Image, "q").unwrap();
        assert!(matches!(
            idx.insert("z", &other, &txt(&[(0, 1.0)])),
            Err(IndexError::ProviderMismatch { .. })
        ));
        assert!(matches!(
            idx.insert("z", &txt(&[(0, 1.0)]), &txt(&[(0, 1.0)])),
            Err(IndexError::WrongModality { .. })
        ));
        assert!(!idx.contains("z"));
    }

    #[test]
    fn empty_index_query_fails() {
        let idx: VectorIndex<f64> = VectorIndex::exact("p");
        assert!(matches!(
            idx.query(&FusedQuery::image(img(&[(0, 1.0)]), 3).unwrap()),
            Err(IndexError::EmptyIndex)
        ));
    }

    // Oracle for the five-record fixture, by hand:
    //   query image q_i = e0, query text q_t = e2, alpha 0.5
    //   image cosines: a 1, b 1/sqrt2, c 0, d 3/sqrt10, e 1/sqrt2
    //   text cosines:  a 1, b 0,       c 1/sqrt2, d 0, e 1/sqrt5
    //   fused: a 1.0, b 0.353553, c 0.353553, d 0.474342, e 0.577171
    //   top-3: a, e, d
    #[test]
    fn five_record_fused_ranking_matches_hand_oracle() {
        let idx = fixture();
        let q = FusedQuery::fused(img(&[(0, 1.0)]), txt(&[(2, 1.0)]), 0.5, 3).unwrap();
        let r = idx.query(&q).unwrap();
        assert_eq!(r.ids(), ["a", "e", "d"]);
        let expected = [
            1.0,
            0.5 / 2f64.sqrt() + 0.5 / 5f64.sqrt(),
            1.5 / 10f64.sqrt(),
        ];
        for (got, want) in r.ranked.iter().zip(expected) {
            assert!((got.fused_score - want).abs() < 1e-12);
        }
        // b and c tie at 0.353553; b wins by id when k reaches them.
        let q5 = FusedQuery::fused(img(&[(0, 1.0)]), txt(&[(2, 1.0)]), 0.5, 5).unwrap();
        assert_eq!(idx.query(&q5).unwrap().ids(), ["a", "e", "d", "b", "c"]);
    }

    #[test]
    fn alpha_extremes_degenerate_to_single_modality() {
        let idx = fixture();
        let qi = img(&[(0, 1.0), (1, 2.0)]);
        let qt = txt(&[(0, 1.0), (2, 3.0)]);
        let image_only = idx
            .query(&FusedQuery::image(qi.clone(), 5).unwrap())
            .unwrap();
        let alpha1 = idx
            .query(&FusedQuery::fused(qi.clone(), qt.clone(), 1.0, 5).unwrap())
            .unwrap();
        assert_eq!(image_only.ids(), alpha1.ids());
        for (a, b) in image_only.ranked.iter().zip(&alpha1.ranked) {
            assert_eq!(a.fused_score, b.fused_score);
        }
        let alpha0 = idx
            .query(&FusedQuery::fused(qi, qt.clone(), 0.0, 5).unwrap())
            .unwrap();
        let mut by_text: Vec<_> = idx
            .entries()
            .map(|e| (scalar::dot(qt.values(), e.text), e.id))
            .collect();
        by_text.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        let ids: Vec<_> = by_text.iter().map(|x| x.1).collect();
        assert_eq!(alpha0.ids(), ids);
    }

    #[test]
    fn exclusions_are_honored() {
        let idx = fixture();
        let q = FusedQuery::image(img(&[(0, 1.0)]), 2)
            .unwrap()
            .excluding(["a"]);
        let r = idx.query(&q).unwrap();
        assert!(!r.ids().contains(&"a"));
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn query_validation() {
        assert!(FusedQuery::image(img(&[(0, 1.0)]), 0).is_err());
        assert!(FusedQuery::fused(img(&[(0, 1.0)]), txt(&[(0, 1.0)]), 1.5, 3).is_err());
        assert!(matches!(
            FusedQuery::fused(img(&[(0, 1.0)]), img(&[(0, 1.0)]), 0.5, 3),
            Err(IndexError::WrongModality { .. })
        ));
    }

    #[test]
    fn identical_record_scores_one() {
        let idx = fixture();
        let (i, t) = idx.vectors("e").unwrap();
        let r = idx
            .query(&FusedQuery::fused(i, t, 0.5, 1).unwrap())
            .unwrap();
        assert_eq!(r.ids(), ["e"]);
        assert!((r.ranked[0].fused_score - 1.0).abs() < 1e-6);
    }
}
