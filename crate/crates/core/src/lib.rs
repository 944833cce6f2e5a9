//! Chart similarity retrieval for alt-text authoring.
//!
//! Given a chart image (and optionally a draft description), the engine
//! retrieves the most similar charts from a curated corpus of human-written,
//! semantically scored alt-texts. The crate holds everything below the HTTP
//! layer:
//!
//! - [`corpus`]: chart records and the line-delimited corpus file format
//! - [`semantics`]: rule-based four-level semantic classification, quality
//!   scoring and the corpus filter
//! - [`embedding`]: 512-dimensional unit embeddings behind a provider
//!   contract (deterministic surrogate or remote encoder)
//! - [`index`]: exact and layered-graph approximate top-k search with fused
//!   image/text scoring and a checksummed binary file format
//! - [`eval`]: P@k / R@k evaluation and synthetic clustered corpora
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the single-precision types used on disk and on the wire.

pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod hash;
pub mod index;
pub mod pipeline;
pub mod scalar;
pub mod semantics;

pub use corpus::{ChartRecord, ChartType, Corpus, CorpusError, CorpusMetadata};
pub use embedding::{
    cosine, EmbedError, EmbeddingProvider, EmbeddingVector, Modality, ProviderSpec, DIM,
};
pub use eval::{EvalConfig, EvalError, EvalReport, RelevanceJudgment};
pub use index::{
    AnnParams, FusedQuery, IndexError, IndexVariant, Ranked, RetrievalResult, VectorIndex,
};
pub use scalar::Scalar;
pub use semantics::{FilterConfig, Level, RejectReason, RuleTable, SemanticProfile};

/// Single-precision embedding, the type exchanged with encoders and stored on disk.
pub type Embedding = EmbeddingVector<f32>;
/// Double-precision embedding, useful for reference computations.
pub type Embedding64 = EmbeddingVector<f64>;
/// Single-precision vector index.
pub type Index = VectorIndex<f32>;
/// Double-precision vector index.
pub type Index64 = VectorIndex<f64>;
/// Query against a single-precision index.
pub type Query = FusedQuery<f32>;
/// Ranking produced by a single-precision index.
pub type Retrieval = RetrievalResult<f32>;
