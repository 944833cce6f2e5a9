//! Retrieval quality: precision and recall at k against labeled relevance.

mod synth;

pub use synth::{synth_corpus, SyntheticEntry, SyntheticSet};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::index::{FusedQuery, IndexError, IndexVariant, VectorIndex};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no relevance judgment for query {0:?}")]
    MissingJudgment(String),
    #[error("query {0:?} is not in the index")]
    MissingQuery(String),
    #[error("judgment for {0:?} has no relevant ids")]
    EmptyRelevantSet(String),
    #[error("query {0:?} is judged more than once")]
    DuplicateQuery(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("judgments line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceJudgment {
    pub query_id: String,
    pub relevant_ids: BTreeSet<String>,
}

/// Parses one judgment per line; blank lines are skipped.
pub fn parse_judgments(text: &str) -> Result<Vec<RelevanceJudgment>, EvalError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let j: RelevanceJudgment =
            serde_json::from_str(line).map_err(|e| EvalError::MalformedLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if j.relevant_ids.is_empty() {
            return Err(EvalError::EmptyRelevantSet(j.query_id));
        }
        if !seen.insert(j.query_id.clone()) {
            return Err(EvalError::DuplicateQuery(j.query_id));
        }
        out.push(j);
    }
    Ok(out)
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<RelevanceJudgment>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_judgments(&text)
}

pub fn judgments_to_jsonl(judgments: &[RelevanceJudgment]) -> String {
    judgments
        .iter()
        .map(|j| serde_json::to_string(j).expect("judgment serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub hits: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub per_query: Vec<QueryOutcome>,
    pub config_echo: Value,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Fixed-width text table, one row per query plus the aggregate.
    pub fn render_table(&self) -> String {
        let k = self.k;
        let width = self
            .per_query
            .iter()
            .map(|q| q.query_id.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let mut s = String::new();
        let p = format!("P@{k}");
        let r = format!("R@{k}");
        let _ = writeln!(s, "{:<width$}  {:>5}  {:>6}  {:>6}", "query", "hits", p, r);
        for q in &self.per_query {
            let _ = writeln!(
                s,
                "{:<width$}  {:>5}  {:>6.3}  {:>6.3}",
                q.query_id, q.hits, q.precision, q.recall
            );
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>5}  {:>6.3}  {:>6.3}",
            "mean", "", self.precision_at_k, self.recall_at_k
        );
        let _ = writeln!(
            s,
            "{p} = {:.3}  {r} = {:.3}  ({} queries)",
            self.precision_at_k,
            self.recall_at_k,
            self.per_query.len()
        );
        s
    }
}

/// Scores ranked id lists against judgments.
///
/// Per query: `hits = |top-k ∩ relevant|`, `precision = hits / k`,
/// `recall = hits / |relevant|`. Aggregates are unweighted means.
pub fn precision_recall_at_k(
    results: &BTreeMap<String, Vec<String>>,
    judgments: &[RelevanceJudgment],
    k: usize,
) -> Result<EvalReport, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let by_query: BTreeMap<&str, &RelevanceJudgment> =
        judgments.iter().map(|j| (j.query_id.as_str(), j)).collect();
    let mut per_query = Vec::with_capacity(results.len());
    for (query_id, ranked) in results {
        let judgment = by_query
            .get(query_id.as_str())
            .ok_or_else(|| EvalError::MissingJudgment(query_id.clone()))?;
        if judgment.relevant_ids.is_empty() {
            return Err(EvalError::EmptyRelevantSet(query_id.clone()));
        }
        let hits = ranked
            .iter()
            .take(k)
            .filter(|id| judgment.relevant_ids.contains(*id))
            .count();
        per_query.push(QueryOutcome {
            query_id: query_id.clone(),
            hits,
            precision: hits as f64 / k as f64,
            recall: hits as f64 / judgment.relevant_ids.len() as f64,
        });
    }
    let n = per_query.len().max(1) as f64;
    Ok(EvalReport {
        k,
        precision_at_k: per_query.iter().map(|q| q.precision).sum::<f64>() / n,
        recall_at_k: per_query.iter().map(|q| q.recall).sum::<f64>() / n,
        per_query,
        config_echo: json!({ "k": k }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    /// Fusion weight; `None` queries with the image vector only.
    pub alpha: Option<f64>,
    /// Keep each query's own record in its results and relevant set.
    pub include_self: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 3,
            alpha: None,
            include_self: false,
        }
    }
}

/// Queries the index with each judged record's stored vectors and scores the
/// rankings.
///
/// In leave-self-out mode (the default) the query record is excluded from
/// its own results and removed from its relevant set.
pub fn run_eval<S: Scalar>(
    index: &VectorIndex<S>,
    judgments: &[RelevanceJudgment],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if config.k == 0 {
        return Err(EvalError::ZeroK);
    }
    if let Some(a) = config.alpha {
        if !(0.0..=1.0).contains(&a) {
            return Err(EvalError::InvalidParameter(format!(
                "alpha {a} outside [0, 1]"
            )));
        }
    }
    let outcomes: Vec<(RelevanceJudgment, Vec<String>)> = judgments
        .par_iter()
        .map(|j| {
            let (image, text) = index
                .vectors(&j.query_id)
                .ok_or_else(|| EvalError::MissingQuery(j.query_id.clone()))?;
            let mut q = match config.alpha {
                Some(a) => FusedQuery::fused(image, text, S::of(a), config.k)?,
                None => FusedQuery::image(image, config.k)?,
            };
            let mut judgment = j.clone();
            if !config.include_self {
                q = q.excluding([j.query_id.clone()]);
                judgment.relevant_ids.remove(&j.query_id);
                if judgment.relevant_ids.is_empty() {
                    return Err(EvalError::EmptyRelevantSet(j.query_id.clone()));
                }
            }
            let ranked = index.query(&q)?;
            Ok((
                judgment,
                ranked.ranked.into_iter().map(|r| r.record_id).collect(),
            ))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut results = BTreeMap::new();
    let mut effective = Vec::with_capacity(outcomes.len());
    for (judgment, ranked) in outcomes {
        if results.insert(judgment.query_id.clone(), ranked).is_some() {
            return Err(EvalError::DuplicateQuery(judgment.query_id));
        }
        effective.push(judgment);
    }
    let mut report = precision_recall_at_k(&results, &effective, config.k)?;
    let variant = match index.variant() {
        IndexVariant::Exact => json!({"variant": "exact"}),
        IndexVariant::Ann(p) => json!({
            "variant": "ann",
            "m": p.m,
            "ef_construction": p.ef_construction,
            "ef_search": p.ef_search,
            "seed": p.seed,
        }),
    };
    report.config_echo = json!({
        "k": config.k,
        "alpha": config.alpha,
        "include_self": config.include_self,
        "index": variant,
        "index_size": index.len(),
        "provider_id": index.provider_id(),
        "queries": report.per_query.len(),
    });
    Ok(report)
}
