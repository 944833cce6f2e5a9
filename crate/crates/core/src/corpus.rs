//! Chart records and the line-delimited corpus file.
//!
//! A corpus file is UTF-8 text with one JSON object per line. The first line
//! may be a header of the form `{"corpus":{...metadata...}}`; every other
//! non-blank line is one [`ChartRecord`]. Optional record fields are omitted
//! when unset, so a missing caption and an empty caption stay distinct.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::semantics::SemanticProfile;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartType {
    Line,
    Bar,
    Area,
    Pie,
    Scatter,
    Multivariate,
    Panel,
    Other,
}

impl ChartType {
    pub const ALL: [ChartType; 8] = [
        ChartType::Line,
        ChartType::Bar,
        ChartType::Area,
        ChartType::Pie,
        ChartType::Scatter,
        ChartType::Multivariate,
        ChartType::Panel,
        ChartType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Line => "line",
            ChartType::Bar => "bar",
            ChartType::Area => "area",
            ChartType::Pie => "pie",
            ChartType::Scatter => "scatter",
            ChartType::Multivariate => "multivariate",
            ChartType::Panel => "panel",
            ChartType::Other => "other",
        }
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChartType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChartType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown chart type {s:?}"))
    }
}

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartRecord {
    pub id: String,
    pub image_ref: String,
    pub alt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub chart_type: ChartType,
    pub source_venue: String,
    pub year: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_profile: Option<SemanticProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusMetadata {
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub schema_version: u32,
    /// Seed of the run that produced this corpus, when one was involved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CorpusMetadata {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            schema_version: SCHEMA_VERSION,
            seed: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    corpus: CorpusMetadata,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("unsupported corpus schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaMismatch { found: u32 },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// An ordered collection of chart records with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub metadata: CorpusMetadata,
    records: Vec<ChartRecord>,
}

impl Corpus {
    pub fn new(metadata: CorpusMetadata, records: Vec<ChartRecord>) -> Result<Self, CorpusError> {
        if metadata.schema_version != SCHEMA_VERSION {
            return Err(CorpusError::SchemaMismatch {
                found: metadata.schema_version,
            });
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { metadata, records })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            metadata: CorpusMetadata::new(name),
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[ChartRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ChartRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ChartRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Canonical serialization: header line followed by one line per record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = HeaderRef {
            corpus: &self.metadata,
        };
        out.push_str(&serde_json::to_string(&header).expect("metadata serializes"));
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses corpus text. `default_name` names a corpus whose file has no header.
    pub fn from_jsonl(text: &str, default_name: &str) -> Result<Self, CorpusError> {
        let mut metadata = None;
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let value: Value =
                serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if is_header(&value) {
                if idx != 0 {
                    return Err(CorpusError::MalformedLine {
                        line: line_no,
                        message: "corpus header is only allowed on the first line".into(),
                    });
                }
                let header: Header =
                    serde_json::from_value(value).map_err(|e| CorpusError::MalformedLine {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                if header.corpus.schema_version != SCHEMA_VERSION {
                    return Err(CorpusError::SchemaMismatch {
                        found: header.corpus.schema_version,
                    });
                }
                metadata = Some(header.corpus);
                continue;
            }
            let record: ChartRecord =
                serde_json::from_value(value).map_err(|e| CorpusError::MalformedLine {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if record.id.is_empty() {
                return Err(CorpusError::MalformedLine {
                    line: line_no,
                    message: "id must be non-empty".into(),
                });
            }
            if !seen.insert(record.id.clone()) {
                return Err(CorpusError::DuplicateId(record.id));
            }
            records.push(record);
        }
        Ok(Self {
            metadata: metadata.unwrap_or_else(|| CorpusMetadata::new(default_name)),
            records,
        })
    }
}

#[derive(Serialize)]
struct HeaderRef<'a> {
    corpus: &'a CorpusMetadata,
}

fn is_header(value: &Value) -> bool {
    value
        .as_object()
        .is_some_and(|o| o.len() == 1 && o.contains_key("corpus"))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    Corpus::from_jsonl(&text, stem)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(corpus.to_jsonl().as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// A broken record invariant: the offending field and the rule it breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub rule: &'static str,
}

impl Violation {
    const fn new(field: &'static str, rule: &'static str) -> Self {
        Self { field, rule }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every record invariant. An empty list means the record is valid.
pub fn validate_record(record: &ChartRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.is_empty() {
        out.push(Violation::new("id", "non-empty"));
    }
    if record.image_ref.is_empty() {
        out.push(Violation::new("image_ref", "non-empty"));
    }
    if record.alt_text.is_empty() {
        out.push(Violation::new("alt_text", "non-empty"));
    }
    if let Some(q) = record.quality_score {
        if !q.is_finite() || q < 0.0 {
            out.push(Violation::new("quality_score", "non-negative"));
        }
    }
    if let Some(p) = &record.semantic_profile {
        if !p.is_well_formed() {
            out.push(Violation::new("semantic_profile", "well-formed"));
        }
    }
    out
}

/// Validates an untyped JSON record, as read from a file before typing.
///
/// Reports missing or mistyped required keys and out-of-enum chart types, then
/// the typed invariants of [`validate_record`] when the value types cleanly.
pub fn validate_value(value: &Value) -> Vec<Violation> {
    let Some(obj) = value.as_object() else {
        return vec![Violation::new("record", "object")];
    };
    let mut out = Vec::new();
    for key in ["id", "image_ref", "alt_text", "source_venue"] {
        match obj.get(key) {
            None => out.push(Violation::new(key, "required")),
            Some(v) if !v.is_string() => out.push(Violation::new(key, "string")),
            _ => {}
        }
    }
    match obj.get("year") {
        None => out.push(Violation::new("year", "required")),
        Some(v) if !v.is_i64() => out.push(Violation::new("year", "integer")),
        _ => {}
    }
    match obj.get("chart_type") {
        None => out.push(Violation::new("chart_type", "required")),
        Some(v) => {
            if v.as_str()
                .and_then(|s| s.parse::<ChartType>().ok())
                .is_none()
            {
                out.push(Violation::new("chart_type", "enum"));
            }
        }
    }
    if let Some(v) = obj.get("caption") {
        if !v.is_string() {
            out.push(Violation::new("caption", "string"));
        }
    }
    if out.is_empty() {
        match serde_json::from_value::<ChartRecord>(value.clone()) {
            Ok(record) => out.extend(validate_record(&record)),
            Err(_) => out.push(Violation::new("record", "schema")),
        }
    }
    out
}
