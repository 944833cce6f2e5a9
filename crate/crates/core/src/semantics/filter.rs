use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{quality_score, token_count, RuleTable};
use crate::corpus::{ChartRecord, ChartType, Corpus};

/// Thresholds for dropping records that are not charts, too short, or too
/// thin on semantic content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_tokens: usize,
    pub min_levels: usize,
    /// Treat `chart_type == other` as "not a chart".
    pub require_chart: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_tokens: 20,
            min_levels: 2,
            require_chart: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterConfigError {
    #[error("min_tokens must be positive")]
    ZeroMinTokens,
    #[error("min_levels must be in [0, 4], got {0}")]
    MinLevelsOutOfRange(usize),
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterConfigError> {
        if self.min_tokens == 0 {
            return Err(FilterConfigError::ZeroMinTokens);
        }
        if self.min_levels > 4 {
            return Err(FilterConfigError::MinLevelsOutOfRange(self.min_levels));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    TooShort,
    TooFewLevels,
    NotAChart,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::TooShort => "TooShort",
            RejectReason::TooFewLevels => "TooFewLevels",
            RejectReason::NotAChart => "NotAChart",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Corpus,
    pub rejected: Vec<Rejection>,
}

enum Verdict {
    Keep(ChartRecord),
    Reject(Rejection),
}

fn judge(record: &ChartRecord, config: &FilterConfig, rules: &RuleTable) -> Verdict {
    let reject = |reason| {
        Verdict::Reject(Rejection {
            id: record.id.clone(),
            reason,
        })
    };
    // Reasons are checked in a fixed order; the first failing one is reported.
    if token_count(&record.alt_text) < config.min_tokens {
        return reject(RejectReason::TooShort);
    }
    let profile = rules.classify(&record.alt_text);
    if profile.level_count() < config.min_levels {
        return reject(RejectReason::TooFewLevels);
    }
    if config.require_chart && record.chart_type == ChartType::Other {
        return reject(RejectReason::NotAChart);
    }
    let mut kept = record.clone();
    kept.quality_score = Some(quality_score(&profile));
    kept.semantic_profile = Some(profile);
    Verdict::Keep(kept)
}

/// Partitions a corpus into kept records (annotated with their semantic
/// profile and quality score) and rejections, both in input order.
pub fn filter_corpus(corpus: &Corpus, config: &FilterConfig, rules: &RuleTable) -> FilterOutcome {
    let verdicts: Vec<Verdict> = corpus
        .records()
        .par_iter()
        .map(|r| judge(r, config, rules))
        .collect();
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for v in verdicts {
        match v {
            Verdict::Keep(r) => kept.push(r),
            Verdict::Reject(r) => rejected.push(r),
        }
    }
    let kept = Corpus::new(corpus.metadata.clone(), kept).expect("subset of a valid corpus");
    FilterOutcome { kept, rejected }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusMetadata;
    use crate::semantics::Level;

    fn record(id: &str, alt: &str, chart_type: ChartType) -> ChartRecord {
        ChartRecord {
            id: id.into(),
            image_ref: format!("{id}.png"),
            alt_text: alt.into(),
            caption: None,
            chart_type,
            source_venue: "CHI".into(),
            year: 2022,
            semantic_profile: None,
            quality_score: None,
        }
    }

    // 30 tokens; "bar chart" and "axis" give L1, "highest" gives L2.
    const THIRTY: &str =
        "A bar chart of monthly rainfall in four cities over one year. The x axis lists \
        months and bars show totals. Seattle has the highest totals in winter months overall.";

    #[test]
    fn short_record_is_rejected() {
        let c = Corpus::new(
            CorpusMetadata::new("t"),
            vec![record("s", "A bar chart of sales.", ChartType::Bar)],
        )
        .unwrap();
        let out = filter_corpus(&c, &FilterConfig::default(), &RuleTable::default());
        assert!(out.kept.is_empty());
        assert_eq!(
            out.rejected,
            vec![Rejection {
                id: "s".into(),
                reason: RejectReason::TooShort
            }]
        );
    }

    #[test]
    fn rich_bar_record_is_kept_with_score() {
        assert_eq!(token_count(THIRTY), 30);
        let c = Corpus::new(
            CorpusMetadata::new("t"),
            vec![record("k", THIRTY, ChartType::Bar)],
        )
        .unwrap();
        let out = filter_corpus(&c, &FilterConfig::default(), &RuleTable::default());
        assert!(out.rejected.is_empty());
        let kept = &out.kept.records()[0];
        let profile = kept.semantic_profile.as_ref().unwrap();
        assert_eq!(
            profile.levels_present.iter().copied().collect::<Vec<_>>(),
            [Level::L1, Level::L2]
        );
        assert_eq!(profile.sentence_count, 3);
        assert!((kept.quality_score.unwrap() - 2.3).abs() < 1e-12);
    }

    #[test]
    fn vacuous_filter_keeps_everything_non_empty() {
        let c = Corpus::new(
            CorpusMetadata::new("t"),
            vec![
                record("a", "x", ChartType::Other),
                record("b", "plain words", ChartType::Line),
                record("c", THIRTY, ChartType::Pie),
            ],
        )
        .unwrap();
        let cfg = FilterConfig {
            min_tokens: 1,
            min_levels: 0,
            require_chart: false,
        };
        let out = filter_corpus(&c, &cfg, &RuleTable::default());
        assert_eq!(out.kept.len(), 3);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn other_chart_type_is_not_a_chart() {
        let c = Corpus::new(
            CorpusMetadata::new("t"),
            vec![record("o", THIRTY, ChartType::Other)],
        )
        .unwrap();
        let out = filter_corpus(&c, &FilterConfig::default(), &RuleTable::default());
        assert_eq!(out.rejected[0].reason, RejectReason::NotAChart);
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::default().validate().is_ok());
        let zero = FilterConfig {
            min_tokens: 0,
            ..Default::default()
        };
        assert_eq!(zero.validate(), Err(FilterConfigError::ZeroMinTokens));
        let five = FilterConfig {
            min_levels: 5,
            ..Default::default()
        };
        assert_eq!(
            five.validate(),
            Err(FilterConfigError::MinLevelsOutOfRange(5))
        );
    }
}
