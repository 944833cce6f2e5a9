//! Four-level semantic classification of alt-text and corpus quality scoring.
//!
//! Levels follow the usual taxonomy for chart descriptions:
//! L1 encoded elements (chart type, axes, title), L2 statistical facts,
//! L3 perceived trends and patterns, L4 domain context. Classification is a
//! deterministic substring match of a [`RuleTable`] against each sentence.

mod filter;

pub use filter::{
    filter_corpus, FilterConfig, FilterConfigError, FilterOutcome, RejectReason, Rejection,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_RULES: &str = include_str!("../../../../assets/semantic-rules.tsv");

/// Sentence-count contribution to the quality score saturates here.
const SENTENCE_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
    L4,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::L1, Level::L2, Level::L3, Level::L4];
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3 => "L3",
            Level::L4 => "L4",
        };
        f.write_str(s)
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "L1" | "l1" => Ok(Level::L1),
            "L2" | "l2" => Ok(Level::L2),
            "L3" | "l3" => Ok(Level::L3),
            "L4" | "l4" => Ok(Level::L4),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

/// One rule hit: which sentence matched which pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub sentence: usize,
    pub pattern: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticProfile {
    pub levels_present: BTreeSet<Level>,
    pub evidence: BTreeMap<Level, Vec<Evidence>>,
    pub sentence_count: usize,
}

impl SemanticProfile {
    pub fn level_count(&self) -> usize {
        self.levels_present.len()
    }

    pub fn is_well_formed(&self) -> bool {
        let with_evidence: BTreeSet<Level> = self
            .evidence
            .iter()
            .filter(|(_, hits)| !hits.is_empty())
            .map(|(level, _)| *level)
            .collect();
        if with_evidence != self.levels_present {
            return false;
        }
        let sentences: BTreeSet<usize> = self
            .evidence
            .values()
            .flatten()
            .map(|e| e.sentence)
            .collect();
        sentences.len() <= self.sentence_count && sentences.iter().all(|&s| s < self.sentence_count)
    }
}

/// `|levels| + min(sentences, 8) / 10`, in `[0, 4.8]`.
pub fn quality_score(profile: &SemanticProfile) -> f64 {
    profile.level_count() as f64 + profile.sentence_count.min(SENTENCE_CAP) as f64 / 10.0
}

/// Splits text into sentences at `.`, `!` and `?`, dropping empty pieces.
///
/// The browser client segments text with the same rule.
pub fn split_sentences(text: &str) -> Vec<&str> {
    text.split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Tokens are maximal runs of non-whitespace.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule table line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cannot read rule table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub level: Level,
    /// Lowercased pattern.
    pub pattern: String,
}

/// Ordered `(level, pattern)` rules, loaded from a tab-separated file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

impl Default for RuleTable {
    fn default() -> Self {
        Self::parse(DEFAULT_RULES).expect("shipped rule table parses")
    }
}

impl RuleTable {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (level, pattern) = line.split_once('\t').ok_or_else(|| RuleError::Malformed {
                line: line_no,
                message: "expected <level>\\t<pattern>".into(),
            })?;
            let level = level
                .parse::<Level>()
                .map_err(|message| RuleError::Malformed {
                    line: line_no,
                    message,
                })?;
            let pattern = pattern.trim().to_lowercase();
            if pattern.is_empty() {
                return Err(RuleError::Malformed {
                    line: line_no,
                    message: "empty pattern".into(),
                });
            }
            rules.push(Rule { level, pattern });
        }
        Ok(Self { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Classifies every sentence of `alt_text`; levels present are the union.
    pub fn classify(&self, alt_text: &str) -> SemanticProfile {
        let sentences = split_sentences(alt_text);
        let mut evidence: BTreeMap<Level, Vec<Evidence>> = BTreeMap::new();
        for (idx, sentence) in sentences.iter().enumerate() {
            let lowered = sentence.to_lowercase();
            for rule in &self.rules {
                if lowered.contains(&rule.pattern) {
                    evidence.entry(rule.level).or_default().push(Evidence {
                        sentence: idx,
                        pattern: rule.pattern.clone(),
                    });
                }
            }
        }
        SemanticProfile {
            levels_present: evidence.keys().copied().collect(),
            evidence,
            sentence_count: sentences.len(),
        }
    }
}

/// Classifies with the shipped rule table.
pub fn classify_levels(alt_text: &str) -> SemanticProfile {
    RuleTable::default().classify(alt_text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn levels(ls: &[Level]) -> BTreeSet<Level> {
        ls.iter().copied().collect()
    }

    #[test]
    fn bar_chart_sentence_is_level_one() {
        let p = classify_levels("A bar chart with x-axis showing years.");
        assert_eq!(p.levels_present, levels(&[Level::L1]));
        assert_eq!(p.sentence_count, 1);
        let patterns: Vec<_> = p.evidence[&Level::L1]
            .iter()
            .map(|e| e.pattern.as_str())
            .collect();
        assert_eq!(patterns, ["bar chart", "axis", "x-axis"]);
    }

    #[test]
    fn empty_text_has_no_levels() {
        let p = classify_levels("");
        assert!(p.levels_present.is_empty());
        assert_eq!(p.sentence_count, 0);
        assert_eq!(quality_score(&p), 0.0);
    }

    #[test]
    fn peaks_suggesting_and_axis() {
        let p = classify_levels(
            "The line peaks in 2019, suggesting policy impact. The y-axis shows case counts.",
        );
        assert_eq!(p.levels_present, levels(&[Level::L1, Level::L3, Level::L4]));
        assert_eq!(p.sentence_count, 2);
        assert_eq!(
            p.evidence[&Level::L3][0],
            Evidence {
                sentence: 0,
                pattern: "peak".into()
            }
        );
        assert!(p.evidence[&Level::L1].iter().all(|e| e.sentence == 1));
        assert!((quality_score(&p) - 3.2).abs() < 1e-12);
    }

    #[test]
    fn matching_is_case_insensitive() {
        let p = classify_levels("THE TREND IS CLEAR");
        assert_eq!(p.levels_present, levels(&[Level::L3]));
    }

    #[test]
    fn quality_score_caps_sentences() {
        let p = SemanticProfile {
            levels_present: levels(&Level::ALL),
            evidence: Level::ALL
                .iter()
                .map(|l| {
                    (
                        *l,
                        vec![Evidence {
                            sentence: 0,
                            pattern: "x".into(),
                        }],
                    )
                })
                .collect(),
            sentence_count: 12,
        };
        assert!((quality_score(&p) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("One. Two! Three? "),
            ["One", "Two", "Three"]
        );
        assert_eq!(split_sentences("...  "), Vec::<&str>::new());
        assert_eq!(token_count("  a  b\tc\n"), 3);
    }

    #[test]
    fn rule_table_parse_errors() {
        assert!(matches!(
            RuleTable::parse("L1 bar chart"),
            Err(RuleError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            RuleTable::parse("# c\nL5\tfoo"),
            Err(RuleError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            RuleTable::parse("L1\t  "),
            Err(RuleError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn custom_rules_extend_classification() {
        let rules = RuleTable::parse("L2\tTOTAL\nL4\tpolicy").unwrap();
        let p = rules.classify("Total sales. Policy matters.");
        assert_eq!(p.levels_present, levels(&[Level::L2, Level::L4]));
        assert_eq!(rules.rules()[0].pattern, "total");
    }

    #[test]
    fn default_table_has_all_levels() {
        let t = RuleTable::default();
        for level in Level::ALL {
            assert!(t.rules().iter().any(|r| r.level == level));
        }
        assert_eq!(t.rules().len(), 12 + 13 + 11 + 8);
    }

    proptest! {
        #[test]
        fn classification_is_deterministic(text in "\\PC{0,200}") {
            prop_assert_eq!(classify_levels(&text), classify_levels(&text));
        }

        #[test]
        fn appending_a_sentence_never_removes_a_level(
            a in "[a-zA-Z %,-]{0,80}",
            b in "[a-zA-Z %,-]{0,80}",
        ) {
            let first = classify_levels(&format!("{a}."));
            let both = classify_levels(&format!("{a}. {b}."));
            prop_assert!(first.levels_present.is_subset(&both.levels_present));
        }

        #[test]
        fn profiles_are_well_formed_and_scores_bounded(text in "\\PC{0,300}") {
            let p = classify_levels(&text);
            prop_assert!(p.is_well_formed());
            let q = quality_score(&p);
            prop_assert!((0.0..=4.8).contains(&q));
            prop_assert_eq!(q == 0.0, p.levels_present.is_empty() && p.sentence_count == 0);
        }
    }
}
