//! Command-line flags and the `--config` file that mirrors them.
//!
//! Precedence: flag, then `ALT4B_*` environment variable, then config file,
//! then built-in default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "alt4blind",
    version,
    about = "Chart alt-text retrieval toolkit"
)]
pub struct Cli {
    /// TOML file whose keys mirror the flags (see `docs/cli.md`).
    #[arg(long, global = true, env = "ALT4B_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (surrogate encoder, graph levels, synthetic data).
    #[arg(long, global = true, env = "ALT4B_SEED")]
    pub seed: Option<u64>,
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drop records that are not charts, too short, or lack semantic content.
    Filter(FilterArgs),
    /// Embed a corpus and write an index file.
    Build(BuildArgs),
    /// Score an index against relevance judgments.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Generate a clustered synthetic corpus with judgments and an index.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FilterArgs {
    /// Input corpus (JSONL).
    pub input: Option<PathBuf>,
    /// Output corpus of kept records.
    pub output: Option<PathBuf>,
    /// Rule table; defaults to the built-in one.
    #[arg(long, env = "ALT4B_RULES")]
    pub rules: Option<PathBuf>,
    #[arg(long, env = "ALT4B_MIN_TOKENS")]
    pub min_tokens: Option<usize>,
    #[arg(long, env = "ALT4B_MIN_LEVELS")]
    pub min_levels: Option<usize>,
    /// Keep records whose chart type is `other`.
    #[arg(long, env = "ALT4B_ALLOW_NON_CHARTS")]
    pub allow_non_charts: bool,
    /// Rejection report; defaults to `<output>.rejected.jsonl`.
    #[arg(long, env = "ALT4B_REPORT")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BuildArgs {
    /// Corpus to embed.
    pub corpus: Option<PathBuf>,
    /// Index file to write.
    pub index_out: Option<PathBuf>,
    /// `surrogate:<seed>` or `remote:<url>`; defaults to `surrogate:<--seed>`.
    #[arg(long, env = "ALT4B_PROVIDER")]
    pub provider: Option<String>,
    /// Build the approximate (layered graph) variant.
    #[arg(long, env = "ALT4B_ANN")]
    pub ann: bool,
    #[arg(long, env = "ALT4B_M")]
    pub m: Option<usize>,
    #[arg(long, env = "ALT4B_EF_CONSTRUCTION")]
    pub ef_construction: Option<usize>,
    #[arg(long, env = "ALT4B_EF_SEARCH")]
    pub ef_search: Option<usize>,
    /// Directory that relative image refs resolve against; defaults to the corpus directory.
    #[arg(long, env = "ALT4B_IMAGE_ROOT")]
    pub image_root: Option<PathBuf>,
    /// Remote encoder request timeout in seconds.
    #[arg(long, env = "ALT4B_TIMEOUT_SECS")]
    pub timeout_secs: Option<f64>,
    /// Remote encoder concurrent request limit.
    #[arg(long, env = "ALT4B_MAX_IN_FLIGHT")]
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long, env = "ALT4B_INDEX")]
    pub index: Option<PathBuf>,
    #[arg(long, env = "ALT4B_JUDGMENTS")]
    pub judgments: Option<PathBuf>,
    #[arg(long, env = "ALT4B_K")]
    pub k: Option<usize>,
    /// Keep each query's own record in its results.
    #[arg(long, env = "ALT4B_INCLUDE_SELF")]
    pub include_self: bool,
    /// Fuse text similarity with this weight on the image score.
    #[arg(long, env = "ALT4B_ALPHA")]
    pub alpha: Option<f64>,
    /// Beam width for approximate indexes.
    #[arg(long, env = "ALT4B_EF_SEARCH")]
    pub ef_search: Option<usize>,
    /// Report file; defaults to `eval-report.json`.
    #[arg(long, env = "ALT4B_REPORT")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ServeArgs {
    #[arg(long, env = "ALT4B_CORPUS")]
    pub corpus: Option<PathBuf>,
    #[arg(long, env = "ALT4B_INDEX")]
    pub index: Option<PathBuf>,
    #[arg(long, env = "ALT4B_PROVIDER")]
    pub provider: Option<String>,
    #[arg(long, env = "ALT4B_HOST")]
    pub host: Option<String>,
    #[arg(long, env = "ALT4B_PORT")]
    pub port: Option<u16>,
    #[arg(long, env = "ALT4B_K")]
    pub k: Option<usize>,
    /// Default fusion weight for refine requests.
    #[arg(long, env = "ALT4B_ALPHA")]
    pub alpha: Option<f64>,
    /// Idle session lifetime in minutes.
    #[arg(long, env = "ALT4B_SESSION_TTL")]
    pub session_ttl: Option<f64>,
    #[arg(long, env = "ALT4B_GUIDELINES")]
    pub guidelines: Option<PathBuf>,
    #[arg(long, env = "ALT4B_CORS_ORIGIN")]
    pub cors_origin: Option<String>,
    /// Write uploads to this directory instead of keeping them in memory only.
    #[arg(long, env = "ALT4B_SPOOL_UPLOADS")]
    pub spool_uploads: Option<PathBuf>,
    #[arg(long, env = "ALT4B_IMAGE_ROOT")]
    pub image_root: Option<PathBuf>,
    #[arg(long, env = "ALT4B_MAX_UPLOAD_MIB")]
    pub max_upload_mib: Option<usize>,
    #[arg(long, env = "ALT4B_TIMEOUT_SECS")]
    pub timeout_secs: Option<f64>,
    #[arg(long, env = "ALT4B_MAX_IN_FLIGHT")]
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Directory to write into.
    pub out_dir: Option<PathBuf>,
    #[arg(long, env = "ALT4B_CLUSTERS")]
    pub clusters: Option<usize>,
    #[arg(long, env = "ALT4B_PER_CLUSTER")]
    pub per_cluster: Option<usize>,
    #[arg(long, env = "ALT4B_NOISE")]
    pub noise: Option<f64>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub filter: FilterArgs,
    pub build: BuildArgs,
    pub eval: EvalArgs,
    pub serve: ServeArgs,
    pub synth: SynthArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

/// Fills every unset field of `self` from `file`.
pub trait Overlay {
    fn overlay(self, file: Self) -> Self;
}

macro_rules! overlay {
    ($ty:ty { $($opt:ident),* } { $($flag:ident),* }) => {
        impl Overlay for $ty {
            fn overlay(self, file: Self) -> Self {
                Self {
                    $($opt: self.$opt.or(file.$opt),)*
                    $($flag: self.$flag || file.$flag,)*
                }
            }
        }
    };
}

overlay!(FilterArgs { input, output, rules, min_tokens, min_levels, report } { allow_non_charts });
overlay!(BuildArgs {
    corpus, index_out, provider, m, ef_construction, ef_search, image_root, timeout_secs,
    max_in_flight
} { ann });
overlay!(EvalArgs { index, judgments, k, alpha, ef_search, report } { include_self });
overlay!(ServeArgs {
    corpus, index, provider, host, port, k, alpha, session_ttl, guidelines, cors_origin,
    spool_uploads, image_root, max_upload_mib, timeout_secs, max_in_flight
} {});
overlay!(SynthArgs { out_dir, clusters, per_cluster, noise } {});

/// Returns the value or a usage error naming the missing argument.
pub fn required<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("missing required argument <{name}>")))
}
