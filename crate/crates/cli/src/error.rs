use std::fmt;
use std::process::ExitCode;

use alt4blind_core::corpus::CorpusError;
use alt4blind_core::pipeline::BuildError;
use alt4blind_core::semantics::RuleError;
use alt4blind_core::{EmbedError, EvalError, IndexError};

/// Stable process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    /// Malformed input, configuration, or usage.
    Parse = 2,
    Encoder = 3,
    Io = 4,
    /// Judgments that do not fit the index.
    EvalInput = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Exit::Parse, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(Exit::Io, message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.exit as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let exit = match e {
            CorpusError::IoFailure { .. } => Exit::Io,
            _ => Exit::Parse,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<RuleError> for CliError {
    fn from(e: RuleError) -> Self {
        let exit = match e {
            RuleError::Io { .. } => Exit::Io,
            RuleError::Malformed { .. } => Exit::Parse,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        Self::new(Exit::Encoder, e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        let exit = match e {
            BuildError::Encoder { .. } => Exit::Encoder,
            BuildError::ImageRead { .. } | BuildError::Index(_) => Exit::Io,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        Self::new(Exit::Io, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let exit = match e {
            EvalError::MissingJudgment(_)
            | EvalError::MissingQuery(_)
            | EvalError::EmptyRelevantSet(_)
            | EvalError::DuplicateQuery(_) => Exit::EvalInput,
            EvalError::MalformedLine { .. } | EvalError::ZeroK | EvalError::InvalidParameter(_) => {
                Exit::Parse
            }
            EvalError::Io { .. } | EvalError::Index(_) => Exit::Io,
        };
        Self::new(exit, e.to_string())
    }
}
