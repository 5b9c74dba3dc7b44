use std::fmt;

use neuraltopics::Error;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration values.
    Usage(String),
    /// Unreadable or malformed input files.
    Input(String),
    /// Checkpoint and corpus or vocabulary disagree.
    Mismatch(String),
    /// Training or evaluation failed numerically.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn map_message(self, f: impl FnOnce(String) -> String) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(f(m)),
            CliError::Input(m) => CliError::Input(f(m)),
            CliError::Mismatch(m) => CliError::Mismatch(f(m)),
            CliError::Runtime(m) => CliError::Runtime(f(m)),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Mismatch(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Io { .. } | Error::Parse { .. } | Error::EmptyVocabulary => CliError::Input(m),
            Error::Contract(_) => CliError::Usage(m),
            Error::Checkpoint(_) | Error::Vocabulary { .. } | Error::Dimension { .. } => CliError::Mismatch(m),
            Error::State(_) | Error::NonFinite(_) | Error::Degenerate(_) => CliError::Runtime(m),
        }
    }
}
