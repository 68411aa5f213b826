use std::fmt;
use std::path::{Path, PathBuf};

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config values. Exit 2.
    Usage(String),
    /// A file could not be read or written. Exit 2.
    Io { path: PathBuf, source: std::io::Error },
    /// An input file was read but failed validation. Exit 2.
    Input { path: PathBuf, message: String },
    /// Inputs are valid but the analysis cannot be carried out. Exit 1.
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 1,
            _ => 2,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, message: impl fmt::Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn infeasible(message: impl fmt::Display) -> Self {
        CliError::Infeasible(message.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Input { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::Infeasible(m) => write!(f, "analysis infeasible: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
