use std::fmt;
use std::path::PathBuf;

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Core(clairaut::Error),
    Io { path: PathBuf, message: String },
    Usage(String),
    VerificationFailed { failures: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: std::io::Error) -> CliError {
        CliError::Io { path: path.into(), message: err.to_string() }
    }

    pub fn code(&self) -> i32 {
        match self {
            CliError::Core(e) => e.exit_code(),
            CliError::Io { .. } | CliError::Usage(_) => 1,
            CliError::VerificationFailed { .. } => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "Io",
            CliError::Usage(_) => "Usage",
            CliError::VerificationFailed { .. } => "Verification",
        }
    }

    /// `error: code=N kind=K msg=...` on a single line.
    pub fn line(&self) -> String {
        let msg: String = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: code={} kind={} msg={}", self.code(), self.kind(), msg)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::VerificationFailed { failures, total } => {
                write!(f, "{failures} of {total} verification checks failed")
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<clairaut::Error> for CliError {
    fn from(e: clairaut::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
