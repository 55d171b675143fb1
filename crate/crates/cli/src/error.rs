use std::fmt;
use std::path::Path;

/// Exit status 2: the invocation itself is wrong (missing file, bad flag
/// or config value). Exit status 1: the computation failed.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<lbbp_core::Error> for CliError {
    fn from(e: lbbp_core::Error) -> Self {
        use lbbp_core::Error as E;
        match e {
            E::InvalidK { .. } | E::InvalidConfig(_) | E::InvalidLevelSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Inputs are checked up front so a missing file is a usage error rather
/// than a failure halfway through a run.
pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} file {} does not exist", path.display())))
    }
}
