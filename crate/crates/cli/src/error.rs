use std::fmt;
use std::path::Path;

use tna_core::TnaError;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, invalid configuration, missing input: exit 2.
    Usage(String),
    /// Anything that failed while doing the work: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
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
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<TnaError> for CliError {
    fn from(e: TnaError) -> Self {
        match e {
            TnaError::Config(_) | TnaError::Ingest { .. } | TnaError::Format { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Fails with a usage error unless `path` names an existing file.
pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such file", path.display())))
    }
}
