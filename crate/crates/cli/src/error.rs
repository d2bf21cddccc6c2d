use std::fmt;

/// Front-end failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or missing required settings.
    Usage(String),
    /// Unreadable or inconsistent input files.
    Data(String),
    Core(coordgen::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Core(e) => match e {
                coordgen::Error::Resource { .. } => 3,
                coordgen::Error::Model(_) | coordgen::Error::CommonPart { .. } => 4,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<coordgen::Error> for CliError {
    fn from(e: coordgen::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
