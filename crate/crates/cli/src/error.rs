use std::fmt;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or model specification.
    Usage(String),
    /// Unreadable or malformed input data.
    Data(String),
    /// A computation failed or produced invalid numbers.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mixcop::Error> for CliError {
    fn from(e: mixcop::Error) -> Self {
        use mixcop::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::Usage(_) | E::InvalidParameter(_) => CliError::Usage(msg),
            E::Data(_) => CliError::Data(msg),
            E::Domain(_) | E::Numerical(_) | E::AtRow { .. } => CliError::Numerical(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
