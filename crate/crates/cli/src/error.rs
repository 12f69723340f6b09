use std::fmt;

/// Exit status 1 for problems with the user's input, 2 for our own.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn user(m: impl Into<String>) -> Self {
        CliError::User(m.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) => f.write_str(m),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<fpgavirt_core::Error> for CliError {
    fn from(e: fpgavirt_core::Error) -> Self {
        match e {
            // An engine that breaks the ABI contract is our fault, not the program's.
            fpgavirt_core::Error::Protocol(_) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<fpgavirt_core::Diagnostic> for CliError {
    fn from(d: fpgavirt_core::Diagnostic) -> Self {
        CliError::User(d.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::User(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
