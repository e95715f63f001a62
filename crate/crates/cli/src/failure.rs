use std::fmt;

use fearec_core::Error;

/// Exit status of a failed command: 1 for a failed check, metric gate or
/// non-finite training state, 2 for I/O, parse and configuration problems.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Config(String),
    Io(String),
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Failure::Io(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) | Failure::Io(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Check(m) => write!(f, "{m}"),
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) => Failure::Check(e.to_string()),
            Error::Io { .. } | Error::Parse { .. } | Error::Json(_) | Error::Checkpoint(_) => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}
