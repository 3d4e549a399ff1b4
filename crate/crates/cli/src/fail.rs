//! Machine-parsable failure codes and exit statuses.

use std::fmt;

use privcap_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Code {
    Input,
    Config,
    Format,
    Numeric,
    Output,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::Input => "E_INPUT",
            Code::Config => "E_CONFIG",
            Code::Format => "E_FORMAT",
            Code::Numeric => "E_NUMERIC",
            Code::Output => "E_OUTPUT",
        }
    }

    pub fn exit_status(self) -> i32 {
        match self {
            Code::Input | Code::Config | Code::Format => 2,
            Code::Numeric => 3,
            Code::Output => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub message: String,
}

impl Failure {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn input(m: impl Into<String>) -> Self {
        Self::new(Code::Input, m)
    }

    pub fn config(m: impl Into<String>) -> Self {
        Self::new(Code::Config, m)
    }

    pub fn output(m: impl Into<String>) -> Self {
        Self::new(Code::Output, m)
    }

    /// Error raised while reading an input file.
    pub fn from_load(name: &str, e: Error) -> Self {
        match e {
            Error::Io(e) => Self::input(format!("inputs.{name}: {e}")),
            e => Self::new(Code::Format, format!("inputs.{name}: {e}")),
        }
    }
}

/// Errors raised by a computation.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Domain(_) | Error::TooLarge(_) => Code::Config,
            Error::Format { .. } | Error::Key(_) | Error::Shape(_) | Error::Validation(_) => Code::Format,
            Error::Io(_) => Code::Output,
            _ => Code::Numeric,
        };
        Self::new(code, e.to_string())
    }
}

impl fmt::Display for Failure {
    /// One line: `CODE: message`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.message.replace(['\n', '\r'], " ");
        write!(f, "{}: {}", self.code.as_str(), msg)
    }
}
