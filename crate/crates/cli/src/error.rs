use std::fmt;

/// Exit status contract: 2 for bad input or arguments, 3 for failed writes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Write(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn write(msg: impl Into<String>) -> Self {
        CliError::Write(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Write(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Write(m) => f.write_str(m),
        }
    }
}

/// Wraps a library error raised while reading or validating input.
pub fn input_error<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Usage(format!("{context}: {e}"))
}

/// Wraps a library error raised while writing output.
pub fn output_error<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Write(format!("{context}: {e}"))
}
