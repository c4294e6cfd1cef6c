use std::fmt;

/// Exit code for malformed input, unknown names and failed validation.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerically degenerate data.
pub const EXIT_NUMERIC: i32 = 3;
/// Exit code for file-system failures.
pub const EXIT_IO: i32 = 4;

/// A library error tagged with what the command was doing.
#[derive(Debug)]
pub struct CliError {
    pub context: String,
    pub source: bodyfit::Error,
}

impl CliError {
    pub fn new(context: impl Into<String>, source: bodyfit::Error) -> Self {
        Self {
            context: context.into(),
            source,
        }
    }

    pub fn input(context: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(context, bodyfit::Error::InvalidInput(message.into()))
    }

    pub fn exit_code(&self) -> i32 {
        match &self.source {
            bodyfit::Error::Io(_) => EXIT_IO,
            e if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_IO => "io",
            EXIT_NUMERIC => "numeric",
            _ => "input",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "context": self.context,
            "message": self.source.to_string(),
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.context, self.source)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T>;
}

impl<T> Context<T> for bodyfit::Result<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T> {
        self.map_err(|e| CliError::new(what, e))
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, what: impl Into<String>) -> CliResult<T> {
        self.map_err(|e| CliError::new(what, e.into()))
    }
}
