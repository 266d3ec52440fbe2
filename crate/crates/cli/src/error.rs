use std::fmt;

/// Failure categories, each with its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Bad configuration or inconsistent inputs.
    Validation,
    /// Numerical failure during a stage.
    Compute,
    /// Missing, unreadable or unwritable files.
    Io,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Validation => 2,
            Category::Io => 3,
            Category::Compute => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { category: Category::Validation, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { category: Category::Io, message: message.into() }
    }

    pub fn compute(message: impl Into<String>) -> Self {
        CliError { category: Category::Compute, message: message.into() }
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<flowrecon::Error> for CliError {
    fn from(e: flowrecon::Error) -> Self {
        use flowrecon::Error as E;
        let category = match &e {
            E::Io { .. } | E::Parse { .. } => Category::Io,
            E::GridMismatch(_) | E::InvalidInput(_) | E::Sensor(_) => Category::Validation,
            E::Rank { .. }
            | E::RankDeficient { .. }
            | E::SingularCovariance { .. }
            | E::BlowUp { .. }
            | E::Extrapolation { .. }
            | E::Orthonormalization { .. } => Category::Compute,
        };
        CliError { category, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
