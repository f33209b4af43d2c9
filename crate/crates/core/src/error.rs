use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration value or unknown key; maps to a usage exit code.
    #[error("config error: {0}")]
    Config(String),
    /// Mismatched vector lengths, profile sizes, or missing table entries.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Problem size exceeds what exact enumeration supports.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// A simulation produced a non-finite number.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI should use: 2 for usage mistakes the caller
    /// can fix by editing arguments or config, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
