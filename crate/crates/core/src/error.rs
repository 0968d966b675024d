use std::io;

/// Errors surfaced by the library.
///
/// Variants are split into configuration problems (bad parameters, bad
/// geometry) and data problems (unreadable or malformed inputs) so that
/// front ends can map them onto distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input too short: {0}")]
    EmptyInput(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate steering vector: reference entry is zero")]
    DegenerateSteering,
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// True for errors caused by parameters rather than by input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Geometry(_) | Error::Toml(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
