use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("challenge has {got} bits, instance expects {expected}")]
    ChallengeLength { expected: usize, got: usize },

    #[error("non-positive delay {0:e} s")]
    NonPositiveDelay(f64),

    #[error("temperature {temperature} C outside simulation range [{min}, {max}]")]
    TemperatureOutOfRange {
        temperature: f64,
        min: f64,
        max: f64,
    },

    #[error("composition members disagree: {0}")]
    MemberMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("response sets do not share the same challenge list")]
    ChallengeMismatch,

    #[error("bad dataset magic")]
    BadMagic,

    #[error("unsupported dataset format version {0}")]
    UnsupportedVersion(u16),

    #[error("dataset truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("dataset record count mismatch: header says {declared}, body holds {actual}")]
    CountMismatch { declared: u64, actual: u64 },

    #[error("unknown architecture tag {0}")]
    UnknownArchitecture(String),

    #[error("malformed dataset record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("requested {requested} CRPs but challenge space holds only {available}")]
    ChallengeSpaceExhausted { requested: u64, available: u64 },

    #[error("{0}")]
    Attack(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::ConfigParse { .. } => "config_parse",
            Error::ChallengeLength { .. } => "challenge_length",
            Error::NonPositiveDelay(_) => "non_positive_delay",
            Error::TemperatureOutOfRange { .. } => "temperature_range",
            Error::MemberMismatch(_) => "member_mismatch",
            Error::Empty(_) => "empty",
            Error::ChallengeMismatch => "challenge_mismatch",
            Error::BadMagic => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::Truncated { .. } => "truncated",
            Error::CountMismatch { .. } => "count_mismatch",
            Error::UnknownArchitecture(_) => "unknown_architecture",
            Error::MalformedRecord { .. } => "malformed_record",
            Error::ChallengeSpaceExhausted { .. } => "challenge_space",
            Error::Attack(_) => "attack",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
