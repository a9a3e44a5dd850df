use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown crypto suite code {0:#04x}")]
    UnknownSuite(u8),

    #[error("unknown signature scheme code {0:#04x}")]
    UnknownSignatureScheme(u8),

    #[error("MAC key must not be empty")]
    EmptyMacKey,

    #[error("bit count {0} out of range (1..=256)")]
    BitCount(u16),

    #[error("RSA key generation failed: {0}")]
    KeyGen(rsa::Error),

    #[error("signing failed: {0}")]
    Sign(rsa::Error),

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("certificate duration must be positive")]
    ZeroDuration,

    #[error("puzzle parameter out of range: {0}")]
    PuzzleParam(String),

    #[error("puzzle search space exhausted without a matching candidate")]
    PuzzleExhausted,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn malformed(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Malformed { what, detail: detail.into() }
    }
}
