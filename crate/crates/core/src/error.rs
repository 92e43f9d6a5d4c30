use thiserror::Error;

/// Every failure mode of the library, one variant per documented error kind.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("tail truncation: {0}")]
    TailTruncation(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("degeneracy error: {0}")]
    Degeneracy(String),
    #[error("overflow guard: {0}")]
    Overflow(String),
    #[error("conditioning error at xi = {xi}: {detail}")]
    Conditioning { xi: f64, detail: String },
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::TailTruncation(_) => "tail_truncation",
            Error::Range(_) => "range",
            Error::Resolution(_) => "resolution",
            Error::Degeneracy(_) => "degeneracy",
            Error::Overflow(_) => "overflow",
            Error::Conditioning { .. } => "conditioning",
            Error::Consistency(_) => "consistency",
            Error::Divergence(_) => "divergence",
            Error::Precondition(_) => "precondition",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Io(_) => "io",
            Error::Serde(_) => "serialization",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
