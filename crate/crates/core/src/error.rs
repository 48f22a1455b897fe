use thiserror::Error;

/// Errors produced by analysis, resynthesis and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("region has zero energy")]
    ZeroEnergyRegion,

    #[error(
        "infeasible plan: window of {window_len} samples with hop {hop} has lower frame bound {lower_bound}"
    )]
    InfeasiblePlan {
        window_len: usize,
        hop: usize,
        lower_bound: f64,
    },

    #[error("segment of {len} samples is shorter than the largest window ({required} samples)")]
    InvalidSegment { len: usize, required: usize },

    #[error("not a frame: overlap denominator {value:e} below threshold at sample {sample}")]
    NotAFrame { sample: usize, value: f64 },

    #[error("malformed WAV at byte {offset}: {reason}")]
    WavParse { offset: u64, reason: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed export at line {line}: {reason}")]
    ExportParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
