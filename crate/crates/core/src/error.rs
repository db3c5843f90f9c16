use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("covariance not positive definite at index {index}: gamma={gamma}, |delta|={delta_abs}")]
    NotPositiveDefinite { index: usize, gamma: f64, delta_abs: f64 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("{hidden} hidden units is too many for exact enumeration (max {max})")]
    TooManyHidden { hidden: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in parameter `{parameter}` at epoch {epoch}")]
    NonFiniteParameter { parameter: &'static str, epoch: usize },

    #[error("non-finite value during trajectory generation at iteration {iteration}")]
    NonFiniteIteration { iteration: usize },

    #[error("need at least {needed} frames, got {frames}")]
    TooFewFrames { frames: usize, needed: usize },

    #[error("covariance rank {rank} is below the requested {requested} components")]
    RankDeficient { rank: usize, requested: usize },

    #[error("signal of {len} samples is shorter than the {window}-sample window")]
    SignalTooShort { len: usize, window: usize },

    #[error("concatenated mapping undefined at index {index}: p +/- Re(q) must be positive")]
    MappingUndefined { index: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("payload length does not match declared dimensions: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("feature layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("unsupported wav format: {0}")]
    UnsupportedWav(String),

    #[error("malformed metrics file at line {line}: {reason}")]
    MalformedMetrics { line: usize, reason: String },

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "E_DIM",
            Error::NotPositiveDefinite { .. } => "E_NOT_PD",
            Error::EmptyBatch => "E_EMPTY_BATCH",
            Error::TooManyHidden { .. } => "E_TOO_MANY_HIDDEN",
            Error::InvalidConfig(_) => "E_CONFIG",
            Error::NonFiniteParameter { .. } => "E_NONFINITE_PARAM",
            Error::NonFiniteIteration { .. } => "E_NONFINITE_ITER",
            Error::TooFewFrames { .. } => "E_TOO_FEW_FRAMES",
            Error::RankDeficient { .. } => "E_RANK",
            Error::SignalTooShort { .. } => "E_SHORT_SIGNAL",
            Error::MappingUndefined { .. } => "E_MAPPING",
            Error::BadMagic { .. } => "E_MAGIC",
            Error::UnsupportedVersion(_) => "E_VERSION",
            Error::Checksum { .. } => "E_CRC",
            Error::Truncated { .. } => "E_TRUNCATED",
            Error::LengthMismatch { .. } => "E_LENGTH",
            Error::LayoutMismatch { .. } => "E_LAYOUT",
            Error::UnsupportedWav(_) => "E_WAV_FORMAT",
            Error::MalformedMetrics { .. } => "E_METRICS_FORMAT",
            Error::Wav(_) => "E_WAV",
            Error::Io(_) => "E_IO",
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
