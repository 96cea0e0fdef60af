use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no replicates")]
    NoReplicates,

    #[error(
        "block of side {n} anchored at ({row}, {col}) exceeds the {rows}x{cols} grid \
         (only {fit_rows}x{fit_cols} fits)"
    )]
    BlockOutOfBounds {
        n: usize,
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
        fit_rows: usize,
        fit_cols: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },

    #[error("cholesky factorization failed with final jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error(
        "circulant embedding clipped {fraction:.3e} of the spectral mass (tolerance {tolerance:.1e}); \
         use the dense sampler or a larger embedding"
    )]
    ClippedSpectrum { fraction: f64, tolerance: f64 },

    #[error("need at least {required} replicates, found {found}")]
    TooFewReplicates { required: usize, found: usize },

    #[error("no signal: every cell has zero mean")]
    NoSignal,

    #[error("no cell pairs fall in any distance bin")]
    NoPairs,

    #[error("need at least {required} strictly positive bins, found {found}")]
    TooFewPositiveBins { required: usize, found: usize },

    #[error("zero standard deviation")]
    ZeroVariance,

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("sample size {0} outside the supported range [3, 5000]")]
    SampleSize(usize),

    #[error("non-finite intermediate while computing {0}")]
    NonFiniteConstant(&'static str),

    #[error("no calibration candidate produced a fittable decay curve")]
    CalibrationFailed,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from bad user input rather than a failure
    /// inside the computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Factorization { .. } | Error::NonFiniteConstant(_) | Error::Io(_) | Error::Json(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
