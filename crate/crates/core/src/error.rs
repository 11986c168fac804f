use thiserror::Error;

/// Everything that can go wrong inside the clustering core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("lag {lag} must be smaller than the series length {len}")]
    LagTooLarge { lag: usize, len: usize },
    #[error("input contains NaN or infinite values")]
    NonFiniteInput,
    #[error("membership weights sum to zero (empty cluster)")]
    DegenerateWeights,
    #[error("cluster {cluster} received no membership mass")]
    EmptyCluster { cluster: usize },
    #[error("symmetric eigendecomposition did not converge")]
    EigFailure,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid shape: {0}")]
    InvalidShape(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("error scale is degenerate (all series perfectly reconstructed)")]
    DegenerateScale,
    #[error("trimming retains {retained} objects but {clusters} clusters are requested")]
    TooFewRetained { retained: usize, clusters: usize },
    #[error("validity index needs at least two substantive clusters")]
    SingleCluster,
    #[error("cluster prototypes coincide (minimum separation below 1e-12)")]
    DegenerateSeparation,
    #[error("every candidate in the search grid failed")]
    AllCandidatesFailed,
    #[error("invalid band: peak {freq} Hz with sharpness {sharpness} at {sampling_rate} Hz")]
    InvalidBand { freq: f64, sharpness: f64, sampling_rate: f64 },
    #[error("burst length {tau} is not shorter than the shortest trial ({min_len})")]
    BurstTooLong { tau: usize, min_len: usize },
    #[error("blink length {tau} is not shorter than the shortest trial ({min_len})")]
    BlinkTooLong { tau: usize, min_len: usize },
    #[error("basis columns are not orthonormal")]
    NotOrthonormal,
    #[error("index set is empty")]
    EmptyIndexSet,
}

impl Error {
    /// Stable machine-readable name, used in JSON error records.
    pub fn name(&self) -> &'static str {
        match self {
            Error::LagTooLarge { .. } => "LagTooLarge",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::DegenerateWeights => "DegenerateWeights",
            Error::EmptyCluster { .. } => "EmptyClusterError",
            Error::EigFailure => "EigFailure",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidShape(_) => "InvalidShape",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::DegenerateScale => "DegenerateScale",
            Error::TooFewRetained { .. } => "TooFewRetained",
            Error::SingleCluster => "SingleCluster",
            Error::DegenerateSeparation => "DegenerateSeparation",
            Error::AllCandidatesFailed => "AllCandidatesFailed",
            Error::InvalidBand { .. } => "InvalidBand",
            Error::BurstTooLong { .. } => "BurstTooLong",
            Error::BlinkTooLong { .. } => "BlinkTooLong",
            Error::NotOrthonormal => "NotOrthonormal",
            Error::EmptyIndexSet => "EmptyIndexSet",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
