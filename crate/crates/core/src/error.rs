use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("perturbed curve self-intersects near nodes {i} and {j}")]
    SelfIntersection { i: usize, j: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("wrong operator kind: expected {expected}, got {got}")]
    WrongOperator { expected: &'static str, got: &'static str },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("cluster window ({lo}, {hi}) is not isolated: eigenvalue {intruder} intrudes")]
    NotIsolated { lo: f64, hi: f64, intruder: f64 },

    #[error("no eigenvalue found in ({lo}, {hi})")]
    EmptyCluster { lo: f64, hi: f64 },

    #[error("cluster eigenvalue {0} has a non-negligible imaginary part")]
    ComplexEigenvalue(f64),

    #[error("cluster basis is rank deficient ({rank} < {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("contour passes within {distance:e} of eigenvalue {eigenvalue} (margin {margin:e} required)")]
    ContourTooClose { eigenvalue: f64, distance: f64, margin: f64 },

    #[error("lambda = 1/2 has no finite permittivity")]
    HalfEigenvalue,

    #[error("unsupported eigenvalue {0} for this operation")]
    UnsupportedEigenvalue(f64),

    #[error("curve is not star-shaped with respect to the origin (x.nu = {value:e} at node {node})")]
    NotStarShaped { node: usize, value: f64 },

    #[error("denominator {0:e} is too small")]
    Degenerate(f64),

    #[error("index {index} out of range 1..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the request itself (bad specification, unsuitable
    /// target or curve) rather than by a computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidCurve(_)
                | Error::InvalidArgument(_)
                | Error::OutOfRange { .. }
                | Error::NotIsolated { .. }
                | Error::EmptyCluster { .. }
                | Error::ContourTooClose { .. }
                | Error::HalfEigenvalue
                | Error::UnsupportedEigenvalue(_)
                | Error::NotStarShaped { .. }
                | Error::Json(_)
        )
    }
}
