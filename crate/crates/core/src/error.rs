use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("infinite compression rate: quantization covariance is singular")]
    InfiniteCompressionRate,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("co-located nodes: zero link distance")]
    ZeroDistance,

    #[error("conic subproblem is infeasible (phase-one optimum {0:.3e})")]
    Infeasible(f64),

    #[error("solver did not converge within {0} iterations")]
    MaxIterations(usize),

    #[error("no rounding candidate could be made feasible")]
    RoundingFailed,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
