use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("infeasible operating point: W0 = {w0}, p0 = {p0} exceeds 1")]
    InfeasibleOperatingPoint { w0: f64, p0: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-symmetric constraint assembly: {0}")]
    NonSymmetric(String),

    #[error("no certificate found (best margin {margin:e})")]
    NoCertificate { margin: f64 },

    #[error("ill-conditioned synthesis (condition number {0:e})")]
    IllConditioned(f64),

    #[error("no DD-stabilizable starting point")]
    NoStartingPoint,

    #[error("oracle inconclusive: {0}")]
    OracleInconclusive(String),

    #[error("invalid bracket: {0}")]
    InvalidBracket(String),

    #[error("simulation: {0}")]
    Simulation(String),
}
