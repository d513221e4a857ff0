use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity exceeded: {what} needs {needed}, limit is {limit}")]
    Capacity {
        what: &'static str,
        needed: u128,
        limit: u128,
    },
    #[error("{0} is not a fundamental discriminant")]
    NotFundamental(i64),
    #[error("r3({n}) = {r3} is not divisible by {divisor}")]
    InexactDivision { n: u64, r3: u64, divisor: u64 },
    #[error("{m} is not coprime to {n}")]
    InvalidFactorization { m: u64, n: u64 },
    #[error("local density at p = {p} did not stabilize by level {t_max} (last value {last})")]
    NonStabilized { p: u64, t_max: u32, last: String },
    #[error("extrapolation did not converge (spread {spread:e})")]
    NonConvergent { spread: f64 },
    #[error("cache file {path}: {reason}")]
    Cache { path: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
