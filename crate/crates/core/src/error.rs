use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("unstable configuration: load {load} is not below 1")]
    Unstable { load: f64 },
    #[error(
        "quadrature did not converge on [{lower}, {upper}]: estimate {estimate}, \
         error estimate {error_estimate} after {intervals} subintervals"
    )]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error_estimate: f64,
        intervals: usize,
    },
    #[error("threshold search failed: {0}")]
    Search(String),
    #[error("mean-field integration quality check failed: {0}")]
    Integration(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Error {
    Error::Domain {
        name,
        value,
        expected,
    }
}
