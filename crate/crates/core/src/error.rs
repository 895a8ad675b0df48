use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{func}: argument out of domain ({detail})")]
    Domain { func: &'static str, detail: String },

    #[error("quadrature tolerance not reached: estimate {estimate:e}, error bound {error_bound:e}")]
    ToleranceNotReached { estimate: f64, error_bound: f64 },

    #[error("root finder did not converge after {iterations} iterations (last iterate {last:e})")]
    NoConvergence { last: f64, iterations: usize },

    #[error("weight integral failed at row {n}, column {i}: {source}")]
    Weight {
        n: usize,
        i: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scheme collapsed to the trivial solution at step {step}")]
    TrivialCollapse { step: usize },

    #[error("non-finite starting value: {0}")]
    NonFinite(String),

    #[error("wetting front undefined: {0}")]
    FrontUndefined(String),

    #[error("order estimate unstable: {0}")]
    Unstable(String),

    #[error("no critical m in bracket [{lo}, {hi}]")]
    NoCriticalM { lo: f64, hi: f64 },

    #[error("tridiagonal breakdown at row {row} (pivot {pivot:e})")]
    TridiagonalBreakdown { row: usize, pivot: f64 },

    #[error("domain too small: front reached x = {x_max}")]
    DomainTooSmall { x_max: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    /// Innermost cause, skipping the positional wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Weight { source, .. } => source.root(),
            other => other,
        }
    }
}
