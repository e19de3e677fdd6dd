use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A weakly singular integral whose exponent makes it divergent.
    #[error("divergent integral: kernel exponent {0} must be below 1")]
    DivergentKernel(f64),

    /// Series or quadrature that did not reach the requested accuracy.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// A time argument that is not a node of the grid.
    #[error("time {time} is not a grid node")]
    Alignment { time: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Trajectory left the overflow guard.
    #[error("divergence: {0}")]
    Divergence(String),

    /// Exhaustive search exceeding the allowed scenario-tree budget.
    #[error("tree budget exceeded: {required:.3e} leaves required, limit {limit:.0e}")]
    Budget { required: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    /// Least-squares probe design without full rank.
    #[error("conditioning error: {0}")]
    Conditioning(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
