use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("point {point} outside domain [{lo}, {hi}]")]
    OutOfDomain { point: f64, lo: f64, hi: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The function has a component outside the retained eigenspace, so its
    /// Cameron-Martin norm is not defined on this discretization.
    #[error("function not in the Cameron-Martin range (residual {residual:.3e}, norm {norm:.3e})")]
    NotInRange { residual: f64, norm: f64 },

    #[error("dimension {requested} exceeds retained rank {available}")]
    Dimension { requested: usize, available: usize },

    #[error("line search step underflow at iteration {iteration}")]
    LineSearchFailure { iteration: usize },

    #[error("solution did not converge (gradient norm {grad_norm:.3e})")]
    NotConverged { grad_norm: f64 },
}
