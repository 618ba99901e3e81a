//! Truncated Karhunen-Loève MAP estimation for Bayesian inverse problems on
//! discretized one-dimensional function spaces.
//!
//! The unknown lives in a quadrature-weighted space `X` over an interval. A
//! Gaussian prior with kernel covariance `Q` is diagonalized by [`KlBasis`],
//! the data misfit `Φ` comes from a [`ForwardModel`] and [`NoiseModel`], and
//! the whitened objective `J(x) = Φ(Q^{1/2} x) + ‖x‖²_X` is minimized either
//! over the whole retained eigenspace or over the first `n` modes. The
//! [`bounds`] module compares the two against the truncation-error bounds
//! governed by the tail eigenvalue `λ*ₙ` and a local Lipschitz constant of `Φ`.

pub mod bounds;
pub mod error;
pub mod forward;
pub mod grid;
pub mod objective;
pub mod optimize;
pub mod prior;
pub mod rng;

pub use bounds::{
    default_radius, estimate_lipschitz, run_sweep, BoundReport, LipschitzEstimate,
    LipschitzMethod, MinimizerKind, SweepReport,
};
pub use error::{Error, Result};
pub use forward::{synthesize_data, Dataset, ForwardKind, ForwardModel, NoiseModel};
pub use grid::{build_grid, Grid, GridFunction};
pub use objective::Problem;
pub use optimize::{project_to_xn, solve_full, solve_truncated, Solution, SolverConfig, TraceRow};
pub use prior::{kl_decompose, Kernel, KernelFamily, KlBasis, DEFAULT_DROP_TOL};
