//! Gradient descent with Armijo backtracking on `J` (full retained
//! eigenspace) and on `Jₙ` (first `n` K-L coordinates).
//!
//! Both solves run in K-L coordinates. On the discrete space, `J` depends on
//! `x` only through its retained coefficients, and the complement enters as
//! `‖·‖²_X`, so its minimizing component is exactly zero.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::objective::{CoordinateObjective, Problem};
use crate::prior::KlBasis;

/// Smallest backtracking step before the line search gives up.
pub const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once the `X`-norm of the gradient is at most this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant in `(0, 1)`.
    pub armijo_c: f64,
    /// Step shrink factor in `(0, 1)`.
    pub backtrack_factor: f64,
    /// First trial step of every line search.
    pub init_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 5000,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            init_step: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.init_step > 0.0 && self.init_step.is_finite()) {
            return bad("init_step must be positive");
        }
        Ok(())
    }
}

/// One row of the convergence trace. Row 0 is the initial point, with
/// `step = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// A minimizer of `J` or `Jₙ` together with solver diagnostics.
#[derive(Debug, Clone)]
pub struct Solution {
    /// K-L coordinates `ξ` (length `n`, or `m_eff` for a full solve).
    pub coefficients: Vec<f64>,
    /// `x = Σ ξ_k e_k`.
    pub x: GridFunction,
    /// `u = Q^{1/2} x`.
    pub u: GridFunction,
    pub objective_value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl Solution {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }
}

struct Descent {
    xi: Vec<f64>,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceRow>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn descend(obj: &CoordinateObjective<'_>, init: Vec<f64>, cfg: &SolverConfig) -> Result<Descent> {
    cfg.validate()?;
    let mut point = obj.evaluate(&init);
    let mut grad = obj.gradient(&point);
    let mut grad_norm = norm(&grad);
    let mut trace = vec![TraceRow {
        iter: 0,
        objective: point.value,
        grad_norm,
        step: 0.0,
    }];

    let mut iterations = 0;
    while grad_norm > cfg.grad_tol && iterations < cfg.max_iters {
        let direction: Vec<f64> = grad.iter().map(|g| -g).collect();
        let observed = obj.observe_direction(&direction);
        let slope = grad_norm * grad_norm;
        let mut step = cfg.init_step;
        loop {
            let change = obj.change_along(&point, &direction, &observed, step);
            if change < 0.0 && change <= -cfg.armijo_c * step * slope {
                break;
            }
            step *= cfg.backtrack_factor;
            if step < MIN_STEP {
                return Err(Error::LineSearchFailure {
                    iteration: iterations + 1,
                });
            }
        }
        let xi: Vec<f64> = point
            .xi
            .iter()
            .zip(&direction)
            .map(|(x, p)| x + step * p)
            .collect();
        point = obj.evaluate(&xi);
        grad = obj.gradient(&point);
        grad_norm = norm(&grad);
        iterations += 1;
        trace.push(TraceRow {
            iter: iterations,
            objective: point.value,
            grad_norm,
            step,
        });
    }

    Ok(Descent {
        xi: point.xi,
        grad_norm,
        iterations,
        converged: grad_norm <= cfg.grad_tol,
        trace,
    })
}

fn finish(p: &Problem, descent: Descent) -> Result<Solution> {
    let x = p.embed(&descent.xi)?;
    let u = p.basis.apply_sqrt_q(&x)?;
    let objective_value = p.objective_j_truncated(&descent.xi)?;
    Ok(Solution {
        coefficients: descent.xi,
        x,
        u,
        objective_value,
        grad_norm: descent.grad_norm,
        iterations: descent.iterations,
        converged: descent.converged,
        trace: descent.trace,
    })
}

/// Minimize `J` over the discrete space `X`, starting from `init`
/// (default: the prior mean 0).
pub fn solve_full(p: &Problem, cfg: &SolverConfig, init: Option<&GridFunction>) -> Result<Solution> {
    let start = match init {
        Some(x0) => p.basis.coefficients(x0)?,
        None => vec![0.0; p.rank()],
    };
    let obj = p.coordinates(p.rank())?;
    finish(p, descend(&obj, start, cfg)?)
}

/// Minimize `Jₙ` over `R^n`, starting from `init` (default 0).
pub fn solve_truncated(
    p: &Problem,
    n: usize,
    cfg: &SolverConfig,
    init: Option<&[f64]>,
) -> Result<Solution> {
    if n == 0 {
        return Err(Error::InvalidArgument("truncation dimension must be positive".into()));
    }
    let obj = p.coordinates(n)?;
    let start = match init {
        Some(x0) if x0.len() != n => {
            return Err(Error::InvalidArgument(format!(
                "initial point has length {}, expected {n}",
                x0.len()
            )))
        }
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    finish(p, descend(&obj, start, cfg)?)
}

/// `xₙ = Σ_{k ≤ n} ⟨x, e_k⟩_X e_k`.
pub fn project_to_xn(basis: &KlBasis, x: &GridFunction, n: usize) -> Result<GridFunction> {
    let c = basis.coefficients_n(x, n)?;
    basis.synthesize(&c)
}
