//! The potential `Φ` and the objectives `I(u)`, `J(x)` and `Jₙ(ξ)`.
//!
//! `Φ(u) = Σ_j (G(u)_j − y_j)² / C_jj` carries no ½ factor. Gradients are
//! `X`-Riesz representers: nodal partial derivatives divided by the
//! quadrature weights.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forward::{Dataset, ForwardModel, NoiseModel};
use crate::grid::{ensure_same_grid, Grid, GridFunction};
use crate::prior::{Kernel, KlBasis};

/// Everything that defines one inverse problem: prior, forward map, noise
/// and data, all on one grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Arc<Grid>,
    pub kernel: Kernel,
    pub basis: Arc<KlBasis>,
    pub model: ForwardModel,
    pub noise: NoiseModel,
    pub data: Dataset,
}

impl Problem {
    pub fn new(
        kernel: Kernel,
        basis: Arc<KlBasis>,
        model: ForwardModel,
        noise: NoiseModel,
        data: Dataset,
    ) -> Result<Self> {
        let grid = Arc::clone(basis.grid());
        ensure_same_grid(&grid, model.grid())?;
        if let Some(truth) = &data.truth {
            ensure_same_grid(&grid, truth.grid())?;
        }
        let d = model.dim();
        if noise.dim() != d || data.y.len() != d {
            return Err(Error::InvalidArgument(format!(
                "forward dimension {d}, noise dimension {}, data length {} disagree",
                noise.dim(),
                data.y.len()
            )));
        }
        Ok(Self {
            grid,
            kernel,
            basis,
            model,
            noise,
            data,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    fn misfit(&self, g: &[f64]) -> f64 {
        g.iter()
            .zip(&self.data.y)
            .zip(self.noise.variances())
            .map(|((g, y), c)| (g - y) * (g - y) / c)
            .sum()
    }

    /// `Φ(u) = |C^{-1/2}(G(u) − y)|²`.
    pub fn potential_phi(&self, u: &GridFunction) -> Result<f64> {
        Ok(self.misfit(&self.model.apply(u)?))
    }

    /// `Φ(0)`.
    pub fn phi_at_zero(&self) -> f64 {
        self.potential_phi(&GridFunction::zeros(Arc::clone(&self.grid)))
            .expect("zero function lives on the problem grid")
    }

    /// Riesz representer of `DΦ(u)` in `X`: `riesz(2 Jᵀ C^{-1} r)`.
    pub fn potential_gradient(&self, u: &GridFunction) -> Result<GridFunction> {
        let g = self.model.apply(u)?;
        let jac = self.model.jacobian(u)?;
        let weighted = DVector::from_iterator(
            g.len(),
            g.iter()
                .zip(&self.data.y)
                .zip(self.noise.variances())
                .map(|((g, y), c)| 2.0 * (g - y) / c),
        );
        let partials = jac.tr_mul(&weighted);
        let values = partials
            .iter()
            .zip(self.grid.weights())
            .map(|(p, w)| p / w)
            .collect();
        GridFunction::new(Arc::clone(&self.grid), values)
    }

    /// Onsager-Machlup functional `I(u) = Φ(u) + ‖u‖²_E`.
    pub fn objective_i(&self, u: &GridFunction) -> Result<f64> {
        let e = self.basis.norm_e_squared(u)?;
        Ok(self.potential_phi(u)? + e)
    }

    /// Whitened objective `J(x) = Φ(Q^{1/2} x) + ‖x‖²_X`.
    pub fn objective_j(&self, x: &GridFunction) -> Result<f64> {
        let u = self.basis.apply_sqrt_q(x)?;
        Ok(self.potential_phi(&u)? + x.inner(x)?)
    }

    /// `Σ_{k ≤ n} ξ_k e_k`.
    pub fn embed(&self, xi: &[f64]) -> Result<GridFunction> {
        self.basis.synthesize(xi)
    }

    /// `Σ_{k ≤ n} ξ_k √λ_k e_k`.
    pub fn whitened_function(&self, xi: &[f64]) -> Result<GridFunction> {
        let scaled: Vec<f64> = xi
            .iter()
            .zip(self.basis.eigenvalues())
            .map(|(x, l)| x * l.sqrt())
            .collect();
        self.basis.synthesize(&scaled)
    }

    /// Truncated objective in K-L coordinates,
    /// `Jₙ(ξ) = Φ(Σ ξ_k √λ_k e_k) + Σ ξ_k²`.
    pub fn objective_j_truncated(&self, xi: &[f64]) -> Result<f64> {
        let u = self.whitened_function(xi)?;
        Ok(self.potential_phi(&u)? + xi.iter().map(|x| x * x).sum::<f64>())
    }

    /// Riesz gradient of `J` at `x`: `2 Q^{1/2} riesz(Jᵀ C^{-1} r) + 2x`.
    pub fn gradient_j(&self, x: &GridFunction) -> Result<GridFunction> {
        let u = self.basis.apply_sqrt_q(x)?;
        let dphi = self.potential_gradient(&u)?;
        self.basis.apply_sqrt_q(&dphi)?.add_scaled(2.0, x)
    }

    /// `∂Jₙ/∂ξ_k` for `k ≤ n`.
    pub fn gradient_j_truncated(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let obj = self.coordinates(xi.len())?;
        let point = obj.evaluate(xi);
        Ok(obj.gradient(&point))
    }

    /// `J` restricted to the first `n` K-L coordinates, with the observation
    /// stage folded into a `d × n` matrix `M = H E_n diag(√λ)`.
    pub fn coordinates(&self, n: usize) -> Result<CoordinateObjective<'_>> {
        if n > self.rank() {
            return Err(Error::Dimension {
                requested: n,
                available: self.rank(),
            });
        }
        let e = self.basis.eigenfunction_matrix().columns(0, n);
        let mut whitened = self.model.observation_matrix() * e;
        for (k, l) in self.basis.eigenvalues()[..n].iter().enumerate() {
            whitened.column_mut(k).scale_mut(l.sqrt());
        }
        Ok(CoordinateObjective {
            problem: self,
            whitened,
        })
    }
}

/// A point of the coordinate objective with the observation-stage values
/// `t = M ξ` cached.
#[derive(Debug, Clone)]
pub struct CoordinatePoint {
    pub xi: Vec<f64>,
    pub observed: DVector<f64>,
    pub value: f64,
}

/// `Jₙ` evaluated through the precomputed whitened observation matrix. This
/// is what the solvers iterate on.
pub struct CoordinateObjective<'a> {
    problem: &'a Problem,
    whitened: DMatrix<f64>,
}

impl CoordinateObjective<'_> {
    pub fn dim(&self) -> usize {
        self.whitened.ncols()
    }

    pub fn evaluate(&self, xi: &[f64]) -> CoordinatePoint {
        let observed = &self.whitened * DVector::from_column_slice(xi);
        let model = &self.problem.model;
        let phi: f64 = observed
            .iter()
            .zip(&self.problem.data.y)
            .zip(self.problem.noise.variances())
            .map(|((&t, y), c)| {
                let r = model.link(t) - y;
                r * r / c
            })
            .sum();
        let value = phi + xi.iter().map(|x| x * x).sum::<f64>();
        CoordinatePoint {
            xi: xi.to_vec(),
            observed,
            value,
        }
    }

    pub fn gradient(&self, point: &CoordinatePoint) -> Vec<f64> {
        let model = &self.problem.model;
        let cotangent = DVector::from_iterator(
            point.observed.len(),
            point
                .observed
                .iter()
                .zip(&self.problem.data.y)
                .zip(self.problem.noise.variances())
                .map(|((&t, y), c)| 2.0 * (model.link(t) - y) / c * model.link_derivative(t)),
        );
        let g = self.whitened.tr_mul(&cotangent);
        g.iter()
            .zip(&point.xi)
            .map(|(g, x)| g + 2.0 * x)
            .collect()
    }

    /// `M p` for a search direction `p`.
    pub fn observe_direction(&self, direction: &[f64]) -> DVector<f64> {
        &self.whitened * DVector::from_column_slice(direction)
    }

    /// `Jₙ(ξ + α p) − Jₙ(ξ)`, assembled from per-term increments so that it
    /// stays accurate when the change is far below the rounding level of
    /// `Jₙ` itself.
    pub fn change_along(
        &self,
        point: &CoordinatePoint,
        direction: &[f64],
        observed_direction: &DVector<f64>,
        alpha: f64,
    ) -> f64 {
        let model = &self.problem.model;
        let misfit: f64 = point
            .observed
            .iter()
            .zip(observed_direction.iter())
            .zip(&self.problem.data.y)
            .zip(self.problem.noise.variances())
            .map(|(((&t, &dt), y), c)| {
                let r = model.link(t) - y;
                let dr = model.link_increment(t, alpha * dt);
                dr * (2.0 * r + dr) / c
            })
            .sum();
        let prior: f64 = point
            .xi
            .iter()
            .zip(direction)
            .map(|(x, p)| alpha * p * (2.0 * x + alpha * p))
            .sum();
        misfit + prior
    }
}
