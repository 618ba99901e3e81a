//! Gaussian prior: kernel covariance operator `Q`, its Karhunen-Loève
//! eigensystem, and the spectral operators built from it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, Grid, GridFunction};
use crate::rng::{NormalStream, STREAM_PRIOR};

/// Relative eigenvalue cutoff defining the invertible range of `Q`.
pub const DEFAULT_DROP_TOL: f64 = 1e-12;

/// Relative projection residual above which a function is treated as lying
/// outside the retained eigenspace.
pub const RANGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Brownian,
    Exponential,
    SquaredExponential,
}

impl KernelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Brownian => "brownian",
            KernelFamily::Exponential => "exponential",
            KernelFamily::SquaredExponential => "squared_exponential",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brownian" => Ok(KernelFamily::Brownian),
            "exponential" => Ok(KernelFamily::Exponential),
            "squared_exponential" => Ok(KernelFamily::SquaredExponential),
            other => Err(Error::InvalidArgument(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Stationary or Brownian covariance kernel.
///
/// The Brownian kernel is anchored at the left end of the domain it is
/// evaluated on: `k(s, t) = σ² min(s − a, t − a)`, which is `min(s, t)` on
/// `[0, b]` with unit variance. `length_scale` is ignored for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub variance: f64,
    pub length_scale: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, variance: f64, length_scale: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel variance must be positive, got {variance}"
            )));
        }
        if family != KernelFamily::Brownian && !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel length scale must be positive, got {length_scale}"
            )));
        }
        Ok(Self {
            family,
            variance,
            length_scale,
        })
    }

    pub fn brownian() -> Self {
        Self {
            family: KernelFamily::Brownian,
            variance: 1.0,
            length_scale: 1.0,
        }
    }

    /// `k(s, t)` on a domain whose left endpoint is `origin`.
    pub fn eval(&self, origin: f64, s: f64, t: f64) -> f64 {
        match self.family {
            KernelFamily::Brownian => self.variance * (s - origin).min(t - origin),
            KernelFamily::Exponential => {
                self.variance * (-(s - t).abs() / self.length_scale).exp()
            }
            KernelFamily::SquaredExponential => {
                let r = (s - t) / self.length_scale;
                self.variance * (-0.5 * r * r).exp()
            }
        }
    }

    /// Kernel matrix `K_ij = k(t_i, t_j)` on the grid nodes.
    pub fn matrix(&self, grid: &Grid) -> DMatrix<f64> {
        let t = grid.nodes();
        let m = t.len();
        let mut k = DMatrix::zeros(m, m);
        for j in 0..m {
            for i in j..m {
                let v = self.eval(grid.lo(), t[i], t[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// `Σ_i w_i k(t_i, t_i)`, the quadrature trace of the covariance operator.
    pub fn quadrature_trace(&self, grid: &Grid) -> f64 {
        grid.nodes()
            .iter()
            .zip(grid.weights())
            .map(|(&t, &w)| w * self.eval(grid.lo(), t, t))
            .sum()
    }
}

/// Eigenvalues and `X`-orthonormal eigenfunctions of the discretized `Q`.
#[derive(Debug, Clone)]
pub struct KlBasis {
    grid: Arc<Grid>,
    eigenvalues: Vec<f64>,
    /// Column `k` holds the nodal values of `e_{k+1}`.
    eigenfunctions: DMatrix<f64>,
    rank: usize,
}

/// Solves the quadrature-weighted kernel eigenproblem.
///
/// `A = W^{1/2} K W^{1/2}` is symmetric, so its eigenvectors `v_k` are
/// Euclidean-orthonormal and `e_k = W^{-1/2} v_k` are orthonormal in
/// `⟨·,·⟩_X`. Eigenvalues are sorted descending and negative roundoff is
/// clamped to zero; the rank counts `λ_k > drop_tol · λ_1`.
pub fn kl_decompose(kernel: &Kernel, grid: Arc<Grid>, drop_tol: f64) -> Result<KlBasis> {
    if !(drop_tol >= 0.0 && drop_tol.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "drop tolerance must be nonnegative, got {drop_tol}"
        )));
    }
    let m = grid.len();
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut a = kernel.matrix(&grid);
    for j in 0..m {
        for i in 0..m {
            a[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
    }

    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenfunctions = DMatrix::zeros(m, m);
    for (k, &src) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[src].max(0.0));
        let v = eig.eigenvectors.column(src);
        // Sign convention: the entry of largest magnitude is positive.
        let pivot = v.iamax();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            eigenfunctions[(i, k)] = sign * v[i] / sqrt_w[i];
        }
    }

    let cutoff = drop_tol * eigenvalues[0];
    let rank = eigenvalues.iter().take_while(|&&l| l > cutoff).count();
    Ok(KlBasis {
        grid,
        eigenvalues,
        eigenfunctions,
        rank,
    })
}

impl KlBasis {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// All `m` eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of retained modes `m_eff`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Nodal values of all eigenfunctions, one column per mode.
    pub fn eigenfunction_matrix(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    /// `e_k` with a 1-based index.
    pub fn mode(&self, k: usize) -> GridFunction {
        assert!(k >= 1 && k <= self.eigenvalues.len(), "mode index {k} out of range");
        let values = self.eigenfunctions.column(k - 1).iter().copied().collect();
        GridFunction::new(Arc::clone(&self.grid), values).expect("mode length matches grid")
    }

    /// `λ*ₙ = max_{k>n} λ_k`, which is `λ_{n+1}` for the sorted spectrum
    /// and zero once `n` reaches the retained rank.
    pub fn lambda_star(&self, n: usize) -> f64 {
        if n >= self.rank {
            0.0
        } else {
            self.eigenvalues[n]
        }
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    fn check_grid(&self, f: &GridFunction) -> Result<()> {
        ensure_same_grid(&self.grid, f.grid())
    }

    fn ensure_dim(&self, n: usize) -> Result<()> {
        if n > self.rank {
            Err(Error::Dimension {
                requested: n,
                available: self.rank,
            })
        } else {
            Ok(())
        }
    }

    /// `⟨x, e_k⟩_X` for `k = 1..=n`.
    pub fn coefficients_n(&self, x: &GridFunction, n: usize) -> Result<Vec<f64>> {
        self.check_grid(x)?;
        self.ensure_dim(n)?;
        let wx = DVector::from_iterator(
            x.values().len(),
            x.values().iter().zip(self.grid.weights()).map(|(v, w)| v * w),
        );
        let c = self.eigenfunctions.columns(0, n).tr_mul(&wx);
        Ok(c.iter().copied().collect())
    }

    /// `⟨x, e_k⟩_X` over the retained modes.
    pub fn coefficients(&self, x: &GridFunction) -> Result<Vec<f64>> {
        self.coefficients_n(x, self.rank)
    }

    /// `Σ_k c_k e_k` over the first `c.len()` modes.
    pub fn synthesize(&self, c: &[f64]) -> Result<GridFunction> {
        self.ensure_dim(c.len())?;
        let values = self.eigenfunctions.columns(0, c.len()) * DVector::from_column_slice(c);
        GridFunction::new(Arc::clone(&self.grid), values.iter().copied().collect())
    }

    /// `Σ_{k ≤ m_eff} f(λ_k) ⟨x, e_k⟩_X e_k`.
    fn spectral_apply(&self, x: &GridFunction, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        let mut c = self.coefficients(x)?;
        for (ck, &l) in c.iter_mut().zip(&self.eigenvalues) {
            *ck *= f(l);
        }
        self.synthesize(&c)
    }

    pub fn apply_q(&self, x: &GridFunction) -> Result<GridFunction> {
        self.spectral_apply(x, |l| l)
    }

    pub fn apply_sqrt_q(&self, x: &GridFunction) -> Result<GridFunction> {
        self.spectral_apply(x, f64::sqrt)
    }

    /// Retained coefficients of `u`, after checking that `u` has no
    /// significant component on the dropped modes.
    fn range_coefficients(&self, u: &GridFunction) -> Result<Vec<f64>> {
        let c = self.coefficients(u)?;
        let projected = self.synthesize(&c)?;
        let norm = u.norm();
        let residual = u.sub(&projected)?.norm();
        if residual > RANGE_TOL * norm {
            return Err(Error::NotInRange { residual, norm });
        }
        Ok(c)
    }

    pub fn apply_inv_sqrt_q(&self, u: &GridFunction) -> Result<GridFunction> {
        let mut c = self.range_coefficients(u)?;
        for (ck, &l) in c.iter_mut().zip(&self.eigenvalues) {
            *ck /= l.sqrt();
        }
        self.synthesize(&c)
    }

    /// Cameron-Martin norm `‖u‖²_E = Σ_k ⟨u, e_k⟩²_X / λ_k`.
    pub fn norm_e_squared(&self, u: &GridFunction) -> Result<f64> {
        let c = self.range_coefficients(u)?;
        Ok(c.iter().zip(&self.eigenvalues).map(|(ck, l)| ck * ck / l).sum())
    }

    /// Draw from the prior via the truncated K-L series `Σ √λ_k ξ_k e_k`.
    pub fn sample_prior(&self, seed: u64) -> GridFunction {
        let mut stream = NormalStream::new(seed, STREAM_PRIOR);
        let c: Vec<f64> = self.eigenvalues[..self.rank]
            .iter()
            .map(|l| l.sqrt() * stream.normal())
            .collect();
        self.synthesize(&c).expect("rank-sized coefficient vector")
    }
}
