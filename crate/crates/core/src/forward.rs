//! Forward maps `G: X → R^d`, diagonal Gaussian noise, and synthetic data.
//!
//! Every model is a linear observation stage `H` (interpolation rows or
//! quadrature-weighted blur rows) followed by a pointwise link, so
//! `G(u) = link(H u)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, Grid, GridFunction};
use crate::rng::{NormalStream, STREAM_NOISE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardKind {
    /// `G(u)_j = u(s_j)`.
    PointObservation,
    /// `G(u)_j = Σ_i w_i g(s_j − t_i) u(t_i)` with a unit-mass Gaussian bump
    /// of standard deviation `blur_width`, truncated at the boundary.
    Convolution { blur_width: f64 },
    /// `G(u)_j = u(s_j) + ε u(s_j)³`.
    NonlinearPointwise { eps: f64 },
}

impl ForwardKind {
    pub fn name(&self) -> &'static str {
        match self {
            ForwardKind::PointObservation => "point_observation",
            ForwardKind::Convolution { .. } => "convolution",
            ForwardKind::NonlinearPointwise { .. } => "nonlinear_pointwise",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardModel {
    grid: Arc<Grid>,
    kind: ForwardKind,
    locations: Vec<f64>,
    /// `d × m` linear observation stage.
    observation: DMatrix<f64>,
}

impl ForwardModel {
    pub fn new(grid: Arc<Grid>, kind: ForwardKind, locations: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidArgument(
                "forward model needs at least one observation".into(),
            ));
        }
        if let Some(&s) = locations.iter().find(|&&s| !grid.contains(s)) {
            return Err(Error::OutOfDomain {
                point: s,
                lo: grid.lo(),
                hi: grid.hi(),
            });
        }
        let d = locations.len();
        let m = grid.len();
        let mut observation = DMatrix::zeros(d, m);
        match kind {
            ForwardKind::PointObservation | ForwardKind::NonlinearPointwise { .. } => {
                if let ForwardKind::NonlinearPointwise { eps } = kind {
                    if !eps.is_finite() {
                        return Err(Error::InvalidArgument("nonlinearity must be finite".into()));
                    }
                }
                for (j, &s) in locations.iter().enumerate() {
                    let (i, theta) = grid.stencil(s)?;
                    observation[(j, i)] += 1.0 - theta;
                    if theta != 0.0 {
                        observation[(j, i + 1)] += theta;
                    }
                }
            }
            ForwardKind::Convolution { blur_width } => {
                if !(blur_width > 0.0 && blur_width.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "blur width must be positive, got {blur_width}"
                    )));
                }
                let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * blur_width);
                for (j, &s) in locations.iter().enumerate() {
                    for (i, (&t, &w)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
                        let r = (s - t) / blur_width;
                        observation[(j, i)] = w * norm * (-0.5 * r * r).exp();
                    }
                }
            }
        }
        Ok(Self {
            grid,
            kind,
            locations,
            observation,
        })
    }

    pub fn point_observation(grid: Arc<Grid>, locations: Vec<f64>) -> Result<Self> {
        Self::new(grid, ForwardKind::PointObservation, locations)
    }

    pub fn convolution(grid: Arc<Grid>, locations: Vec<f64>, blur_width: f64) -> Result<Self> {
        Self::new(grid, ForwardKind::Convolution { blur_width }, locations)
    }

    pub fn nonlinear_pointwise(grid: Arc<Grid>, locations: Vec<f64>, eps: f64) -> Result<Self> {
        Self::new(grid, ForwardKind::NonlinearPointwise { eps }, locations)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> ForwardKind {
        self.kind
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    /// Output dimension `d`.
    pub fn dim(&self) -> usize {
        self.locations.len()
    }

    pub fn is_linear(&self) -> bool {
        match self.kind {
            ForwardKind::NonlinearPointwise { eps } => eps == 0.0,
            _ => true,
        }
    }

    /// The `d × m` linear stage `H`.
    pub fn observation_matrix(&self) -> &DMatrix<f64> {
        &self.observation
    }

    fn eps(&self) -> f64 {
        match self.kind {
            ForwardKind::NonlinearPointwise { eps } => eps,
            _ => 0.0,
        }
    }

    pub(crate) fn link(&self, t: f64) -> f64 {
        let eps = self.eps();
        if eps == 0.0 {
            t
        } else {
            t + eps * t * t * t
        }
    }

    pub(crate) fn link_derivative(&self, t: f64) -> f64 {
        1.0 + 3.0 * self.eps() * t * t
    }

    /// `link(t + δ) − link(t)` without cancellation.
    pub(crate) fn link_increment(&self, t: f64, delta: f64) -> f64 {
        let eps = self.eps();
        if eps == 0.0 {
            delta
        } else {
            delta + eps * delta * (3.0 * t * t + 3.0 * t * delta + delta * delta)
        }
    }

    /// `H u`.
    pub(crate) fn observe_linear(&self, u: &GridFunction) -> Result<DVector<f64>> {
        ensure_same_grid(&self.grid, u.grid())?;
        Ok(&self.observation * DVector::from_column_slice(u.values()))
    }

    pub fn apply(&self, u: &GridFunction) -> Result<Vec<f64>> {
        Ok(self
            .observe_linear(u)?
            .iter()
            .map(|&t| self.link(t))
            .collect())
    }

    /// `∂G(u)_j / ∂u_i` as a `d × m` matrix.
    pub fn jacobian(&self, u: &GridFunction) -> Result<DMatrix<f64>> {
        let t = self.observe_linear(u)?;
        let mut jac = self.observation.clone();
        if self.eps() != 0.0 {
            for (j, &tj) in t.iter().enumerate() {
                let scale = self.link_derivative(tj);
                jac.row_mut(j).scale_mut(scale);
            }
        }
        Ok(jac)
    }
}

/// Diagonal observation-noise covariance `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    variances: Vec<f64>,
}

impl NoiseModel {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::InvalidArgument("noise model has no entries".into()));
        }
        if let Some(v) = variances.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "noise variances must be positive, got {v}"
            )));
        }
        Ok(Self { variances })
    }

    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; d])
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }
}

/// Observed data `y`, optionally with the function that generated it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub truth: Option<GridFunction>,
    pub seed: u64,
}

/// `y = G(truth) + ζ` with `ζ_j ~ N(0, C_jj)`, deterministic in `seed`.
pub fn synthesize_data(
    model: &ForwardModel,
    noise: &NoiseModel,
    truth: &GridFunction,
    seed: u64,
) -> Result<Dataset> {
    if noise.dim() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "noise dimension {} does not match forward dimension {}",
            noise.dim(),
            model.dim()
        )));
    }
    let clean = model.apply(truth)?;
    let mut stream = NormalStream::new(seed, STREAM_NOISE);
    let y = clean
        .iter()
        .zip(noise.variances())
        .map(|(g, v)| g + v.sqrt() * stream.normal())
        .collect();
    Ok(Dataset {
        y,
        truth: Some(truth.clone()),
        seed,
    })
}
