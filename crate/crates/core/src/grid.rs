//! Quadrature grids realizing the discrete Hilbert space `X`, and functions
//! sampled on them.
//!
//! `⟨f, g⟩_X = Σ_i w_i f_i g_i` with composite trapezoidal weights on a
//! uniform grid. Off-node evaluation is piecewise linear.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Uniform grid on `[a, b]` with `m` nodes and trapezoidal weights.
pub fn build_grid(a: f64, b: f64, m: usize) -> Result<Arc<Grid>> {
    Grid::uniform(a, b, m).map(Arc::new)
}

impl Grid {
    pub fn uniform(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidArgument(format!(
                "grid requires finite a < b, got [{a}, {b}]"
            )));
        }
        if m < 3 {
            return Err(Error::InvalidArgument(format!(
                "grid requires at least 3 nodes, got {m}"
            )));
        }
        let h = (b - a) / (m - 1) as f64;
        let mut nodes: Vec<f64> = (0..m).map(|i| a + i as f64 * h).collect();
        nodes[m - 1] = b;
        let mut weights = vec![h; m];
        weights[0] = 0.5 * h;
        weights[m - 1] = 0.5 * h;
        Ok(Self {
            lo: a,
            hi: b,
            nodes,
            weights,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.lo && s <= self.hi
    }

    /// Linear interpolation stencil at `s`: returns `(i, θ)` such that
    /// `f(s) = (1 − θ) f_i + θ f_{i+1}`. `θ` is exactly zero at nodes.
    pub fn stencil(&self, s: f64) -> Result<(usize, f64)> {
        if !self.contains(s) {
            return Err(Error::OutOfDomain {
                point: s,
                lo: self.lo,
                hi: self.hi,
            });
        }
        let m = self.nodes.len();
        let i = self
            .nodes
            .partition_point(|&t| t <= s)
            .saturating_sub(1)
            .min(m - 2);
        let (left, right) = (self.nodes[i], self.nodes[i + 1]);
        let theta = if s == left { 0.0 } else { (s - left) / (right - left) };
        Ok((i, theta))
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn ensure_same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Nodal values of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(self
            .grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (f, g))| w * f * g)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, f)| w * f * f)
            .sum::<f64>()
            .sqrt()
    }

    pub fn evaluate_at(&self, s: f64) -> Result<f64> {
        let (i, theta) = self.grid.stencil(s)?;
        if theta == 0.0 {
            return Ok(self.values[i]);
        }
        Ok((1.0 - theta) * self.values[i] + theta * self.values[i + 1])
    }

    pub fn scaled(&self, alpha: f64) -> GridFunction {
        GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &GridFunction) -> Result<GridFunction> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(GridFunction {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.add_scaled(-1.0, other)
    }
}

/// `⟨f, g⟩_X`.
pub fn inner_product_x(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.inner(g)
}
