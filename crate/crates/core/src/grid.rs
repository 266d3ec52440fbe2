//! Rectilinear grids, vector fields sampled on them, and the discrete L2
//! inner product.
//!
//! Storage is component-major with axis 0 varying fastest: the flat index of
//! point `(i0, i1, i2)` is `i0 + n0 * (i1 + n1 * i2)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::par;

/// A 2-D or 3-D tensor-product grid with trapezoidal quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: Vec<usize>,
    coords: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn trapezoid_1d(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

impl Grid {
    /// Builds a grid from per-axis coordinate arrays.
    pub fn new(coords: Vec<Vec<f64>>) -> Result<Self> {
        if !(2..=3).contains(&coords.len()) {
            return Err(Error::invalid(format!(
                "grid must have 2 or 3 axes, got {}",
                coords.len()
            )));
        }
        for (axis, c) in coords.iter().enumerate() {
            if c.len() < 2 {
                return Err(Error::invalid(format!(
                    "axis {axis} needs at least 2 points, got {}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("axis {axis} has non-finite coordinates")));
            }
            if let Some(i) = c.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!(
                    "axis {axis} coordinates not strictly increasing at index {}",
                    i + 1
                )));
            }
        }
        let dims: Vec<usize> = coords.iter().map(Vec::len).collect();
        let axis_w: Vec<Vec<f64>> = coords.iter().map(|c| trapezoid_1d(c)).collect();
        let n: usize = dims.iter().product();
        let mut weights = vec![1.0; n];
        let mut stride = 1;
        for (axis, w) in axis_w.iter().enumerate() {
            let len = dims[axis];
            for (p, wp) in weights.iter_mut().enumerate() {
                *wp *= w[(p / stride) % len];
            }
            stride *= len;
        }
        Ok(Grid {
            dims,
            coords,
            weights,
        })
    }

    /// Uniformly spaced grid over the given `(lo, hi)` extents.
    pub fn uniform(dims: &[usize], extents: &[(f64, f64)]) -> Result<Self> {
        if dims.len() != extents.len() {
            return Err(Error::invalid("dims and extents differ in length"));
        }
        let coords = dims
            .iter()
            .zip(extents)
            .map(|(&n, &(lo, hi))| {
                let n = n.max(1);
                (0..n)
                    .map(|i| {
                        if i + 1 == n {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (n - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(coords)
    }

    pub fn n_axes(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    pub fn all_coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        let c = &self.coords[axis];
        (c[0], c[c.len() - 1])
    }

    /// Product of the axis extents.
    pub fn volume(&self) -> f64 {
        (0..self.n_axes())
            .map(|a| {
                let (lo, hi) = self.bounds(a);
                hi - lo
            })
            .product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.dims[..axis].iter().product()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| i * self.stride(a))
            .sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&n| {
                let i = flat % n;
                flat /= n;
                i
            })
            .collect()
    }

    /// Physical coordinates of a flat point index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coords[a][i])
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n_axes()
            && x.iter().enumerate().all(|(a, &v)| {
                let (lo, hi) = self.bounds(a);
                v >= lo && v <= hi
            })
    }

    /// Checks that `other` describes the same grid.
    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if std::ptr::eq(self, other) {
            return Ok(());
        }
        if self.dims != other.dims {
            return Err(Error::GridMismatch(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        for axis in 0..self.n_axes() {
            if self.coords[axis] != other.coords[axis] {
                return Err(Error::GridMismatch(format!(
                    "axis {axis} coordinates differ (dim {})",
                    self.dims[axis]
                )));
            }
        }
        Ok(())
    }
}

/// A vector field with one component per grid axis.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    components: Vec<Vec<f64>>,
}

impl PartialEq for VectorField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.check_same(&other.grid).is_ok() && self.components == other.components
    }
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.n_axes() {
            return Err(Error::invalid(format!(
                "field has {} components on a {}-axis grid",
                components.len(),
                grid.n_axes()
            )));
        }
        let n = grid.n_points();
        if let Some(c) = components.iter().position(|c| c.len() != n) {
            return Err(Error::invalid(format!(
                "component {c} has {} samples, grid has {n} points",
                components[c].len()
            )));
        }
        Ok(VectorField { grid, components })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let components = vec![vec![0.0; grid.n_points()]; grid.n_axes()];
        VectorField { grid, components }
    }

    /// Samples `f(x)` at every grid point; `f` returns one value per component.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(grid.clone());
        for p in 0..grid.n_points() {
            let v = f(&grid.point(p));
            for (c, comp) in out.components.iter_mut().enumerate() {
                comp[p] = v[c];
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.components[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &VectorField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.components {
            for x in c.iter_mut() {
                *x *= alpha;
            }
        }
    }

    pub fn scaled(&self, alpha: f64) -> VectorField {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn norm_squared(&self) -> f64 {
        inner_product_unchecked(self, self)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|v| v.is_finite())
    }
}

pub(crate) fn inner_product_unchecked(a: &VectorField, b: &VectorField) -> f64 {
    let w = a.grid.weights();
    par::chunked_sum(w.len(), |range| {
        let mut s = 0.0;
        for p in range {
            let mut dot = 0.0;
            for (ac, bc) in a.components.iter().zip(&b.components) {
                dot += ac[p] * bc[p];
            }
            s += w[p] * dot;
        }
        s
    })
}

/// Discrete L2 inner product `Σ_p w_p Σ_c a_c(p) b_c(p)`.
pub fn inner_product(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    Ok(inner_product_unchecked(a, b))
}

/// Second-order finite-difference first derivative of nodal samples along one
/// axis: central three-point stencil inside, one-sided three-point stencil at
/// the two ends. Works on non-uniform spacing.
pub fn derivative_along(grid: &Grid, values: &[f64], axis: usize) -> Result<Vec<f64>> {
    let x = grid.coords(axis);
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "axis {axis} has {n} points; derivative stencil needs at least 3"
        )));
    }
    let stride = grid.stride(axis);
    let mut out = vec![0.0; values.len()];
    for (p, o) in out.iter_mut().enumerate() {
        let i = (p / stride) % n;
        let base = p - i * stride;
        let f = |j: usize| values[base + j * stride];
        let (w, js) = stencil_weights(x, i);
        *o = w[0] * f(js[0]) + w[1] * f(js[1]) + w[2] * f(js[2]);
    }
    Ok(out)
}

/// Weights and node indices of the three-point first-derivative stencil at
/// node `i` of the coordinate array `x`.
pub(crate) fn stencil_weights(x: &[f64], i: usize) -> ([f64; 3], [usize; 3]) {
    let n = x.len();
    if i == 0 {
        let h1 = x[1] - x[0];
        let h2 = x[2] - x[1];
        (
            [
                -(2.0 * h1 + h2) / (h1 * (h1 + h2)),
                (h1 + h2) / (h1 * h2),
                -h1 / (h2 * (h1 + h2)),
            ],
            [0, 1, 2],
        )
    } else if i == n - 1 {
        let h1 = x[n - 1] - x[n - 2];
        let h2 = x[n - 2] - x[n - 3];
        (
            [
                (2.0 * h1 + h2) / (h1 * (h1 + h2)),
                -(h1 + h2) / (h1 * h2),
                h1 / (h2 * (h1 + h2)),
            ],
            [n - 1, n - 2, n - 3],
        )
    } else {
        let h1 = x[i] - x[i - 1];
        let h2 = x[i + 1] - x[i];
        (
            [
                -h2 / (h1 * (h1 + h2)),
                (h2 - h1) / (h1 * h2),
                h1 / (h2 * (h1 + h2)),
            ],
            [i - 1, i, i + 1],
        )
    }
}

/// Gradient tensor of a field: `out[c][d][p] = ∂_d u_c (p)`.
pub fn gradient(field: &VectorField) -> Result<Vec<Vec<Vec<f64>>>> {
    let grid = field.grid();
    field
        .components()
        .iter()
        .map(|comp| {
            (0..grid.n_axes())
                .map(|d| derivative_along(grid, comp, d))
                .collect()
        })
        .collect()
}
