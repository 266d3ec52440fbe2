//! One-dimensional interpolation in barycentric form.
//!
//! [`Barycentric`] covers both polynomial (Lagrange) interpolation, which is
//! the right choice on Chebyshev-Gauss-Lobatto nodes, and Floater–Hormann
//! rational interpolation, which stays well conditioned on equispaced samples
//! where a global polynomial would not.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    /// Floater–Hormann blending of local polynomials of the given degree.
    Rational(usize),
    /// Global Lagrange polynomial through all nodes.
    Polynomial,
}

/// Blending degree used when resampling uniformly sampled records.
pub const DEFAULT_RATIONAL_DEGREE: usize = 6;

#[derive(Debug, Clone)]
pub struct Barycentric {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Barycentric {
    /// Lagrange weights `w_j = 1 / Π_{k≠j} (x_j − x_k)`, rescaled to unit
    /// maximum magnitude.
    pub fn lagrange(nodes: &[f64]) -> Self {
        let n = nodes.len();
        let span = (nodes[n - 1] - nodes[0]).abs().max(f64::MIN_POSITIVE);
        // Scale differences by 4/span to avoid overflow for large n.
        let c = 4.0 / span;
        let mut weights: Vec<f64> = (0..n)
            .map(|j| {
                let mut p = 1.0;
                for k in 0..n {
                    if k != j {
                        p *= c * (nodes[j] - nodes[k]);
                    }
                }
                1.0 / p
            })
            .collect();
        normalize(&mut weights);
        Barycentric {
            nodes: nodes.to_vec(),
            weights,
        }
    }

    /// Closed-form Lagrange weights for Chebyshev-Gauss-Lobatto nodes listed
    /// in increasing order.
    pub fn cgl(nodes: &[f64]) -> Self {
        let n = nodes.len();
        let weights = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Barycentric {
            nodes: nodes.to_vec(),
            weights,
        }
    }

    /// Floater–Hormann weights with blending degree `d` (clamped to `n − 1`).
    pub fn floater_hormann(nodes: &[f64], d: usize) -> Self {
        let n = nodes.len();
        let d = d.min(n - 1);
        let mut weights = vec![0.0; n];
        for (k, wk) in weights.iter_mut().enumerate() {
            let lo = k.saturating_sub(d);
            let hi = k.min(n - 1 - d);
            let mut sum = 0.0;
            for i in lo..=hi {
                let mut prod = 1.0;
                for j in i..=i + d {
                    if j != k {
                        prod /= (nodes[k] - nodes[j]).abs();
                    }
                }
                sum += prod;
            }
            *wk = if k % 2 == 0 { sum } else { -sum };
        }
        normalize(&mut weights);
        Barycentric {
            nodes: nodes.to_vec(),
            weights,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row of interpolation coefficients `ℓ_j(t)` so that `p(t) = Σ_j ℓ_j f_j`.
    pub fn coefficients(&self, t: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0; n];
        if let Some(j) = self.nodes.iter().position(|&x| x == t) {
            out[j] = 1.0;
            return out;
        }
        let mut denom = 0.0;
        for j in 0..n {
            let q = self.weights[j] / (t - self.nodes[j]);
            out[j] = q;
            denom += q;
        }
        for v in &mut out {
            *v /= denom;
        }
        out
    }

    pub fn eval(&self, values: &[f64], t: f64) -> f64 {
        self.coefficients(t)
            .iter()
            .zip(values)
            .map(|(c, v)| c * v)
            .sum()
    }

    /// Matrix mapping node values to values at `targets` (rows = targets).
    pub fn matrix(&self, targets: &[f64]) -> DMatrix<f64> {
        let n = self.nodes.len();
        let mut m = DMatrix::zeros(targets.len(), n);
        for (i, &t) in targets.iter().enumerate() {
            for (j, c) in self.coefficients(t).into_iter().enumerate() {
                m[(i, j)] = c;
            }
        }
        m
    }
}

fn normalize(w: &mut [f64]) {
    let m = w.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if m > 0.0 {
        for v in w.iter_mut() {
            *v /= m;
        }
    }
}

fn linear_matrix(nodes: &[f64], targets: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(targets.len(), nodes.len());
    for (i, &t) in targets.iter().enumerate() {
        let k = nodes.partition_point(|&x| x <= t);
        if k == 0 {
            m[(i, 0)] = 1.0;
        } else if k >= nodes.len() {
            m[(i, nodes.len() - 1)] = 1.0;
        } else {
            let th = (t - nodes[k - 1]) / (nodes[k] - nodes[k - 1]);
            m[(i, k - 1)] = 1.0 - th;
            if th != 0.0 {
                m[(i, k)] = th;
            }
        }
    }
    m
}

/// Interpolation matrix from samples at `nodes` to `targets`. Targets outside
/// `[nodes[0], nodes[n−1]]` (beyond a relative 1e-12 slack) are refused.
pub fn interpolation_matrix(
    nodes: &[f64],
    targets: &[f64],
    method: Interpolation,
) -> Result<DMatrix<f64>> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::invalid("interpolation from zero samples"));
    }
    let (lo, hi) = (nodes[0], nodes[n - 1]);
    let slack = 1e-12 * (hi - lo).abs().max(1.0);
    if let Some(&t) = targets.iter().find(|&&t| !(t >= lo - slack && t <= hi + slack)) {
        return Err(Error::Extrapolation {
            time: t,
            start: lo,
            end: hi,
        });
    }
    if n == 1 {
        return Ok(DMatrix::from_element(targets.len(), 1, 1.0));
    }
    Ok(match method {
        Interpolation::Linear => linear_matrix(nodes, targets),
        Interpolation::Rational(d) => Barycentric::floater_hormann(nodes, d).matrix(targets),
        Interpolation::Polynomial => Barycentric::lagrange(nodes).matrix(targets),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_reproduces_polynomials() {
        let x = [0.0, 0.3, 0.5, 1.1, 2.0];
        let b = Barycentric::lagrange(&x);
        let f: Vec<f64> = x.iter().map(|t| t * t * t - 2.0 * t + 1.0).collect();
        for t in [0.1, 0.77, 1.9] {
            assert!((b.eval(&f, t) - (t * t * t - 2.0 * t + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn cgl_weights_match_general_weights() {
        let n = 9;
        let nodes: Vec<f64> = (0..n)
            .map(|j| -(std::f64::consts::PI * j as f64 / (n - 1) as f64).cos())
            .collect();
        let a = Barycentric::cgl(&nodes);
        let b = Barycentric::lagrange(&nodes);
        let f: Vec<f64> = nodes.iter().map(|t| (3.0 * t).sin()).collect();
        for t in [-0.9, -0.2, 0.33, 0.95] {
            assert!((a.eval(&f, t) - b.eval(&f, t)).abs() < 1e-13);
        }
    }

    #[test]
    fn floater_hormann_on_equispaced_sine() {
        let x: Vec<f64> = (0..101).map(|i| i as f64 * 0.1).collect();
        let f: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let b = Barycentric::floater_hormann(&x, 6);
        for t in [0.05, 3.333, 9.97] {
            assert!((b.eval(&f, t) - f64::sin(t)).abs() < 1e-9);
        }
        // degree d reproduces polynomials of degree d
        let g: Vec<f64> = x.iter().map(|t| t.powi(4) - t).collect();
        let b4 = Barycentric::floater_hormann(&x, 4);
        assert!((b4.eval(&g, 4.321) - (4.321f64.powi(4) - 4.321)).abs() < 1e-8);
    }

    #[test]
    fn node_hits_are_exact_and_extrapolation_refused() {
        let x = [0.0, 1.0, 2.0];
        let m = interpolation_matrix(&x, &[1.0], Interpolation::Rational(2)).unwrap();
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        assert!(interpolation_matrix(&x, &[2.5], Interpolation::Linear).is_err());
        let l = interpolation_matrix(&x, &[0.25], Interpolation::Linear).unwrap();
        assert_eq!(l[(0, 0)], 0.75);
    }
}
