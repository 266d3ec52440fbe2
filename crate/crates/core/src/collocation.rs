//! Chebyshev-Gauss-Lobatto collocation in time.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::interp::Barycentric;

/// CGL nodes on `[t_a, t_b]` in increasing order with the dense
/// differentiation matrix of the interpolating polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationOperator {
    nodes: Vec<f64>,
    diff: DMatrix<f64>,
}

/// Node `j` of `n` CGL points mapped to `[t_a, t_b]`:
/// `t_a + (t_b − t_a)(1 − cos(jπ/(n−1)))/2`.
pub fn cgl_nodes(t_a: f64, t_b: f64, n: usize) -> Vec<f64> {
    let h = t_b - t_a;
    (0..n)
        .map(|j| {
            if j == 0 {
                t_a
            } else if j == n - 1 {
                t_b
            } else {
                let s = (std::f64::consts::PI * j as f64 / (2.0 * (n - 1) as f64)).sin();
                t_a + h * s * s
            }
        })
        .collect()
}

pub fn build_collocation(t_a: f64, t_b: f64, n_points: usize) -> Result<CollocationOperator> {
    if !(t_b > t_a) || !t_a.is_finite() || !t_b.is_finite() {
        return Err(Error::invalid(format!("collocation interval [{t_a}, {t_b}] is empty")));
    }
    if n_points < 2 {
        return Err(Error::invalid(format!("collocation needs at least 2 points, got {n_points}")));
    }
    let nodes = cgl_nodes(t_a, t_b, n_points);
    let bary = Barycentric::cgl(&nodes);
    let w = bary.weights();
    let n = n_points;
    let mut diff = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (w[j] / w[i]) / (nodes[i] - nodes[j]);
                diff[(i, j)] = v;
                diag -= v;
            }
        }
        diff[(i, i)] = diag;
    }
    Ok(CollocationOperator { nodes, diff })
}

impl CollocationOperator {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn diff_matrix(&self) -> &DMatrix<f64> {
        &self.diff
    }

    pub fn n_points(&self) -> usize {
        self.nodes.len()
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    /// Interpolant through values at the nodes.
    pub fn interpolant(&self) -> Barycentric {
        Barycentric::cgl(&self.nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_linear() {
        let op = build_collocation(0.0, 1.0, 2).unwrap();
        assert_eq!(op.nodes(), &[0.0, 1.0]);
        let d = op.diff_matrix() * nalgebra::DVector::from_vec(vec![3.0, 5.0]);
        assert!((d[0] - 2.0).abs() < 1e-14 && (d[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn quadratic_exact_on_eight_nodes() {
        let op = build_collocation(0.0, 1.0, 8).unwrap();
        let f = nalgebra::DVector::from_iterator(8, op.nodes().iter().map(|t| t * t));
        let d = op.diff_matrix() * f;
        for (i, t) in op.nodes().iter().enumerate() {
            assert!((d[i] - 2.0 * t).abs() < 1e-10);
        }
    }

    #[test]
    fn endpoints_exact_and_rows_sum_to_zero() {
        let op = build_collocation(1.3, 7.9, 81).unwrap();
        assert_eq!(op.interval(), (1.3, 7.9));
        for i in 0..81 {
            assert!(op.diff_matrix().row(i).sum().abs() < 1e-12);
        }
        assert!(build_collocation(1.0, 1.0, 5).is_err());
        assert!(build_collocation(0.0, 1.0, 1).is_err());
    }
}
