//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order (columns of the returned matrix follow).
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Moore–Penrose pseudoinverse with singular values below
/// `rel_cutoff * σ_max` treated as zero.
#[derive(Debug, Clone)]
pub struct Pseudoinverse {
    pub matrix: DMatrix<f64>,
    /// `σ_max / σ_min` over all singular values (infinite when rank deficient).
    pub condition: f64,
    pub rank: usize,
}

pub fn pseudoinverse(m: &DMatrix<f64>, rel_cutoff: f64) -> Pseudoinverse {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Pseudoinverse {
            matrix: DMatrix::zeros(c, r),
            condition: f64::INFINITY,
            rank: 0,
        };
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let tol = rel_cutoff * smax;
    let mut out = DMatrix::zeros(c, r);
    let mut rank = 0;
    for i in 0..s.len() {
        if s[i] > tol && s[i] > 0.0 {
            rank += 1;
            out += vt.row(i).transpose() * (u.column(i).transpose() / s[i]);
        }
    }
    let condition = if r < c {
        // More unknowns than equations: columns cannot be independent.
        f64::INFINITY
    } else if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    Pseudoinverse {
        matrix: out,
        condition,
        rank,
    }
}

/// Result of a weighted linear least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Coefficients, one column per right-hand side.
    pub coeffs: DMatrix<f64>,
    /// Condition number of the (column-scaled) weighted design matrix.
    pub condition: f64,
}

/// A rank-deficient design: `null` is a unit null vector in the original
/// (unscaled) column coordinates.
#[derive(Debug, Clone)]
pub struct Deficient {
    pub null_vectors: Vec<DVector<f64>>,
}

/// Solves `min_X Σ_i w_i ‖x_iᵀ X − y_i‖²` for design rows `x_i` and targets
/// `y_i` via the SVD of the column-scaled, row-weighted design. Columns whose
/// scaled singular values fall below `rel_tol · σ_max` make the problem
/// rank deficient.
pub fn weighted_least_squares(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    weights: &[f64],
    rel_tol: f64,
) -> std::result::Result<LeastSquares, Deficient> {
    let (m, p) = design.shape();
    assert_eq!(targets.nrows(), m);
    assert_eq!(weights.len(), m);
    let mut a = design.clone();
    let mut b = targets.clone();
    for i in 0..m {
        let s = weights[i].sqrt();
        a.row_mut(i).scale_mut(s);
        b.row_mut(i).scale_mut(s);
    }
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let n = a.column(j).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for j in 0..p {
        a.column_mut(j).scale_mut(1.0 / scale[j]);
    }
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let deficient: Vec<usize> = (0..p).filter(|&i| i >= s.len() || s[i] <= rel_tol * smax).collect();
    if !deficient.is_empty() || smax == 0.0 {
        let null_vectors = deficient
            .iter()
            .filter(|&&i| i < vt.nrows())
            .map(|&i| {
                let mut v: DVector<f64> = vt.row(i).transpose();
                for j in 0..p {
                    v[j] /= scale[j];
                }
                let n = v.norm();
                v / n
            })
            .collect();
        return Err(Deficient { null_vectors });
    }
    let u = svd.u.as_ref().expect("u requested");
    let mut x = DMatrix::zeros(p, b.ncols());
    for i in 0..p {
        let proj = u.column(i).transpose() * &b / s[i];
        x += vt.row(i).transpose() * proj;
    }
    for j in 0..p {
        x.row_mut(j).scale_mut(1.0 / scale[j]);
    }
    Ok(LeastSquares {
        coeffs: x,
        condition: smax / s.min(),
    })
}

/// Trapezoidal quadrature weights for samples at `t`.
pub fn trapezoid_weights(t: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (t[i + 1] - t[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}
