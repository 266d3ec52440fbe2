//! Pseudo-spectral calibration of the constant and linear ROM coefficients.
//!
//! With `B` fixed the residual at every collocation node is linear in
//! `(A_r, C_·r)`, so each mode is an ordinary least-squares problem. All
//! modes share the design matrix `[1, a_1 … a_N]` evaluated at the nodes.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::collocation::CollocationOperator;
use crate::error::{Error, Result};
use crate::interp::{Interpolation, DEFAULT_RATIONAL_DEGREE};
use crate::io;
use crate::linalg::weighted_least_squares;
use crate::rom::{QuadTensor, RomCoefficients};
use crate::trajectory::CoefficientTrajectory;

/// Relative singular-value threshold below which the design is singular.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    /// Per-mode residual norm over the nodes with `A = C = 0`.
    pub residual_before: Vec<f64>,
    /// Per-mode residual norm after the fit.
    pub residual_after: Vec<f64>,
    /// Condition number of each mode's normal system.
    pub condition: Vec<f64>,
}

impl CalibrationReport {
    pub fn to_text(&self, comment: &str) -> String {
        let mut out = String::new();
        io::push_comment(&mut out, comment);
        out.push_str("# columns: mode residual_before residual_after normal_condition\n");
        for r in 0..self.residual_before.len() {
            let _ = writeln!(
                out,
                "{} {:e} {:e} {:e}",
                r + 1,
                self.residual_before[r],
                self.residual_after[r],
                self.condition[r]
            );
        }
        out
    }

    pub fn save(&self, path: &Path, comment: &str) -> Result<()> {
        io::write_file(path, self.to_text(comment).as_bytes())
    }
}

/// Samples a trajectory at the collocation nodes. Uniformly sampled data are
/// interpolated with Floater–Hormann rational blending, which does not
/// suffer from the Runge oscillation of a single global polynomial.
pub fn resample_to_nodes(reference: &CoefficientTrajectory, op: &CollocationOperator) -> Result<CoefficientTrajectory> {
    reference.resample(op.nodes(), Interpolation::Rational(DEFAULT_RATIONAL_DEGREE))
}

fn node_residuals(
    b: &QuadTensor,
    x: &DMatrix<f64>,
    da: &DMatrix<f64>,
    a: &DVector<f64>,
    c: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (m, n) = x.shape();
    let mut res = DMatrix::zeros(m, n);
    for i in 0..m {
        let ai: Vec<f64> = x.row(i).iter().copied().collect();
        let q = b.contract(&ai);
        for r in 0..n {
            let mut v = da[(i, r)] - a[r] + q[r];
            for k in 0..n {
                v -= c[(k, r)] * ai[k];
            }
            res[(i, r)] = v;
        }
    }
    res
}

/// Fits `A` and `C` so that the ROM residual at the nodes is minimal in the
/// least-squares sense. `reference` must be sampled at `op`'s nodes.
pub fn calibrate(
    b: &QuadTensor,
    reference: &CoefficientTrajectory,
    op: &CollocationOperator,
) -> Result<(RomCoefficients, CalibrationReport)> {
    let n = b.n();
    if reference.n_modes() != n {
        return Err(Error::invalid(format!(
            "reference has {} modes, quadratic tensor {n}",
            reference.n_modes()
        )));
    }
    let nodes = op.nodes();
    let scale = 1.0 + nodes.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    if reference.n_samples() != nodes.len()
        || reference
            .times()
            .iter()
            .zip(nodes)
            .any(|(t, s)| (t - s).abs() > 1e-12 * scale)
    {
        return Err(Error::invalid(
            "reference trajectory must be sampled at the collocation nodes",
        ));
    }
    let x = reference.values();
    let m = x.nrows();
    let da = op.diff_matrix() * x;
    let mut design = DMatrix::zeros(m, n + 1);
    let mut rhs = DMatrix::zeros(m, n);
    for i in 0..m {
        design[(i, 0)] = 1.0;
        let ai: Vec<f64> = x.row(i).iter().copied().collect();
        for k in 0..n {
            design[(i, k + 1)] = ai[k];
        }
        let q = b.contract(&ai);
        for r in 0..n {
            rhs[(i, r)] = da[(i, r)] + q[r];
        }
    }
    let before = node_residuals(b, x, &da, &DVector::zeros(n), &DMatrix::zeros(n, n));
    let ls = weighted_least_squares(&design, &rhs, &vec![1.0; m], RANK_TOL).map_err(|d| {
        // Name the mode whose column carries the largest share of the null vector.
        let v = &d.null_vectors[0];
        let mode = (1..=n)
            .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()))
            .unwrap_or(1);
        Error::RankDeficient {
            context: "calibration".into(),
            mode,
        }
    })?;
    let a_const = ls.coeffs.row(0).transpose();
    let c_linear = ls.coeffs.rows(1, n).into_owned();
    let after = node_residuals(b, x, &da, &a_const, &c_linear);
    let norms = |r: &DMatrix<f64>| (0..n).map(|j| r.column(j).norm()).collect::<Vec<f64>>();
    let report = CalibrationReport {
        residual_before: norms(&before),
        residual_after: norms(&after),
        condition: vec![ls.condition * ls.condition; n],
    };
    let rom = RomCoefficients::new(a_const, c_linear, b.clone())?;
    Ok((rom, report))
}
