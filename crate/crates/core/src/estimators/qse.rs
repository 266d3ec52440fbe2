use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{trapezoid_weights, weighted_least_squares};
use crate::measurement::MeasurementRecord;
use crate::record::Record;
use crate::trajectory::CoefficientTrajectory;

use super::lse::SINGULAR_TOL;

/// `α_j = Σ_k Λ_kj f_k + Σ_km Ω_kmj f_k f_m` with `Ω` symmetric in `k, m`.
#[derive(Debug, Clone, PartialEq)]
pub struct QseModel {
    /// `N_s × N_r`.
    pub lambda: DMatrix<f64>,
    /// `Ω_kmj` at index `(k·N_s + m)·N_r + j`.
    pub omega: Vec<f64>,
    n_sensors: usize,
    n_modes: usize,
}

fn pairs(ns: usize) -> Vec<(usize, usize)> {
    (0..ns).flat_map(|k| (k..ns).map(move |m| (k, m))).collect()
}

/// Regressor rows `[f_k ; f_k f_m (k ≤ m)]`.
fn regressors(f: &DMatrix<f64>) -> DMatrix<f64> {
    let ns = f.ncols();
    let pr = pairs(ns);
    DMatrix::from_fn(f.nrows(), ns + pr.len(), |i, c| {
        if c < ns {
            f[(i, c)]
        } else {
            let (k, m) = pr[c - ns];
            f[(i, k)] * f[(i, m)]
        }
    })
}

pub fn qse_fit(reference: &CoefficientTrajectory, record: &MeasurementRecord) -> Result<QseModel> {
    super::check_paired(reference, record)?;
    let ns = record.n_sensors();
    let nr = reference.n_modes();
    let pr = pairs(ns);
    let x = regressors(record.values());
    let w = trapezoid_weights(record.times());
    let ls = weighted_least_squares(&x, reference.values(), &w, SINGULAR_TOL).map_err(|d| {
        super::dependent_sensors(&d, |c| if c < ns { vec![c] } else { vec![pr[c - ns].0, pr[c - ns].1] })
    })?;
    let lambda = ls.coeffs.rows(0, ns).into_owned();
    let mut omega = vec![0.0; ns * ns * nr];
    for (p, &(k, m)) in pr.iter().enumerate() {
        for j in 0..nr {
            let theta = ls.coeffs[(ns + p, j)];
            if k == m {
                omega[(k * ns + k) * nr + j] = theta;
            } else {
                omega[(k * ns + m) * nr + j] = 0.5 * theta;
                omega[(m * ns + k) * nr + j] = 0.5 * theta;
            }
        }
    }
    Ok(QseModel {
        lambda,
        omega,
        n_sensors: ns,
        n_modes: nr,
    })
}

impl QseModel {
    pub fn new(lambda: DMatrix<f64>, omega: Vec<f64>) -> Result<Self> {
        let (ns, nr) = lambda.shape();
        if omega.len() != ns * ns * nr {
            return Err(Error::invalid("omega size does not match lambda"));
        }
        Ok(QseModel {
            lambda,
            omega,
            n_sensors: ns,
            n_modes: nr,
        })
    }

    pub fn omega(&self, k: usize, m: usize, j: usize) -> f64 {
        self.omega[(k * self.n_sensors + m) * self.n_modes + j]
    }

    pub fn evaluate(&self, f: &[f64]) -> DVector<f64> {
        let (ns, nr) = (self.n_sensors, self.n_modes);
        let mut out = DVector::zeros(nr);
        for j in 0..nr {
            let mut v = 0.0;
            for k in 0..ns {
                v += self.lambda[(k, j)] * f[k];
                for m in 0..ns {
                    v += self.omega(k, m, j) * f[k] * f[m];
                }
            }
            out[j] = v;
        }
        out
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new("qse-model");
        r.push_matrix("lambda", &self.lambda).push(
            "omega",
            vec![self.n_sensors, self.n_sensors, self.n_modes],
            self.omega.clone(),
        );
        r
    }

    pub fn from_record(r: &Record) -> Result<Self> {
        r.expect_kind("qse-model")?;
        Self::new(r.matrix("lambda")?, r.get("omega")?.data.clone())
    }
}

pub fn qse_estimate(model: &QseModel, record: &MeasurementRecord) -> Result<CoefficientTrajectory> {
    if record.n_sensors() != model.n_sensors {
        return Err(Error::invalid(format!(
            "record has {} sensors, model {}",
            record.n_sensors(),
            model.n_sensors
        )));
    }
    let mut values = DMatrix::zeros(record.n_times(), model.n_modes);
    for i in 0..record.n_times() {
        let f: Vec<f64> = record.values().row(i).iter().copied().collect();
        values.set_row(i, &model.evaluate(&f).transpose());
    }
    super::trajectory(record, values)
}
