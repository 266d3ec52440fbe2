use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{trapezoid_weights, weighted_least_squares};
use crate::measurement::MeasurementRecord;
use crate::record::Record;
use crate::trajectory::CoefficientTrajectory;

/// `α_j = Σ_k Λ_kj f_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LseModel {
    /// `N_s × N_r`.
    pub lambda: DMatrix<f64>,
}

pub(crate) const SINGULAR_TOL: f64 = 1e-12;

/// Least-squares fit of `Λ` with trapezoidal time weights, i.e. the
/// solution of `⟨α_j f_k⟩ = Σ_m Λ_mj ⟨f_m f_k⟩`.
pub fn lse_fit(reference: &CoefficientTrajectory, record: &MeasurementRecord) -> Result<LseModel> {
    super::check_paired(reference, record)?;
    let w = trapezoid_weights(record.times());
    let ls = weighted_least_squares(record.values(), reference.values(), &w, SINGULAR_TOL)
        .map_err(|d| super::dependent_sensors(&d, |j| vec![j]))?;
    Ok(LseModel { lambda: ls.coeffs })
}

pub fn lse_estimate(model: &LseModel, record: &MeasurementRecord) -> Result<CoefficientTrajectory> {
    if record.n_sensors() != model.lambda.nrows() {
        return Err(Error::invalid(format!(
            "record has {} sensors, model {}",
            record.n_sensors(),
            model.lambda.nrows()
        )));
    }
    super::trajectory(record, record.values() * &model.lambda)
}

impl LseModel {
    pub fn to_record(&self) -> Record {
        let mut r = Record::new("lse-model");
        r.push_matrix("lambda", &self.lambda);
        r
    }

    pub fn from_record(r: &Record) -> Result<Self> {
        r.expect_kind("lse-model")?;
        Ok(LseModel {
            lambda: r.matrix("lambda")?,
        })
    }
}
