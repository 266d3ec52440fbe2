//! Static estimators mapping sensor readings to modal coefficients.
//!
//! LSE, QSE and SLSE act on whatever record they are given; pass
//! offset-corrected readings `f − f(ū)` (see
//! [`MeasurementRecord::centered`](crate::measurement::MeasurementRecord::centered)).
//! LSQ removes the offset itself since it already holds the suite.

mod lse;
mod lsq;
mod qse;
mod slse;

pub use lse::{lse_estimate, lse_fit, LseModel};
pub use lsq::{lsq_estimate, lsq_operator, LsqOperator, LSQ_CONDITION_WARNING, LSQ_CUTOFF};
pub use qse::{qse_estimate, qse_fit, QseModel};
pub use slse::{slse_estimate, slse_estimate_with_residue, slse_fit, slse_kernel, SlseModel};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::Deficient;
use crate::measurement::MeasurementRecord;
use crate::trajectory::CoefficientTrajectory;

pub(crate) fn check_paired(reference: &CoefficientTrajectory, record: &MeasurementRecord) -> Result<()> {
    let (a, b) = (reference.times(), record.times());
    let scale = 1.0 + a.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-12 * scale) {
        return Err(Error::invalid(
            "training coefficients and measurements must share sample times",
        ));
    }
    Ok(())
}

/// Sensors (1-based) taking part in the null space of a singular design.
/// Regressor columns beyond the sensor count map back to their sensors via
/// `owner`.
pub(crate) fn dependent_sensors(d: &Deficient, owner: impl Fn(usize) -> Vec<usize>) -> Error {
    let mut sensors = Vec::new();
    for v in &d.null_vectors {
        let m = v.amax();
        for (j, x) in v.iter().enumerate() {
            if x.abs() > 1e-6 * m {
                sensors.extend(owner(j));
            }
        }
    }
    sensors.sort_unstable();
    sensors.dedup();
    Error::SingularCovariance {
        sensors: sensors.into_iter().map(|s| s + 1).collect(),
    }
}

pub(crate) fn trajectory(record: &MeasurementRecord, values: DMatrix<f64>) -> Result<CoefficientTrajectory> {
    CoefficientTrajectory::new(record.times().to_vec(), values)
}
