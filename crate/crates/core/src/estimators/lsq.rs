use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::pseudoinverse;
use crate::measurement::MeasurementRecord;
use crate::sensors::SensorSuite;
use crate::trajectory::CoefficientTrajectory;

/// Relative singular-value cutoff of the pseudoinverse.
pub const LSQ_CUTOFF: f64 = 1e-12;
/// Condition numbers above this attach a warning.
pub const LSQ_CONDITION_WARNING: f64 = 1e12;

/// `Υ`, the minimum-norm least-squares map from offset-corrected readings to
/// coefficients.
#[derive(Debug, Clone)]
pub struct LsqOperator {
    pub upsilon: DMatrix<f64>,
    pub condition: f64,
    pub warning: Option<String>,
}

pub fn lsq_operator(suite: &SensorSuite) -> LsqOperator {
    let p = pseudoinverse(suite.mode_response(), LSQ_CUTOFF);
    let warning = (!(p.condition <= LSQ_CONDITION_WARNING)).then(|| {
        format!(
            "LSQ sensor matrix is ill conditioned (condition {:e}, rank {} for {} modes); \
             using the minimum-norm solution",
            p.condition,
            p.rank,
            suite.mode_response().ncols()
        )
    });
    LsqOperator {
        upsilon: p.matrix,
        condition: p.condition,
        warning,
    }
}

/// Per-time least-squares coefficients from raw readings.
pub fn lsq_estimate(suite: &SensorSuite, record: &MeasurementRecord) -> Result<(CoefficientTrajectory, LsqOperator)> {
    if record.n_sensors() != suite.n_sensors() {
        return Err(Error::invalid(format!(
            "record has {} sensors, suite {}",
            record.n_sensors(),
            suite.n_sensors()
        )));
    }
    let op = lsq_operator(suite);
    if let Some(w) = &op.warning {
        log::warn!("{w}");
    }
    let centered = record.centered(suite.ref_offset())?;
    let values = centered.values() * op.upsilon.transpose();
    Ok((super::trajectory(record, values)?, op))
}
