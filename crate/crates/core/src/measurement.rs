//! Sensor readings sampled in time.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interp::{interpolation_matrix, Interpolation};
use crate::snapshot::check_increasing;
use crate::table;

/// Readings `f_k(u(τ_m))`: one row per time, one column per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    times: Vec<f64>,
    values: DMatrix<f64>,
}

impl MeasurementRecord {
    pub fn new(times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("measurement record needs at least one time"));
        }
        if values.nrows() != times.len() {
            return Err(Error::invalid(format!(
                "{} measurement rows for {} times",
                values.nrows(),
                times.len()
            )));
        }
        check_increasing(&times, "measurement times")?;
        Ok(MeasurementRecord { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, m: usize) -> DVector<f64> {
        self.values.row(m).transpose()
    }

    /// Readings with a per-sensor offset removed, `f − f(ū)`.
    pub fn centered(&self, offset: &DVector<f64>) -> Result<Self> {
        if offset.len() != self.n_sensors() {
            return Err(Error::invalid(format!(
                "offset of length {} for {} sensors",
                offset.len(),
                self.n_sensors()
            )));
        }
        let mut v = self.values.clone();
        for mut row in v.row_iter_mut() {
            row -= offset.transpose();
        }
        Self::new(self.times.clone(), v)
    }

    pub fn resample(&self, times: &[f64], method: Interpolation) -> Result<Self> {
        let m = interpolation_matrix(&self.times, times, method)?;
        Self::new(times.to_vec(), m * &self.values)
    }

    /// Rows `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.times.len() {
            return Err(Error::invalid(format!(
                "slice {start}..{} outside a record of {} samples",
                start + len,
                self.times.len()
            )));
        }
        Self::new(
            self.times[start..start + len].to_vec(),
            self.values.rows(start, len).into_owned(),
        )
    }

    /// Whether samples are equally spaced to relative 1e-9.
    pub fn is_uniform(&self) -> bool {
        if self.times.len() < 3 {
            return true;
        }
        let h = self.times[1] - self.times[0];
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs())
    }

    pub fn save(&self, path: &Path, comment: &str) -> Result<()> {
        let cols: Vec<String> = (1..=self.n_sensors()).map(|k| format!("f{k}")).collect();
        table::write(path, comment, &cols, &self.times, &self.values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (_, times, values) = table::read(path)?;
        Self::new(times, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_and_round_trip() {
        let r = MeasurementRecord::new(vec![0.0, 1.0], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let c = r.centered(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(c.values()[(1, 1)], 3.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        r.save(&p, "").unwrap();
        assert_eq!(MeasurementRecord::load(&p).unwrap(), r);
        assert!(r.is_uniform());
        assert!(r.slice(1, 2).is_err());
    }
}
