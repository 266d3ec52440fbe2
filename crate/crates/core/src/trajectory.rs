//! Sampled modal-coefficient histories.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interp::{interpolation_matrix, Interpolation};
use crate::snapshot::check_increasing;
use crate::table;

/// Coefficient histories `a_r(τ_m)`: one row per sample time, one column per
/// mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTrajectory {
    times: Vec<f64>,
    values: DMatrix<f64>,
}

impl CoefficientTrajectory {
    pub fn new(times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("trajectory needs at least one sample"));
        }
        if values.nrows() != times.len() {
            return Err(Error::invalid(format!(
                "{} rows for {} sample times",
                values.nrows(),
                times.len()
            )));
        }
        check_increasing(&times, "trajectory times")?;
        Ok(CoefficientTrajectory { times, values })
    }

    pub fn from_rows(times: Vec<f64>, rows: &[DVector<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        let mut values = DMatrix::zeros(rows.len(), n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::invalid("ragged trajectory rows"));
            }
            values.set_row(i, &r.transpose());
        }
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    pub fn n_modes(&self) -> usize {
        self.values.ncols()
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    pub fn mode(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    /// Values at new sample times.
    pub fn resample(&self, times: &[f64], method: Interpolation) -> Result<Self> {
        let m = interpolation_matrix(&self.times, times, method)?;
        Self::new(times.to_vec(), m * &self.values)
    }

    /// Samples whose times fall in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Result<Self> {
        let idx: Vec<usize> = (0..self.times.len())
            .filter(|&i| self.times[i] >= t0 && self.times[i] <= t1)
            .collect();
        if idx.is_empty() {
            return Err(Error::invalid(format!("no samples in [{t0}, {t1}]")));
        }
        let times = idx.iter().map(|&i| self.times[i]).collect();
        let values = self.values.select_rows(&idx);
        Self::new(times, values)
    }

    pub fn save(&self, path: &Path, comment: &str) -> Result<()> {
        let cols: Vec<String> = (1..=self.n_modes()).map(|j| format!("a{j}")).collect();
        table::write(path, comment, &cols, &self.times, &self.values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (_, times, values) = table::read(path)?;
        Self::new(times, values)
    }
}
