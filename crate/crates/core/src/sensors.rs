//! Linear measurement functionals on velocity fields.
//!
//! Every sensor compiles to a sparse stencil `Σ coeff · u_comp(point)` on
//! the grid, so applying it to a field, to a POD mode or to the reference
//! is the same weighted sum.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{stencil_weights, Grid, VectorField};
use crate::measurement::MeasurementRecord;
use crate::par;
use crate::pod::PodBasis;
use crate::snapshot::SnapshotSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorKind {
    PointVelocity,
    WallShear,
    BoxAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WallSide {
    Lower,
    Upper,
}

fn one() -> f64 {
    1.0
}

/// One sensor. `location` is the probe point, the box centre, or a point on
/// or next to the wall. For wall shear `component` is the wall-tangential
/// velocity component; the wall is `wall_axis`/`wall_side` or, when absent,
/// the nearest one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub kind: SensorKind,
    pub location: Vec<f64>,
    #[serde(default)]
    pub component: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_side: Option<WallSide>,
    /// Box half-widths per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub weight: f64,
}

impl SensorSpec {
    pub fn point(location: Vec<f64>, component: usize) -> Self {
        SensorSpec {
            kind: SensorKind::PointVelocity,
            location,
            component,
            wall_axis: None,
            wall_side: None,
            half_width: None,
            weight: 1.0,
        }
    }

    pub fn wall_shear(location: Vec<f64>, component: usize, wall_axis: usize, wall_side: WallSide) -> Self {
        SensorSpec {
            kind: SensorKind::WallShear,
            wall_axis: Some(wall_axis),
            wall_side: Some(wall_side),
            ..SensorSpec::point(location, component)
        }
    }

    pub fn box_average(center: Vec<f64>, half_width: Vec<f64>, component: usize) -> Self {
        SensorSpec {
            kind: SensorKind::BoxAverage,
            half_width: Some(half_width),
            ..SensorSpec::point(center, component)
        }
    }
}

/// Sparse linear functional: terms `(flat point index, component, coeff)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    terms: Vec<(usize, usize, f64)>,
}

impl Stencil {
    pub fn terms(&self) -> &[(usize, usize, f64)] {
        &self.terms
    }

    pub fn apply(&self, field: &VectorField) -> f64 {
        self.terms
            .iter()
            .map(|&(p, c, w)| w * field.component(c)[p])
            .sum()
    }
}

fn sensor_err(i: Option<usize>, msg: String) -> Error {
    match i {
        Some(i) => Error::Sensor(format!("sensor {}: {msg}", i + 1)),
        None => Error::Sensor(msg),
    }
}

fn locate(x: &[f64], v: f64) -> Vec<(usize, f64)> {
    let n = x.len();
    if let Some(j) = x.iter().position(|&c| c == v) {
        return vec![(j, 1.0)];
    }
    let k = x.partition_point(|&c| c < v).clamp(1, n - 1);
    let th = (v - x[k - 1]) / (x[k] - x[k - 1]);
    vec![(k - 1, 1.0 - th), (k, th)]
}

fn nearest(x: &[f64], v: f64) -> usize {
    (0..x.len())
        .min_by(|&i, &j| (x[i] - v).abs().total_cmp(&(x[j] - v).abs()))
        .expect("non-empty axis")
}

/// Compiles a sensor into a stencil on `grid`.
pub fn compile(spec: &SensorSpec, grid: &Grid) -> Result<Stencil> {
    compile_indexed(spec, grid, None)
}

fn compile_indexed(spec: &SensorSpec, grid: &Grid, id: Option<usize>) -> Result<Stencil> {
    let nd = grid.n_axes();
    if spec.location.len() != nd {
        return Err(sensor_err(
            id,
            format!("location has {} coordinates on a {nd}-D grid", spec.location.len()),
        ));
    }
    if spec.component >= nd {
        return Err(sensor_err(
            id,
            format!("component {} out of range for {nd} components", spec.component),
        ));
    }
    if !spec.weight.is_finite() {
        return Err(sensor_err(id, "weight must be finite".into()));
    }
    if !grid.contains(&spec.location) {
        return Err(sensor_err(
            id,
            format!("location {:?} outside the grid bounding box", spec.location),
        ));
    }
    let mut terms = Vec::new();
    match spec.kind {
        SensorKind::PointVelocity => {
            let per_axis: Vec<Vec<(usize, f64)>> =
                (0..nd).map(|d| locate(grid.coords(d), spec.location[d])).collect();
            let mut idx = vec![0usize; nd];
            let mut counters = vec![0usize; nd];
            loop {
                let mut w = spec.weight;
                for d in 0..nd {
                    let (i, wd) = per_axis[d][counters[d]];
                    idx[d] = i;
                    w *= wd;
                }
                if w != 0.0 {
                    terms.push((grid.flat_index(&idx), spec.component, w));
                }
                let mut d = 0;
                while d < nd {
                    counters[d] += 1;
                    if counters[d] < per_axis[d].len() {
                        break;
                    }
                    counters[d] = 0;
                    d += 1;
                }
                if d == nd {
                    break;
                }
            }
        }
        SensorKind::WallShear => {
            let (axis, side) = pick_wall(spec, grid, id)?;
            if spec.component == axis {
                return Err(sensor_err(
                    id,
                    format!("component {} is normal to the wall, not tangential", spec.component),
                ));
            }
            let x = grid.coords(axis);
            let n = x.len();
            if n < 3 {
                return Err(sensor_err(id, format!("axis {axis} too short for a shear stencil")));
            }
            let mut idx: Vec<usize> = (0..nd).map(|d| nearest(grid.coords(d), spec.location[d])).collect();
            let (i0, sign) = match side {
                WallSide::Lower => (0, 1.0),
                WallSide::Upper => (n - 1, -1.0),
            };
            idx[axis] = i0;
            let base = grid.flat_index(&idx);
            let stride = grid.stride(axis);
            let (w, js) = stencil_weights(x, i0);
            for q in 0..3 {
                let p = base - i0 * stride + js[q] * stride;
                terms.push((p, spec.component, sign * spec.weight * w[q]));
            }
        }
        SensorKind::BoxAverage => {
            let hw = spec
                .half_width
                .as_ref()
                .ok_or_else(|| sensor_err(id, "box-average needs half_width".into()))?;
            if hw.len() != nd || hw.iter().any(|h| !(*h >= 0.0)) {
                return Err(sensor_err(id, format!("half_width must have {nd} non-negative entries")));
            }
            let weights = grid.weights();
            let mut total = 0.0;
            let mut inside = Vec::new();
            for p in 0..grid.n_points() {
                let x = grid.point(p);
                let ok = (0..nd).all(|d| {
                    let tol = 1e-12 * (1.0 + x[d].abs());
                    (x[d] - spec.location[d]).abs() <= hw[d] + tol
                });
                if ok {
                    total += weights[p];
                    inside.push(p);
                }
            }
            if inside.is_empty() {
                return Err(sensor_err(id, "box contains no grid points".into()));
            }
            for p in inside {
                terms.push((p, spec.component, spec.weight * weights[p] / total));
            }
        }
    }
    Ok(Stencil { terms })
}

fn pick_wall(spec: &SensorSpec, grid: &Grid, id: Option<usize>) -> Result<(usize, WallSide)> {
    let nd = grid.n_axes();
    let candidates: Vec<(usize, WallSide)> = match (spec.wall_axis, spec.wall_side) {
        (Some(a), _) if a >= nd => {
            return Err(sensor_err(id, format!("wall_axis {a} out of range")));
        }
        (Some(a), Some(s)) => vec![(a, s)],
        (Some(a), None) => vec![(a, WallSide::Lower), (a, WallSide::Upper)],
        (None, _) => (0..nd)
            .flat_map(|a| [(a, WallSide::Lower), (a, WallSide::Upper)])
            .collect(),
    };
    let dist = |&(a, s): &(usize, WallSide)| {
        let (lo, hi) = grid.bounds(a);
        match s {
            WallSide::Lower => spec.location[a] - lo,
            WallSide::Upper => hi - spec.location[a],
        }
    };
    let best = *candidates
        .iter()
        .min_by(|x, y| dist(x).total_cmp(&dist(y)))
        .expect("non-empty");
    let x = grid.coords(best.0);
    let cell = match best.1 {
        WallSide::Lower => x[1] - x[0],
        WallSide::Upper => x[x.len() - 1] - x[x.len() - 2],
    };
    if dist(&best) > cell * (1.0 + 1e-12) {
        return Err(sensor_err(
            id,
            format!(
                "shear sensor at {:?} is not on a wall (nearest wall axis {} is {} away, first cell {})",
                spec.location,
                best.0,
                dist(&best),
                cell
            ),
        ));
    }
    Ok(best)
}

/// Measurement of `field` by one sensor.
pub fn apply(spec: &SensorSpec, field: &VectorField) -> Result<f64> {
    Ok(compile(spec, field.grid())?.apply(field))
}

/// Sensors with their responses to each POD mode and to the reference.
#[derive(Debug, Clone)]
pub struct SensorSuite {
    specs: Vec<SensorSpec>,
    stencils: Vec<Stencil>,
    mode_response: DMatrix<f64>,
    ref_offset: DVector<f64>,
}

pub fn build_suite(specs: &[SensorSpec], basis: &PodBasis) -> Result<SensorSuite> {
    if specs.is_empty() {
        return Err(Error::Sensor("suite needs at least one sensor".into()));
    }
    let grid = basis.grid();
    let stencils: Vec<Stencil> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| compile_indexed(s, grid, Some(i)))
        .collect::<Result<_>>()?;
    let nr = basis.n_retained();
    let mode_response = DMatrix::from_fn(specs.len(), nr, |k, j| stencils[k].apply(basis.mode(j)));
    let ref_offset = DVector::from_iterator(specs.len(), stencils.iter().map(|s| s.apply(basis.reference())));
    Ok(SensorSuite {
        specs: specs.to_vec(),
        stencils,
        mode_response,
        ref_offset,
    })
}

impl SensorSuite {
    pub fn specs(&self) -> &[SensorSpec] {
        &self.specs
    }

    pub fn stencils(&self) -> &[Stencil] {
        &self.stencils
    }

    pub fn n_sensors(&self) -> usize {
        self.specs.len()
    }

    /// `f_k(Φ^j)`, `N_s × N_r`.
    pub fn mode_response(&self) -> &DMatrix<f64> {
        &self.mode_response
    }

    /// `f_k(ū)`.
    pub fn ref_offset(&self) -> &DVector<f64> {
        &self.ref_offset
    }

    /// All sensor readings of one field.
    pub fn measure(&self, field: &VectorField) -> DVector<f64> {
        DVector::from_iterator(self.stencils.len(), self.stencils.iter().map(|s| s.apply(field)))
    }
}

/// Anything that can produce the velocity field at a time.
pub trait FieldSource: Sync {
    fn coverage(&self) -> (f64, f64);
    fn field_at(&self, t: f64) -> Result<VectorField>;
}

impl FieldSource for SnapshotSet {
    fn coverage(&self) -> (f64, f64) {
        (self.times()[0], self.times()[self.len() - 1])
    }

    fn field_at(&self, t: f64) -> Result<VectorField> {
        SnapshotSet::field_at(self, t)
    }
}

/// Readings of every sensor at every requested time.
pub fn sample_measurements(suite: &SensorSuite, source: &dyn FieldSource, times: &[f64]) -> Result<MeasurementRecord> {
    let (lo, hi) = source.coverage();
    if let Some(&t) = times.iter().find(|&&t| !(t >= lo && t <= hi)) {
        return Err(Error::Extrapolation {
            time: t,
            start: lo,
            end: hi,
        });
    }
    let rows = par::try_map_range(times.len(), |m| Ok::<_, Error>(suite.measure(&source.field_at(times[m])?)))?;
    let ns = suite.n_sensors();
    let mut values = DMatrix::zeros(times.len(), ns);
    for (m, r) in rows.iter().enumerate() {
        values.set_row(m, &r.transpose());
    }
    MeasurementRecord::new(times.to_vec(), values)
}

/// Additive Gaussian measurement noise. Off unless explicitly requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub std_dev: f64,
    pub seed: u64,
}

pub fn add_noise(record: &MeasurementRecord, noise: &NoiseModel) -> Result<MeasurementRecord> {
    let dist = Normal::new(0.0, noise.std_dev)
        .map_err(|e| Error::invalid(format!("noise std_dev {}: {e}", noise.std_dev)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut v = record.values().clone();
    for m in 0..v.nrows() {
        for k in 0..v.ncols() {
            v[(m, k)] += dist.sample(&mut rng);
        }
    }
    MeasurementRecord::new(record.times().to_vec(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::new(vec![vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 0.1, 0.3, 0.6, 1.0]]).unwrap())
    }

    #[test]
    fn point_at_node_and_between() {
        let g = grid();
        let f = VectorField::from_fn(g.clone(), |x| vec![x[0] + 2.0 * x[1], x[0] * x[1]]);
        assert_eq!(apply(&SensorSpec::point(vec![1.0, 0.3], 0), &f).unwrap(), 1.6);
        // bilinear reproduces bilinear functions
        let v = apply(&SensorSpec::point(vec![1.5, 0.45], 1), &f).unwrap();
        assert!((v - 1.5 * 0.45).abs() < 1e-14);
    }

    #[test]
    fn shear_on_linear_profile() {
        let g = grid();
        let f = VectorField::from_fn(g.clone(), |x| vec![3.0 * x[1], 0.0]);
        let lo = SensorSpec::wall_shear(vec![0.7, 0.0], 0, 1, WallSide::Lower);
        assert!((apply(&lo, &f).unwrap() - 3.0).abs() < 1e-13);
        let hi = SensorSpec::wall_shear(vec![0.7, 1.0], 0, 1, WallSide::Upper);
        assert!((apply(&hi, &f).unwrap() + 3.0).abs() < 1e-13);
        let mut off = lo.clone();
        off.location = vec![1.0, 0.5];
        off.wall_axis = None;
        off.wall_side = None;
        assert!(apply(&off, &f).is_err());
        let normal = SensorSpec::wall_shear(vec![0.7, 0.0], 1, 1, WallSide::Lower);
        assert!(apply(&normal, &f).is_err());
    }

    #[test]
    fn box_average_of_constant() {
        let g = grid();
        let f = VectorField::from_fn(g, |_| vec![4.0, 0.0]);
        let s = SensorSpec::box_average(vec![1.0, 0.5], vec![0.6, 0.3], 0);
        assert!((apply(&s, &f).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn outside_grid_rejected() {
        let g = grid();
        let f = VectorField::zeros(g);
        assert!(apply(&SensorSpec::point(vec![2.5, 0.0], 0), &f).is_err());
        assert!(apply(&SensorSpec::point(vec![0.5, 0.0], 2), &f).is_err());
    }
}
