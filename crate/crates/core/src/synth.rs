//! Model-consistent synthetic flows with known modal coefficients.
//!
//! Mode shapes are smooth divergence-free fields whose streamfunction (or
//! vector potential) vanishes on the box boundary, orthonormalised under the
//! grid inner product. The quadratic tensor of the true model is assembled
//! from these shapes exactly as the pipeline assembles it from POD modes, so
//! a POD of the generated snapshots spans the same space and yields an
//! equivalent model. Constant and linear terms are designed through the
//! Jacobian at the origin and the design is re-drawn until the long-time
//! behaviour is the requested kind of bounded attractor.
//!
//! Optional unresolved modes carry small, fast, prescribed oscillations that
//! are present in the fields but absent from the model.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner_product_unchecked, Grid, VectorField};
use crate::interp::{Interpolation, DEFAULT_RATIONAL_DEGREE};
use crate::io::FileFormat;
use crate::pod::PodBasis;
use crate::rom::{assemble_from_modes, integrate, QuadTensor, RomCoefficients};
use crate::sensors::FieldSource;
use crate::snapshot::SnapshotSet;
use crate::trajectory::CoefficientTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeFamily {
    Trigonometric,
    PolynomialBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    LimitCycle,
    ChaoticQuadratic,
}

/// Scalar potential `ψ = g(ξ) h(η) l(ζ)` on the unit box and its gradient.
trait Potential {
    fn eval(&self, xi: &[f64]) -> (f64, [f64; 3]);
}

struct TrigPotential {
    k: [f64; 3],
}

impl Potential for TrigPotential {
    fn eval(&self, x: &[f64]) -> (f64, [f64; 3]) {
        let nd = x.len();
        let mut s = [1.0; 3];
        let mut c = [0.0; 3];
        for d in 0..nd {
            s[d] = (self.k[d] * PI * x[d]).sin();
            c[d] = self.k[d] * PI * (self.k[d] * PI * x[d]).cos();
        }
        let v = s[0] * s[1] * s[2];
        let mut g = [0.0; 3];
        for d in 0..nd {
            let mut p = c[d];
            for e in 0..nd {
                if e != d {
                    p *= s[e];
                }
            }
            g[d] = p;
        }
        (v, g)
    }
}

struct BumpPotential {
    pow: [i32; 3],
}

impl Potential for BumpPotential {
    fn eval(&self, x: &[f64]) -> (f64, [f64; 3]) {
        // per-axis factor ξ^(p+2) (1−ξ)^2
        let nd = x.len();
        let mut f = [1.0; 3];
        let mut df = [0.0; 3];
        for d in 0..nd {
            let p = self.pow[d] as f64;
            let t = x[d];
            let a = t.powi(self.pow[d] + 2);
            let b = (1.0 - t) * (1.0 - t);
            f[d] = a * b;
            df[d] = (p + 2.0) * t.powi(self.pow[d] + 1) * b - 2.0 * a * (1.0 - t);
        }
        let v = f[0] * f[1] * f[2];
        let mut g = [0.0; 3];
        for d in 0..nd {
            let mut p = df[d];
            for e in 0..nd {
                if e != d {
                    p *= f[e];
                }
            }
            g[d] = p;
        }
        (v, g)
    }
}

/// Velocity from a potential on the physical box: in 2-D `u = ∂ψ/∂y`,
/// `v = −∂ψ/∂x`; in 3-D `u = ∇ × (ψ e_axis)`.
fn velocity(grid: &Arc<Grid>, pot: &dyn Potential, axis: usize) -> VectorField {
    let nd = grid.n_axes();
    let bounds: Vec<(f64, f64)> = (0..nd).map(|d| grid.bounds(d)).collect();
    VectorField::from_fn(grid.clone(), |x| {
        let xi: Vec<f64> = (0..nd).map(|d| (x[d] - bounds[d].0) / (bounds[d].1 - bounds[d].0)).collect();
        let (_, g) = pot.eval(&xi);
        let grad: Vec<f64> = (0..nd).map(|d| g[d] / (bounds[d].1 - bounds[d].0)).collect();
        if nd == 2 {
            vec![grad[1], -grad[0]]
        } else {
            // curl of ψ e_a: (∂_y ψ_z − ∂_z ψ_y, ∂_z ψ_x − ∂_x ψ_z, ∂_x ψ_y − ∂_y ψ_x)
            let mut u = vec![0.0; 3];
            let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
            u[b] = grad[c];
            u[c] = -grad[b];
            u
        }
    })
}

fn wavenumbers(nd: usize, count: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let kmax = 12;
    for total in nd..=(nd * kmax) {
        let mut level = Vec::new();
        for p in 1..=kmax {
            for q in 1..=kmax {
                let rs: Vec<usize> = if nd == 3 { (1..=kmax).collect() } else { vec![1] };
                for r in rs {
                    if p + q + if nd == 3 { r } else { 0 } == total {
                        level.push([p, q, r]);
                    }
                }
            }
        }
        out.extend(level);
        if out.len() >= count {
            break;
        }
    }
    out.truncate(count);
    out
}

/// Modified Gram–Schmidt with one re-orthogonalisation pass.
pub fn orthonormalize(mut fields: Vec<VectorField>) -> Result<Vec<VectorField>> {
    for k in 0..fields.len() {
        let n0 = inner_product_unchecked(&fields[k], &fields[k]).sqrt();
        for _ in 0..2 {
            for j in 0..k {
                let p = inner_product_unchecked(&fields[k], &fields[j]);
                let (head, tail) = fields.split_at_mut(k);
                tail[0].axpy(-p, &head[j])?;
            }
        }
        let n = inner_product_unchecked(&fields[k], &fields[k]).sqrt();
        if !(n > 1e-8 * n0) || !n.is_finite() {
            return Err(Error::Orthonormalization { mode: k + 1 });
        }
        fields[k].scale(1.0 / n);
    }
    Ok(fields)
}

fn shapes(grid: &Arc<Grid>, n_modes: usize, family: ModeFamily, rng: &mut ChaCha8Rng) -> Vec<VectorField> {
    let nd = grid.n_axes();
    let ks = wavenumbers(nd, n_modes);
    let raw: Vec<VectorField> = ks
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let axis = i % 3;
            match family {
                ModeFamily::Trigonometric => velocity(
                    grid,
                    &TrigPotential {
                        k: [k[0] as f64, k[1] as f64, k[2] as f64],
                    },
                    axis,
                ),
                ModeFamily::PolynomialBump => velocity(
                    grid,
                    &BumpPotential {
                        pow: [k[0] as i32 - 1, k[1] as i32 - 1, k[2] as i32 - 1],
                    },
                    axis,
                ),
            }
        })
        .collect();
    // Seeded mixing with earlier shapes keeps modes smooth but not aligned
    // with single wavenumbers.
    let mut mixed = Vec::with_capacity(raw.len());
    for k in 0..raw.len() {
        let mut f = raw[k].clone();
        for j in k.saturating_sub(2)..k {
            let c: f64 = rng.random_range(-0.5..0.5);
            f.axpy(c, &raw[j]).expect("same grid");
        }
        if rng.random_bool(0.5) {
            f.scale(-1.0);
        }
        mixed.push(f);
    }
    mixed
}

/// `n_modes` orthonormal smooth vector fields; deterministic in `seed`.
/// Eigenvalues are placeholders (ones) until a trajectory is attached.
pub fn make_modes(grid: &Arc<Grid>, n_modes: usize, family: ModeFamily, seed: u64) -> Result<PodBasis> {
    if n_modes == 0 {
        return Err(Error::invalid("make_modes needs at least one mode"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = orthonormalize(shapes(grid, n_modes, family, &mut rng))?;
    let reference = VectorField::zeros(grid.clone());
    PodBasis::from_parts(modes, vec![1.0; n_modes], DMatrix::zeros(0, n_modes), reference)
}

/// Scenario parameters beyond the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub n_modes: usize,
    #[serde(default)]
    pub n_unresolved: usize,
    pub dynamics: Dynamics,
    pub family: ModeFamily,
    /// Sampled interval after spin-up.
    pub span: (f64, f64),
    pub dt: f64,
    /// Integration time before `span.0` used to settle on the attractor.
    pub spin_up: f64,
    /// Fundamental angular frequency of the designed dynamics.
    pub omega: f64,
    /// Unresolved amplitude relative to the smallest resolved standard
    /// deviation.
    #[serde(default = "default_unresolved_amplitude")]
    pub unresolved_amplitude: f64,
    /// Range of linear growth rates of the unstable pairs, relative to
    /// `omega`.
    #[serde(default)]
    pub growth: Option<(f64, f64)>,
    /// Range of damping rates of the stable directions, relative to `omega`.
    #[serde(default)]
    pub damping: Option<(f64, f64)>,
    pub seed: u64,
}

fn default_unresolved_amplitude() -> f64 {
    0.2
}

/// Default fundamental period. The observer's default residual weights are
/// tuned to rates of this order.
pub const DEFAULT_PERIOD: f64 = 0.02;

impl ScenarioParams {
    pub fn new(n_modes: usize, dynamics: Dynamics, span: (f64, f64), dt: f64, seed: u64) -> Self {
        ScenarioParams {
            n_modes,
            n_unresolved: 0,
            dynamics,
            family: ModeFamily::Trigonometric,
            span,
            dt,
            spin_up: 60.0 * DEFAULT_PERIOD,
            omega: 2.0 * PI / DEFAULT_PERIOD,
            unresolved_amplitude: default_unresolved_amplitude(),
            growth: None,
            damping: None,
            seed,
        }
    }

    /// Growth and damping ranges, with defaults per regime.
    pub fn rates(&self) -> ((f64, f64), (f64, f64)) {
        let (g, d) = match self.dynamics {
            Dynamics::LimitCycle => ((0.1, 0.2), (2.0, 4.0)),
            Dynamics::ChaoticQuadratic => ((0.05, 0.15), (0.3, 1.0)),
        };
        (self.growth.unwrap_or(g), self.damping.unwrap_or(d))
    }
}

/// A prescribed oscillation `amp · sin(omega t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub amp: f64,
    pub omega: f64,
    pub phase: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub grid: Arc<Grid>,
    pub true_basis: PodBasis,
    pub true_rom: RomCoefficients,
    pub true_trajectory: CoefficientTrajectory,
    pub unresolved_modes: Vec<VectorField>,
    pub unresolved: Vec<Oscillation>,
    pub params: ScenarioParams,
    /// Design attempts before an acceptable attractor was found.
    pub attempts: usize,
}

fn reference_field(grid: &Arc<Grid>) -> VectorField {
    let nd = grid.n_axes();
    let bounds: Vec<(f64, f64)> = (0..nd).map(|d| grid.bounds(d)).collect();
    VectorField::from_fn(grid.clone(), |x| {
        let xi: Vec<f64> = (0..nd).map(|d| (x[d] - bounds[d].0) / (bounds[d].1 - bounds[d].0)).collect();
        let mut u = vec![0.0; nd];
        u[0] = 1.0 + 0.3 * (PI * xi[1]).sin();
        u[1] = 0.1 * (PI * xi[0]).sin() * (2.0 * PI * xi[1]).sin();
        if nd == 3 {
            u[2] = 0.05 * (PI * xi[2]).sin();
        }
        u
    })
}

/// Linear part `J` (Jacobian at the origin, `ȧ = J a + …`) made of rotating
/// 2×2 blocks on randomly chosen mode pairs.
fn design_jacobian(n: usize, p: &ScenarioParams, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (dynamics, omega) = (p.dynamics, p.omega);
    let (growth, damping) = p.rates();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut jac = DMatrix::zeros(n, n);
    let n_unstable = match dynamics {
        Dynamics::LimitCycle => 1,
        Dynamics::ChaoticQuadratic => (n / 6).clamp(2, 3),
    };
    let mut pair = 0;
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let (a, b) = (order[i], order[i + 1]);
            let (sigma, w) = if pair < n_unstable {
                let growth = rng.random_range(growth.0..growth.1);
                let ratio = [1.0, 1.37, 1.71][pair];
                (growth * omega, omega * ratio * rng.random_range(0.95..1.05))
            } else {
                let harmonic = match dynamics {
                    Dynamics::LimitCycle => (pair + 1) as f64,
                    Dynamics::ChaoticQuadratic => rng.random_range(0.5..3.0),
                };
                (-rng.random_range(damping.0..damping.1) * omega, harmonic * omega * rng.random_range(0.95..1.05))
            };
            jac[(a, a)] = sigma;
            jac[(b, b)] = sigma;
            jac[(a, b)] = -w;
            jac[(b, a)] = w;
            pair += 1;
            i += 2;
        } else {
            let a = order[i];
            jac[(a, a)] = -rng.random_range(damping.0..damping.1) * omega;
            i += 1;
        }
    }
    jac
}

/// Upward zero crossings of `x − mean` with linearly interpolated times.
fn upward_crossings(t: &[f64], x: &[f64]) -> Vec<(usize, f64)> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    (0..x.len() - 1)
        .filter(|&i| x[i] - mean < 0.0 && x[i + 1] - mean >= 0.0)
        .map(|i| {
            let th = (mean - x[i]) / (x[i + 1] - x[i]);
            (i, t[i] + th * (t[i + 1] - t[i]))
        })
        .collect()
}

/// Return-map distance after one period relative to the orbit amplitude,
/// using the leading mode's upward crossings over the last part of the
/// trajectory.
pub fn periodicity_defect(tr: &CoefficientTrajectory) -> Option<(f64, f64)> {
    let x0 = tr.mode(0);
    let cr = upward_crossings(tr.times(), &x0);
    if cr.len() < 4 {
        return None;
    }
    let state_at = |i: usize, t: f64| -> DVector<f64> {
        let (t0, t1) = (tr.times()[i], tr.times()[i + 1]);
        let th = (t - t0) / (t1 - t0);
        tr.sample(i) * (1.0 - th) + tr.sample(i + 1) * th
    };
    let (ia, ta) = cr[cr.len() - 2];
    let (ib, tb) = cr[cr.len() - 1];
    let d = (state_at(ib, tb) - state_at(ia, ta)).amax();
    let amp = tr.values().amax();
    Some((d / amp, tb - ta))
}

/// Builds a scenario with the given number of resolved modes and dynamics.
pub fn make_scenario(
    grid: &Arc<Grid>,
    n_modes: usize,
    dynamics: Dynamics,
    span: (f64, f64),
    dt: f64,
    seed: u64,
) -> Result<SyntheticScenario> {
    make_scenario_with(grid, &ScenarioParams::new(n_modes, dynamics, span, dt, seed))
}

const MAX_ATTEMPTS: usize = 200;


pub fn make_scenario_with(grid: &Arc<Grid>, p: &ScenarioParams) -> Result<SyntheticScenario> {
    if p.n_modes < 2 {
        return Err(Error::invalid("scenario needs at least 2 resolved modes"));
    }
    if !(p.dt > 0.0) || !(p.span.1 > p.span.0) || !(p.spin_up >= 0.0) || !(p.omega > 0.0) {
        return Err(Error::invalid(format!("invalid scenario timing: {p:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let all = orthonormalize(shapes(grid, p.n_modes + p.n_unresolved, p.family, &mut rng))?;
    let (modes, extra) = all.split_at(p.n_modes);
    let b = assemble_from_modes(modes)?;
    let bmax = b.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let scale = p.omega / bmax;
    let n = p.n_modes;
    for attempt in 1..=MAX_ATTEMPTS {
        let jac = design_jacobian(n, p, &mut rng);
        let a0: Vec<f64> = (0..n).map(|_| 0.01 * scale * rng.random_range(-1.0..1.0)).collect();
        let rom = RomCoefficients::new(DVector::zeros(n), jac.transpose(), b.clone())?;
        let t_start = p.span.0 - p.spin_up;
        let Ok(spin) = integrate(&rom, &a0, (t_start, p.span.0), p.dt) else {
            continue;
        };
        let a_start: Vec<f64> = spin.sample(spin.n_samples() - 1).iter().copied().collect();
        let Ok(tr) = integrate(&rom, &a_start, p.span, p.dt) else {
            continue;
        };
        let vmax = tr.values().amax();
        if !(vmax < 1e3 * scale) {
            continue;
        }
        let start_scale = a_start.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Settled motion must be neither a fixed point nor decaying.
        let var: Vec<f64> = (0..n)
            .map(|j| {
                let c = tr.mode(j);
                let mean = c.iter().sum::<f64>() / c.len() as f64;
                c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c.len() as f64
            })
            .collect();
        let vmin = var.iter().cloned().fold(f64::INFINITY, f64::min);
        let vtot: f64 = var.iter().sum();
        if !(vtot > 1e-6 * scale * scale) || !(vmin > 1e-10 * vtot) {
            continue;
        }
        let defect = periodicity_defect(&tr);
        let ok = match p.dynamics {
            Dynamics::LimitCycle => matches!(defect, Some((d, _)) if d < 1e-3),
            Dynamics::ChaoticQuadratic => {
                vmax < 10.0 * start_scale && !matches!(defect, Some((d, _)) if d < 1e-2)
            }
        };
        if !ok {
            continue;
        }
        // Order resolved modes by energy so that the truth looks like a POD.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| var[j].total_cmp(&var[i]).then(i.cmp(&j)));
        let modes_sorted: Vec<VectorField> = order.iter().map(|&i| modes[i].clone()).collect();
        let rom_sorted = RomCoefficients::new(
            DVector::from_fn(n, |r, _| rom.a_const[order[r]]),
            DMatrix::from_fn(n, n, |k, r| rom.c_linear[(order[k], order[r])]),
            QuadTensor::from_fn(n, |k, s, r| b.get(order[k], order[s], order[r])),
        )?;
        let values = DMatrix::from_fn(tr.n_samples(), n, |i, j| tr.values()[(i, order[j])]);
        let trajectory = CoefficientTrajectory::new(tr.times().to_vec(), values)?;
        let eig: Vec<f64> = order.iter().map(|&i| var[i] * tr.n_samples() as f64).collect();
        let true_basis = PodBasis::from_parts(modes_sorted, eig, DMatrix::zeros(0, n), reference_field(grid))?;
        let sd_min = vmin.sqrt();
        let unresolved: Vec<Oscillation> = (0..p.n_unresolved)
            .map(|j| Oscillation {
                amp: p.unresolved_amplitude * sd_min * std::f64::consts::SQRT_2 * rng.random_range(0.6..1.0),
                omega: p.omega * (6.0 + 1.7 * j as f64) * rng.random_range(0.97..1.03),
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        return Ok(SyntheticScenario {
            grid: grid.clone(),
            true_basis,
            true_rom: rom_sorted,
            true_trajectory: trajectory,
            unresolved_modes: extra.to_vec(),
            unresolved,
            params: p.clone(),
            attempts: attempt,
        });
    }
    Err(Error::invalid(format!(
        "no bounded {:?} attractor found after {MAX_ATTEMPTS} designs; parameters: {p:?}",
        p.dynamics
    )))
}

impl SyntheticScenario {
    /// True resolved coefficients at the given times.
    pub fn coefficients_at(&self, times: &[f64]) -> Result<CoefficientTrajectory> {
        self.true_trajectory
            .resample(times, Interpolation::Rational(DEFAULT_RATIONAL_DEGREE))
    }

    pub fn unresolved_at(&self, t: f64) -> Vec<f64> {
        self.unresolved
            .iter()
            .map(|o| o.amp * (o.omega * t + o.phase).sin())
            .collect()
    }

    fn field_from(&self, a: &[f64], t: f64) -> Result<VectorField> {
        let mut f = self.true_basis.reconstruct(a)?;
        for (m, c) in self.unresolved_modes.iter().zip(self.unresolved_at(t)) {
            f.axpy(c, m)?;
        }
        Ok(f)
    }

    /// Snapshot set of the full fields at `times` with the true reference.
    pub fn snapshots(&self, times: &[f64]) -> Result<SnapshotSet> {
        let coeffs = self.coefficients_at(times)?;
        let fields = crate::par::try_map_range(times.len(), |i| {
            let a: Vec<f64> = coeffs.sample(i).iter().copied().collect();
            self.field_from(&a, times[i])
        })?;
        SnapshotSet::new(times.to_vec(), fields, Some(self.true_basis.reference().clone()))
    }

    /// Writes `snapshots`, the true coefficients at the snapshot times and the
    /// true ROM into `dir`.
    pub fn export(&self, times: &[f64], dir: &Path, format: FileFormat, comment: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ext = match format {
            FileFormat::TextTable => "txt",
            FileFormat::RawBinary => "bin",
        };
        self.snapshots(times)?
            .save(&dir.join(format!("snapshots.{ext}")), format, comment)?;
        self.coefficients_at(times)?
            .save(&dir.join("truth_coefficients.txt"), comment)?;
        self.true_rom
            .save(&dir.join(format!("truth_rom.{ext}")), format, comment)
    }
}

/// Convenience wrapper matching the exporter's file layout.
pub fn export_scenario(s: &SyntheticScenario, times: &[f64], dir: &Path, format: FileFormat) -> Result<()> {
    s.export(times, dir, format, "")
}

impl FieldSource for SyntheticScenario {
    fn coverage(&self) -> (f64, f64) {
        self.true_trajectory.span()
    }

    fn field_at(&self, t: f64) -> Result<VectorField> {
        let a = self.coefficients_at(&[t])?;
        let a: Vec<f64> = a.sample(0).iter().copied().collect();
        self.field_from(&a, t)
    }
}
