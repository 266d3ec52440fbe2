//! Quadratic Galerkin reduced-order model
//!
//! ```text
//! ȧ_r = A_r + C_kr a_k − B_ksr a_k a_s
//! ```
//!
//! (summation over repeated indices). The residual is
//! `R_r = ȧ_r − A_r − C_kr a_k + B_ksr a_k a_s`. Mind the minus sign in front
//! of the quadratic term of the ODE.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{inner_product_unchecked, stencil_weights, VectorField};
use crate::io::FileFormat;
use crate::par;
use crate::pod::PodBasis;
use crate::record::Record;
use crate::trajectory::CoefficientTrajectory;

/// Rank-3 tensor `B_ksr`, stored with `r` fastest: index `(k·n + s)·n + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTensor {
    n: usize,
    data: Vec<f64>,
}

impl QuadTensor {
    pub fn zeros(n: usize) -> Self {
        QuadTensor {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n * n {
            return Err(Error::invalid(format!(
                "quadratic tensor for {n} modes needs {} entries, got {}",
                n * n * n,
                data.len()
            )));
        }
        Ok(QuadTensor { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = QuadTensor::zeros(n);
        for k in 0..n {
            for s in 0..n {
                for r in 0..n {
                    t.data[(k * n + s) * n + r] = f(k, s, r);
                }
            }
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, k: usize, s: usize, r: usize) -> f64 {
        self.data[(k * self.n + s) * self.n + r]
    }

    #[inline]
    pub fn set(&mut self, k: usize, s: usize, r: usize, v: f64) {
        self.data[(k * self.n + s) * self.n + r] = v;
    }

    /// `q_r = Σ_ks B_ksr a_k a_s`.
    pub fn contract(&self, a: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut q = vec![0.0; n];
        for k in 0..n {
            if a[k] == 0.0 {
                continue;
            }
            for s in 0..n {
                let w = a[k] * a[s];
                let row = &self.data[(k * n + s) * n..(k * n + s + 1) * n];
                for (qr, b) in q.iter_mut().zip(row) {
                    *qr += w * b;
                }
            }
        }
        q
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `A_r`, `C_kr` (stored as a matrix indexed `(k, r)`) and `B_ksr`.
#[derive(Debug, Clone, PartialEq)]
pub struct RomCoefficients {
    pub a_const: DVector<f64>,
    pub c_linear: DMatrix<f64>,
    pub b_quad: QuadTensor,
}

impl RomCoefficients {
    pub fn new(a_const: DVector<f64>, c_linear: DMatrix<f64>, b_quad: QuadTensor) -> Result<Self> {
        let n = a_const.len();
        if c_linear.shape() != (n, n) || b_quad.n() != n {
            return Err(Error::invalid(format!(
                "inconsistent ROM sizes: A {n}, C {:?}, B {}",
                c_linear.shape(),
                b_quad.n()
            )));
        }
        if n == 0 {
            return Err(Error::invalid("ROM needs at least one mode"));
        }
        if a_const.iter().chain(c_linear.iter()).any(|v| !v.is_finite()) || !b_quad.is_finite() {
            return Err(Error::invalid("ROM coefficients must be finite"));
        }
        Ok(RomCoefficients {
            a_const,
            c_linear,
            b_quad,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.a_const.len()
    }

    /// Right-hand side `A_r + C_kr a_k − B_ksr a_k a_s`.
    pub fn rhs(&self, a: &[f64]) -> Vec<f64> {
        let n = self.n_modes();
        let q = self.b_quad.contract(a);
        (0..n)
            .map(|r| {
                let mut v = self.a_const[r] - q[r];
                for k in 0..n {
                    v += self.c_linear[(k, r)] * a[k];
                }
                v
            })
            .collect()
    }

    pub fn to_record(&self) -> Record {
        let n = self.n_modes();
        let mut rec = Record::new("rom");
        rec.push_scalar("n_modes", n as f64)
            .push_vector("A", self.a_const.as_slice())
            .push_matrix("C", &self.c_linear)
            .push("B", vec![n, n, n], self.b_quad.data.clone());
        rec
    }

    pub fn from_record(rec: &Record) -> Result<Self> {
        rec.expect_kind("rom")?;
        let n = rec.scalar("n_modes")? as usize;
        let b = rec.get("B")?;
        Self::new(
            rec.vector("A")?,
            rec.matrix("C")?,
            QuadTensor::from_vec(n, b.data.clone())?,
        )
    }

    pub fn save(&self, path: &Path, format: FileFormat, comment: &str) -> Result<()> {
        self.to_record().save(path, format, comment)
    }

    pub fn load(path: &Path, format: FileFormat) -> Result<Self> {
        Self::from_record(&Record::load(path, format)?)
    }
}

/// `R_r = ȧ_r − A_r − C_kr a_k + B_ksr a_k a_s`.
pub fn residual(rom: &RomCoefficients, a: &[f64], adot: &[f64]) -> Result<Vec<f64>> {
    let n = rom.n_modes();
    if a.len() != n || adot.len() != n {
        return Err(Error::invalid(format!(
            "residual of a {n}-mode ROM needs vectors of length {n}, got {} and {}",
            a.len(),
            adot.len()
        )));
    }
    Ok(rom.rhs(a).iter().zip(adot).map(|(f, d)| d - f).collect())
}

/// `B_ksr = ip((Φ^k·∇)Φ^s, Φ^r)` with second-order finite-difference
/// gradients.
pub fn assemble_quadratic_tensor(basis: &PodBasis) -> Result<QuadTensor> {
    assemble_from_modes(basis.modes())
}

pub(crate) fn assemble_from_modes(modes: &[VectorField]) -> Result<QuadTensor> {
    let n = modes.len();
    let grads: Vec<Vec<Vec<Vec<f64>>>> = par::try_map_range(n, |s| crate::grid::gradient(&modes[s]))?;
    let grid = modes[0].grid().clone();
    let nd = grid.n_axes();
    let np = grid.n_points();
    let rows = par::map_range(n * n, |ks| {
        let (k, s) = (ks / n, ks % n);
        let mut conv = vec![vec![0.0; np]; nd];
        for (c, out) in conv.iter_mut().enumerate() {
            for d in 0..nd {
                let uk = modes[k].component(d);
                let g = &grads[s][c][d];
                for p in 0..np {
                    out[p] += uk[p] * g[p];
                }
            }
        }
        let field = VectorField::new(grid.clone(), conv).expect("shape");
        (0..n)
            .map(|r| inner_product_unchecked(&field, &modes[r]))
            .collect::<Vec<f64>>()
    });
    QuadTensor::from_vec(n, rows.into_iter().flatten().collect())
}

/// Pointwise convective term `((u·∇)v)_c(p)` evaluated directly from the
/// stencil at one point.
pub fn convective_at(u: &VectorField, v: &VectorField, p: usize) -> Vec<f64> {
    let grid = u.grid();
    let idx = grid.multi_index(p);
    (0..grid.n_axes())
        .map(|c| {
            let mut acc = 0.0;
            for d in 0..grid.n_axes() {
                let (w, js) = stencil_weights(grid.coords(d), idx[d]);
                let stride = grid.stride(d);
                let base = p - idx[d] * stride;
                let vc = v.component(c);
                let dv = w[0] * vc[base + js[0] * stride]
                    + w[1] * vc[base + js[1] * stride]
                    + w[2] * vc[base + js[2] * stride];
                acc += u.component(d)[p] * dv;
            }
            acc
        })
        .collect()
}

fn rk4_step(rom: &RomCoefficients, a: &[f64], h: f64) -> Vec<f64> {
    let k1 = rom.rhs(a);
    let y: Vec<f64> = a.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
    let k2 = rom.rhs(&y);
    let y: Vec<f64> = a.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
    let k3 = rom.rhs(&y);
    let y: Vec<f64> = a.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
    let k4 = rom.rhs(&y);
    (0..a.len())
        .map(|i| a[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Fixed-step RK4 over `[t0, t1]`, sampled at every step. The last step is
/// shortened to land on `t1`.
pub fn integrate(rom: &RomCoefficients, a0: &[f64], t_span: (f64, f64), dt: f64) -> Result<CoefficientTrajectory> {
    let (t0, t1) = t_span;
    if !(dt > 0.0) || !t0.is_finite() || !t1.is_finite() || t1 < t0 {
        return Err(Error::invalid(format!(
            "integration needs dt > 0 and a finite span, got dt={dt}, span=[{t0}, {t1}]"
        )));
    }
    if a0.len() != rom.n_modes() {
        return Err(Error::invalid("initial condition length differs from ROM size"));
    }
    let n_steps = ((t1 - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut rows = Vec::with_capacity((n_steps + 1) * a0.len());
    let mut a = a0.to_vec();
    times.push(t0);
    rows.extend_from_slice(&a);
    for i in 0..n_steps {
        let t = t0 + i as f64 * dt;
        let t_next = if i + 1 == n_steps { t1 } else { t0 + (i + 1) as f64 * dt };
        let next = rk4_step(rom, &a, t_next - t);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { last_valid_time: t });
        }
        a = next;
        times.push(t_next);
        rows.extend_from_slice(&a);
    }
    CoefficientTrajectory::new(times.clone(), DMatrix::from_row_slice(times.len(), a0.len(), &rows))
}

/// RK4 with steps no longer than `dt`, reporting the state at each requested
/// time (`times[0]` is the initial time).
pub fn integrate_at(rom: &RomCoefficients, a0: &[f64], times: &[f64], dt: f64) -> Result<CoefficientTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let mut a = a0.to_vec();
    let mut rows = Vec::with_capacity(times.len() * a0.len());
    rows.extend_from_slice(&a);
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let m = (span / dt - 1e-9).ceil().max(1.0) as usize;
        let h = span / m as f64;
        for j in 0..m {
            a = rk4_step(rom, &a, h);
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp {
                    last_valid_time: w[0] + j as f64 * h,
                });
            }
        }
        rows.extend_from_slice(&a);
    }
    CoefficientTrajectory::new(times.to_vec(), DMatrix::from_row_slice(times.len(), a0.len(), &rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(c: f64) -> RomCoefficients {
        RomCoefficients::new(
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, c),
            QuadTensor::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn residual_of_zero_state_is_minus_a() {
        let rom = RomCoefficients::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::zeros(2, 2),
            QuadTensor::from_fn(2, |k, s, r| (k + s + r) as f64),
        )
        .unwrap();
        assert_eq!(residual(&rom, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), vec![-1.0, 2.0]);
        assert!(residual(&rom, &[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn exponential_decay() {
        let tr = integrate(&scalar(-1.0), &[1.0], (0.0, 1.0), 0.01).unwrap();
        assert_eq!(tr.n_samples(), 101);
        let end = tr.values()[(100, 0)];
        assert!((end - (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(*tr.times().last().unwrap(), 1.0);
    }

    #[test]
    fn partial_last_step() {
        let tr = integrate(&scalar(0.0), &[2.0], (0.0, 0.25), 0.1).unwrap();
        assert_eq!(tr.times(), &[0.0, 0.1, 0.2, 0.25]);
    }

    #[test]
    fn blow_up_reports_time() {
        let rom = RomCoefficients::new(
            DVector::from_element(1, 0.0),
            DMatrix::zeros(1, 1),
            QuadTensor::from_vec(1, vec![-1.0]).unwrap(),
        )
        .unwrap();
        // ȧ = a², a(0) = 1 blows up at t = 1.
        match integrate(&rom, &[1.0], (0.0, 5.0), 0.01) {
            Err(Error::BlowUp { last_valid_time }) => assert!(last_valid_time > 0.9 && last_valid_time < 5.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn record_round_trip() {
        let rom = RomCoefficients::new(
            DVector::from_vec(vec![0.1, 0.2]),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            QuadTensor::from_fn(2, |k, s, r| (k * 4 + s * 2 + r) as f64 * 0.5),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rom.txt");
        rom.save(&p, FileFormat::TextTable, "x").unwrap();
        assert_eq!(RomCoefficients::load(&p, FileFormat::TextTable).unwrap(), rom);
    }
}
