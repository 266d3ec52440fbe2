//! Dynamic estimation (K-LSQ / K-LSE).
//!
//! Over a time window the coefficient histories are represented by their
//! values `X` (`N_m × N_r`, row = node) at Chebyshev-Gauss-Lobatto nodes. The
//! estimate minimises
//!
//! ```text
//! J(X) = C_R ‖R(X)‖² + ‖X − T‖²,   R = D X − 1 Aᵀ − X C + Q(X)
//! ```
//!
//! where `D` is the collocation derivative, `Q(X)_mr = B_ksr X_mk X_ms` and
//! `T` holds the static-estimator targets at the nodes. `R` is the ROM
//! residual at every node, so the window's unknowns are all coupled through
//! `D`. The minimiser is found by Newton's method with the exact Hessian and
//! a backtracking line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collocation::{build_collocation, CollocationOperator};
use crate::error::{Error, Result};
use crate::estimators::{lsq_operator, LseModel};
use crate::interp::{Interpolation, DEFAULT_RATIONAL_DEGREE};
use crate::measurement::MeasurementRecord;
use crate::par;
use crate::rom::{integrate_at, RomCoefficients};
use crate::sensors::SensorSuite;
use crate::trajectory::CoefficientTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    KLsq,
    KLse,
}

impl Variant {
    /// Default residual weight.
    pub fn default_c_r(self) -> f64 {
        match self {
            Variant::KLsq => 10.0,
            Variant::KLse => 0.1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::KLsq => "K-LSQ",
            Variant::KLse => "K-LSE",
        }
    }
}

/// Armijo sufficient-decrease constant.
pub const ARMIJO: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 50;
/// Without an explicit gradient tolerance, Newton iteration stops once the
/// predicted decrease `−∇J·p` falls below this fraction of `1 + J`.
pub const DECREMENT_TOL: f64 = 1e-10;
/// Fraction of a sliding window over which the warm guess is blended back
/// towards the static targets.
pub const WARM_RAMP: f64 = 0.2;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone)]
pub struct ObserverProblem {
    rom: RomCoefficients,
    op: CollocationOperator,
    target: DMatrix<f64>,
    c_r: f64,
    variant: Variant,
    /// `P[s][k][r] = B_ksr + B_skr`, index `(s·n + k)·n + r`.
    bsym: Vec<f64>,
}

impl ObserverProblem {
    pub fn new(
        rom: RomCoefficients,
        op: CollocationOperator,
        target: DMatrix<f64>,
        c_r: f64,
        variant: Variant,
    ) -> Result<Self> {
        if !(c_r > 0.0) || !c_r.is_finite() {
            return Err(Error::invalid(format!("c_r must be positive and finite, got {c_r}")));
        }
        if op.n_points() < 2 {
            return Err(Error::invalid("observer window needs at least 2 nodes"));
        }
        if target.nrows() != op.n_points() || target.ncols() != rom.n_modes() {
            return Err(Error::invalid(format!(
                "targets are {}x{}, expected {}x{}",
                target.nrows(),
                target.ncols(),
                op.n_points(),
                rom.n_modes()
            )));
        }
        let n = rom.n_modes();
        let b = &rom.b_quad;
        let mut bsym = vec![0.0; n * n * n];
        for s in 0..n {
            for k in 0..n {
                for r in 0..n {
                    bsym[(s * n + k) * n + r] = b.get(k, s, r) + b.get(s, k, r);
                }
            }
        }
        Ok(ObserverProblem {
            rom,
            op,
            target,
            c_r,
            variant,
            bsym,
        })
    }

    pub fn rom(&self) -> &RomCoefficients {
        &self.rom
    }

    pub fn op(&self) -> &CollocationOperator {
        &self.op
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn c_r(&self) -> f64 {
        self.c_r
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_unknowns(&self) -> usize {
        self.target.len()
    }

    /// Same problem with another residual weight.
    pub fn with_c_r(&self, c_r: f64) -> Result<Self> {
        Self::new(self.rom.clone(), self.op.clone(), self.target.clone(), c_r, self.variant)
    }

    /// ROM residual at every node.
    pub fn residual(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, n) = x.shape();
        let mut r = self.op.diff_matrix() * x - x * &self.rom.c_linear;
        for i in 0..m {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            let q = self.rom.b_quad.contract(&xi);
            for j in 0..n {
                r[(i, j)] += q[j] - self.rom.a_const[j];
            }
        }
        r
    }

    pub fn objective(&self, x: &DMatrix<f64>) -> f64 {
        let r = self.residual(x);
        self.c_r * r.norm_squared() + (x - &self.target).norm_squared()
    }

    /// `L[r·n + k] = ∂R_mr/∂X_mk` (local part) at node `m`.
    fn local_jacobian(&self, xm: &[f64]) -> Vec<f64> {
        let n = xm.len();
        let c = &self.rom.c_linear;
        let mut l = vec![0.0; n * n];
        for r in 0..n {
            for k in 0..n {
                l[r * n + k] = -c[(k, r)];
            }
        }
        for (s, &xs) in xm.iter().enumerate() {
            if xs == 0.0 {
                continue;
            }
            for k in 0..n {
                let row = &self.bsym[(s * n + k) * n..(s * n + k + 1) * n];
                for r in 0..n {
                    l[r * n + k] += xs * row[r];
                }
            }
        }
        l
    }

    fn gradient_with(&self, x: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, n) = x.shape();
        let mut g = self.op.diff_matrix().transpose() * r;
        for i in 0..m {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            let l = self.local_jacobian(&xi);
            for k in 0..n {
                let mut v = 0.0;
                for rr in 0..n {
                    v += l[rr * n + k] * r[(i, rr)];
                }
                g[(i, k)] += v;
            }
        }
        (g * self.c_r + (x - &self.target)) * 2.0
    }

    pub fn gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.residual(x);
        self.gradient_with(x, &r)
    }

    /// Exact Hessian over the unknowns ordered node-major (`m·N_r + k`).
    pub fn hessian(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.residual(x);
        self.hessian_with(x, Some(&r))
    }

    /// Gauss-Newton part of the Hessian, `2 (C_R Jᵀ J + I)`; positive definite.
    pub fn gauss_newton_hessian(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.hessian_with(x, None)
    }

    /// Second-order residual term included only when `res` is given.
    fn hessian_with(&self, x: &DMatrix<f64>, res: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let (m, n) = x.shape();
        let d = self.op.diff_matrix();
        let dtd = d.transpose() * d;
        let ls: Vec<Vec<f64>> = par::map_range(m, |i| {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            self.local_jacobian(&xi)
        });
        let cr = self.c_r;
        let big = m * n;
        // Fill block rows in parallel, then assemble.
        let rows: Vec<Vec<f64>> = par::map_range(m, |a| {
            let mut block = vec![0.0; n * big];
            let la = &ls[a];
            for b in 0..m {
                let dab = d[(a, b)];
                let dba = d[(b, a)];
                let lb = &ls[b];
                for k in 0..n {
                    let row = &mut block[k * big + b * n..k * big + (b + 1) * n];
                    row[k] += dtd[(a, b)];
                    for kp in 0..n {
                        // D_ba L_b[k,kp] + D_ab L_a[kp,k]
                        row[kp] += dba * lb[k * n + kp] + dab * la[kp * n + k];
                    }
                }
            }
            // δ_ab (L_aᵀ L_a + S_a)
            for k in 0..n {
                for kp in 0..n {
                    let mut v = 0.0;
                    for rr in 0..n {
                        v += la[rr * n + k] * la[rr * n + kp];
                    }
                    if let Some(res) = res {
                        for rr in 0..n {
                            v += res[(a, rr)] * self.bsym[(k * n + kp) * n + rr];
                        }
                    }
                    block[k * big + a * n + kp] += v;
                }
            }
            for v in block.iter_mut() {
                *v *= 2.0 * cr;
            }
            for k in 0..n {
                block[k * big + a * n + k] += 2.0;
            }
            block
        });
        let mut h = DMatrix::zeros(big, big);
        for (a, block) in rows.into_iter().enumerate() {
            for k in 0..n {
                let i = a * n + k;
                for j in 0..big {
                    h[(i, j)] = block[k * big + j];
                }
            }
        }
        h
    }

    /// Node values as a trajectory.
    pub fn trajectory(&self, x: DMatrix<f64>) -> Result<CoefficientTrajectory> {
        CoefficientTrajectory::new(self.op.nodes().to_vec(), x)
    }
}

fn flatten(x: &DMatrix<f64>) -> DVector<f64> {
    let (m, n) = x.shape();
    DVector::from_fn(m * n, |i, _| x[(i / n, i % n)])
}

fn unflatten(v: &DVector<f64>, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |i, j| v[i * n + j])
}

/// Readings resampled to the CGL nodes of the record's span and mapped to
/// static-estimator targets.
pub fn assemble_problem(
    rom: &RomCoefficients,
    suite: &SensorSuite,
    record: &MeasurementRecord,
    variant: Variant,
    static_model: Option<&LseModel>,
    c_r: f64,
    n_nodes: usize,
) -> Result<ObserverProblem> {
    if n_nodes < 2 {
        return Err(Error::invalid(format!("observer window needs at least 2 nodes, got {n_nodes}")));
    }
    if record.n_times() < 2 {
        return Err(Error::invalid("observer window needs at least 2 measurement samples"));
    }
    if record.n_sensors() != suite.n_sensors() {
        return Err(Error::invalid(format!(
            "record has {} sensors, suite {}",
            record.n_sensors(),
            suite.n_sensors()
        )));
    }
    let (t0, t1) = (record.times()[0], record.times()[record.n_times() - 1]);
    let op = build_collocation(t0, t1, n_nodes)?;
    let at_nodes = record
        .resample(op.nodes(), Interpolation::Rational(DEFAULT_RATIONAL_DEGREE))?
        .centered(suite.ref_offset())?;
    let target = match variant {
        Variant::KLsq => at_nodes.values() * lsq_operator(suite).upsilon.transpose(),
        Variant::KLse => {
            let model = static_model
                .ok_or_else(|| Error::invalid("K-LSE needs a fitted LSE model"))?;
            if model.lambda.shape() != (suite.n_sensors(), rom.n_modes()) {
                return Err(Error::invalid(format!(
                    "LSE model is {:?}, expected ({}, {})",
                    model.lambda.shape(),
                    suite.n_sensors(),
                    rom.n_modes()
                )));
            }
            at_nodes.values() * &model.lambda
        }
    };
    if target.ncols() != rom.n_modes() {
        return Err(Error::invalid("suite mode count differs from ROM"));
    }
    ObserverProblem::new(rom.clone(), op, target, c_r, variant)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    StaticTargets,
    Zeros,
    Given(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    /// Accepted Newton steps.
    pub iterations: usize,
    /// `‖∇J‖` before the first step and after each accepted step.
    pub residual_history: Vec<f64>,
    /// `J` at the same points.
    pub objective_history: Vec<f64>,
    /// Stopped on the decrement or gradient test rather than the iteration
    /// cap or a failed line search.
    pub converged: bool,
    /// Steps taken with the Gauss-Newton matrix because the exact Hessian
    /// was indefinite.
    pub shifted_steps: usize,
    pub tol: f64,
}

/// Solves `H p = −g`. When the exact Hessian is not positive definite the
/// Gauss-Newton matrix is used instead, with a diagonal shift as a last
/// resort. Returns the step and whether the exact Hessian was abandoned.
fn newton_step(problem: &ObserverProblem, x: &DMatrix<f64>, r: &DMatrix<f64>, g: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(ch) = problem.hessian_with(x, Some(r)).cholesky() {
        let p = -ch.solve(g);
        if g.dot(&p) < 0.0 {
            return (p, false);
        }
    }
    let h = problem.hessian_with(x, None);
    if let Some(ch) = h.clone().cholesky() {
        return (-ch.solve(g), true);
    }
    let dmax = h.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut mu = 1e-14 * dmax;
    loop {
        let mut hs = h.clone();
        for i in 0..hs.nrows() {
            hs[(i, i)] += mu;
        }
        if let Some(ch) = hs.cholesky() {
            log::warn!("Gauss-Newton system singular to working precision; shifted diagonal by {mu:e}");
            return (-ch.solve(g), true);
        }
        mu *= 10.0;
    }
}

/// Newton iteration with Armijo backtracking on `J`. `tol` bounds `‖∇J‖`;
/// `None` stops on the Newton decrement instead.
pub fn solve(
    problem: &ObserverProblem,
    init: Init,
    tol: Option<f64>,
    max_iter: usize,
) -> Result<(CoefficientTrajectory, NewtonReport)> {
    let (m, n) = problem.target.shape();
    let mut x = match init {
        Init::StaticTargets => problem.target.clone(),
        Init::Zeros => DMatrix::zeros(m, n),
        Init::Given(x) => {
            if x.shape() != (m, n) {
                return Err(Error::invalid(format!(
                    "initial guess is {:?}, expected ({m}, {n})",
                    x.shape()
                )));
            }
            x
        }
    };
    let mut r = problem.residual(&x);
    let mut j = problem.c_r * r.norm_squared() + (&x - &problem.target).norm_squared();
    if !j.is_finite() {
        return Err(Error::invalid("objective is not finite at the initial guess"));
    }
    let use_decrement = tol.is_none();
    let tol = tol.unwrap_or(0.0);
    let mut g = flatten(&problem.gradient_with(&x, &r));
    let mut report = NewtonReport {
        iterations: 0,
        residual_history: vec![g.norm()],
        objective_history: vec![j],
        converged: false,
        shifted_steps: 0,
        tol,
    };
    let mut small_decrement = false;
    while report.iterations < max_iter {
        if g.norm() <= tol {
            break;
        }
        let (p, shifted) = newton_step(problem, &x, &r, &g);
        report.shifted_steps += shifted as usize;
        let slope = g.dot(&p);
        if !(slope < 0.0) {
            break;
        }
        if use_decrement && -slope <= DECREMENT_TOL * (1.0 + j) {
            small_decrement = true;
            break;
        }
        let pm = unflatten(&p, m, n);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let xt = &x + &pm * alpha;
            let rt = problem.residual(&xt);
            let jt = problem.c_r * rt.norm_squared() + (&xt - &problem.target).norm_squared();
            if jt.is_finite() && jt <= j + ARMIJO * alpha * slope && jt < j {
                accepted = Some((xt, rt, jt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, rn, jn)) = accepted else {
            break;
        };
        x = xn;
        r = rn;
        j = jn;
        g = flatten(&problem.gradient_with(&x, &r));
        report.iterations += 1;
        report.residual_history.push(g.norm());
        report.objective_history.push(j);
    }
    report.converged = small_decrement || g.norm() <= tol;
    Ok((problem.trajectory(x)?, report))
}

/// Options for [`sliding_window_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingOptions {
    /// Measurement samples per window.
    pub window: usize,
    /// Samples between successive window starts.
    pub stride: usize,
    pub n_nodes: usize,
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Restart each window from the previous solution.
    pub warm_start: bool,
    /// Cold-started windows may be solved in parallel.
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub start: f64,
    pub end: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// `J` before the first step and after each accepted step.
    pub objective_history: Vec<f64>,
}

/// Initial guess for a window from the previous window's solution: the
/// previous interpolant where the windows overlap, the ROM integrated from
/// the previous end state beyond it. Near the window start the optimum is
/// pulled towards the targets, since the data before it has left the
/// window, so the first [`WARM_RAMP`] of the window is blended linearly back
/// to the targets.
fn warm_guess(prev: &CoefficientTrajectory, problem: &ObserverProblem) -> DMatrix<f64> {
    let nodes = problem.op.nodes();
    let (p0, p1) = prev.span();
    let interp = crate::interp::Barycentric::cgl(prev.times());
    let mut x = problem.target.clone();
    let n = prev.n_modes();
    let inside: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i] >= p0 && nodes[i] <= p1).collect();
    for &i in &inside {
        let c = interp.coefficients(nodes[i]);
        for k in 0..n {
            x[(i, k)] = (0..c.len()).map(|q| c[q] * prev.values()[(q, k)]).sum();
        }
    }
    let (t0, t1) = (nodes[0], nodes[nodes.len() - 1]);
    for &i in &inside {
        let w = (1.0 - (nodes[i] - t0) / ((t1 - t0) * WARM_RAMP)).max(0.0);
        if w > 0.0 {
            let row = problem.target.row(i) * w + x.row(i) * (1.0 - w);
            x.set_row(i, &row);
        }
    }
    let beyond: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i] > p1).collect();
    if !beyond.is_empty() {
        let mut times = vec![p1];
        times.extend(beyond.iter().map(|&i| nodes[i]));
        let a0: Vec<f64> = prev.sample(prev.n_samples() - 1).iter().copied().collect();
        let dt = (nodes[nodes.len() - 1] - nodes[0]) / (4.0 * nodes.len() as f64);
        if let Ok(ext) = integrate_at(&problem.rom, &a0, &times, dt) {
            for (q, &i) in beyond.iter().enumerate() {
                x.set_row(i, &ext.values().row(q + 1));
            }
        }
    }
    x
}

/// Runs the observer over consecutive windows of a measurement stream and
/// emits each window's estimate at its final node.
pub fn sliding_window_estimate(
    rom: &RomCoefficients,
    suite: &SensorSuite,
    stream: &MeasurementRecord,
    variant: Variant,
    static_model: Option<&LseModel>,
    c_r: f64,
    opts: &SlidingOptions,
) -> Result<(CoefficientTrajectory, Vec<WindowReport>)> {
    let total = stream.n_times();
    if opts.window < 2 || opts.window > total {
        return Err(Error::invalid(format!(
            "window of {} samples invalid for a stream of {total}",
            opts.window
        )));
    }
    if opts.stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let starts: Vec<usize> = (0..).map(|i| i * opts.stride).take_while(|&s| s + opts.window <= total).collect();
    let build = |s: usize| -> Result<ObserverProblem> {
        let rec = stream.slice(s, opts.window)?;
        assemble_problem(rom, suite, &rec, variant, static_model, c_r, opts.n_nodes)
    };
    let summarize = |p: &ObserverProblem, rep: &NewtonReport| WindowReport {
        start: p.op.nodes()[0],
        end: *p.op.nodes().last().expect("nodes"),
        iterations: rep.iterations,
        converged: rep.converged,
        objective: *rep.objective_history.last().expect("history"),
        objective_history: rep.objective_history.clone(),
    };
    let results: Vec<(CoefficientTrajectory, WindowReport)> = if opts.warm_start {
        let mut out = Vec::with_capacity(starts.len());
        let mut prev: Option<CoefficientTrajectory> = None;
        for &s in &starts {
            let p = build(s)?;
            let init = match &prev {
                Some(tr) => Init::Given(warm_guess(tr, &p)),
                None => Init::StaticTargets,
            };
            let (tr, rep) = solve(&p, init, opts.tol, opts.max_iter)?;
            let w = summarize(&p, &rep);
            prev = Some(tr.clone());
            out.push((tr, w));
        }
        out
    } else {
        let run = |i: usize| -> Result<(CoefficientTrajectory, WindowReport)> {
            let p = build(starts[i])?;
            let (tr, rep) = solve(&p, Init::StaticTargets, opts.tol, opts.max_iter)?;
            let w = summarize(&p, &rep);
            Ok((tr, w))
        };
        if opts.parallel {
            par::try_map_range(starts.len(), run)?
        } else {
            par::with_sequential(|| (0..starts.len()).map(run).collect::<Result<Vec<_>>>())?
        }
    };
    let times: Vec<f64> = results.iter().map(|(_, w)| w.end).collect();
    let rows: Vec<DVector<f64>> = results
        .iter()
        .map(|(tr, _)| tr.sample(tr.n_samples() - 1))
        .collect();
    let reports = results.into_iter().map(|(_, w)| w).collect();
    Ok((CoefficientTrajectory::from_rows(times, &rows)?, reports))
}
