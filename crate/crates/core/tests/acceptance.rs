//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use flowrecon::calibration::{calibrate, resample_to_nodes};
use flowrecon::collocation::build_collocation;
use flowrecon::estimators::*;
use flowrecon::interp::Interpolation;
use flowrecon::metrics::{coefficient_error, ErrorReport};
use flowrecon::observer::*;
use flowrecon::rom::{assemble_quadratic_tensor, convective_at, integrate, integrate_at};
use flowrecon::sensors::{build_suite, sample_measurements, FieldSource, SensorSpec, SensorSuite};
use flowrecon::synth::*;
use flowrecon::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn lin(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn mean(v: &[Option<f64>]) -> f64 {
    let d: Vec<f64> = v.iter().map(|x| x.unwrap_or(f64::NAN)).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

fn rows_at(tr: &CoefficientTrajectory, idx: &[usize]) -> CoefficientTrajectory {
    let t: Vec<f64> = idx.iter().map(|&i| tr.times()[i]).collect();
    let r: Vec<DVector<f64>> = idx.iter().map(|&i| tr.sample(i)).collect();
    CoefficientTrajectory::from_rows(t, &r).unwrap()
}

// ---------------------------------------------------------------- 1

fn pod_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_orth, mut worst_rec, mut mono) = (0.0f64, 0.0f64, true);
    for _ in 0..20 {
        let dims = [rng.random_range(8..=64), rng.random_range(8..=64)];
        let n = rng.random_range(3..=60);
        let grid = Arc::new(Grid::uniform(&dims, &[(0.0, 2.0), (0.0, 1.0)]).unwrap());
        let fields: Vec<VectorField> = (0..n)
            .map(|_| {
                let comps = (0..2)
                    .map(|_| (0..grid.n_points()).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                VectorField::new(grid.clone(), comps).unwrap()
            })
            .collect();
        let set = SnapshotSet::new((0..n).map(|i| i as f64).collect(), fields, None).unwrap();
        let probe = compute_pod(&set, 1).unwrap();
        let spec = probe.spectrum();
        mono &= spec.windows(2).all(|w| w[0] >= w[1]);
        let rank = spec.iter().filter(|&&l| l > flowrecon::pod::RANK_TOLERANCE * spec[0]).count();
        let basis = compute_pod(&set, rank).unwrap();
        mono &= basis.eigenvalues().windows(2).all(|w| w[0] >= w[1]);
        worst_orth = worst_orth.max(basis.orthonormality_defect());
        for f in set.fields() {
            let a: Vec<f64> = basis.project(f).unwrap().iter().copied().collect();
            let g = basis.reconstruct(&a).unwrap();
            let fl = f.sub(set.reference()).unwrap();
            let e = g.sub(f).unwrap().norm_squared().sqrt() / fl.norm_squared().sqrt();
            worst_rec = worst_rec.max(e);
        }
    }
    Outcome {
        pass: worst_orth <= 1e-10 && mono && worst_rec <= 1e-8,
        detail: format!("orthonormality {worst_orth:.1e}, monotone {mono}, reconstruction {worst_rec:.1e}"),
    }
}

// ---------------------------------------------------------------- 2

fn rom_oracles() -> Outcome {
    let mut worst = 0.0f64;
    let grids = [
        Grid::uniform(&[24, 20], &[(0.0, 3.0), (0.0, 2.0)]).unwrap(),
        Grid::uniform(&[12, 10, 8], &[(0.0, 2.0), (0.0, 1.5), (0.0, 1.0)]).unwrap(),
    ];
    for (gi, g) in grids.into_iter().enumerate() {
        let grid = Arc::new(g);
        let basis = make_modes(&grid, 6, ModeFamily::Trigonometric, 5 + gi as u64).unwrap();
        let b = assemble_quadratic_tensor(&basis).unwrap();
        let n = basis.n_retained();
        let w = grid.weights();
        let scale = b.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for k in 0..n {
            for s in 0..n {
                let conv: Vec<Vec<f64>> =
                    (0..grid.n_points()).map(|p| convective_at(basis.mode(k), basis.mode(s), p)).collect();
                for r in 0..n {
                    let mut acc = 0.0;
                    for (p, cp) in conv.iter().enumerate() {
                        for (c, v) in cp.iter().enumerate() {
                            acc += w[p] * v * basis.mode(r).component(c)[p];
                        }
                    }
                    worst = worst.max((acc - b.get(k, s, r)).abs() / scale);
                }
            }
        }
    }
    // RK4 on a' = -a
    let rom = RomCoefficients::new(
        DVector::zeros(1),
        DMatrix::from_element(1, 1, -1.0),
        QuadTensor::zeros(1),
    )
    .unwrap();
    let hs = [0.2, 0.1, 0.05, 0.025];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let tr = integrate(&rom, &[1.0], (0.0, 2.0), h).unwrap();
            (tr.values()[(tr.n_samples() - 1, 0)] - (-2.0f64).exp()).abs()
        })
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = hs.iter().zip(&errs).map(|(h, e)| (h.ln(), e.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / 4.0;
    let my = ly.iter().sum::<f64>() / 4.0;
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    Outcome {
        pass: worst <= 1e-13 && (slope - 4.0).abs() <= 0.3,
        detail: format!("tensor vs pointwise oracle {worst:.1e} (relative to max |B|), RK4 slope {slope:.3}"),
    }
}

// ---------------------------------------------------------------- 3

fn calibration_recovery() -> Outcome {
    let grid = Arc::new(Grid::uniform(&[16, 12], &[(0.0, 3.0), (0.0, 2.0)]).unwrap());
    let mut p = ScenarioParams::new(6, Dynamics::LimitCycle, (0.0, 4.0), 1e-3, 3);
    p.omega = 2.0 * std::f64::consts::PI;
    p.spin_up = 60.0;
    let sc = make_scenario_with(&grid, &p).unwrap();
    let truth = &sc.true_rom;
    let n = truth.n_modes();
    // Shift the state by a constant so the known model has a non-zero A.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let shift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
    let rhs_shifted = |a: &[f64]| {
        let x: Vec<f64> = a.iter().zip(&shift).map(|(a, c)| a - c).collect();
        truth.rhs(&x)
    };
    let a_star = DVector::from_vec(rhs_shifted(&vec![0.0; n]));
    let mut c_star = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut ep = vec![0.0; n];
        let mut em = vec![0.0; n];
        ep[k] = 1.0;
        em[k] = -1.0;
        let (fp, fm) = (rhs_shifted(&ep), rhs_shifted(&em));
        for r in 0..n {
            c_star[(k, r)] = 0.5 * (fp[r] - fm[r]);
        }
    }
    let model = RomCoefficients::new(a_star.clone(), c_star.clone(), truth.b_quad.clone()).unwrap();
    let a0: Vec<f64> = sc.true_trajectory.sample(0).iter().zip(&shift).map(|(a, c)| a + c).collect();
    let window = (0.0, 2.0);
    let op = build_collocation(window.0, window.1, 121).unwrap();
    let reference = integrate_at(&model, &a0, op.nodes(), 1e-4).unwrap();
    let (fit, _) = calibrate(&model.b_quad, &reference, &op).unwrap();
    let ea = (&fit.a_const - &a_star).amax();
    let ec = (&fit.c_linear - &c_star).amax();
    let ts = lin(window.0, window.1, 401);
    let re = integrate_at(&fit, &a0, &ts, 1e-3).unwrap();
    let tr = integrate_at(&model, &a0, &ts, 1e-3).unwrap();
    let err = (re.values() - tr.values()).norm() / tr.values().norm() * 100.0;
    Outcome {
        pass: ea <= 1e-6 && ec <= 1e-6 && err <= 2.0,
        detail: format!("|A-A*| {ea:.1e}, |C-C*| {ec:.1e}, re-integration error {err:.2e}%"),
    }
}

// ---------------------------------------------------------------- 4

fn estimator_ladder() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let grid = Arc::new(Grid::uniform(&[24, 20], &[(0.0, 3.0), (0.0, 2.0)]).unwrap());
    let raw = make_modes(&grid, 5, ModeFamily::PolynomialBump, 2).unwrap();
    let reference = VectorField::from_fn(grid.clone(), |x| vec![1.0 + 0.2 * x[1], 0.1 * x[0]]);
    let basis = PodBasis::from_parts(raw.modes().to_vec(), vec![1.0; 5], DMatrix::zeros(0, 5), reference).unwrap();
    let specs: Vec<SensorSpec> = (0..8)
        .map(|i| {
            let p = grid.point(grid.flat_index(&[3 + 2 * i, 2 + (5 * i) % 17]));
            SensorSpec::point(p, i % 2)
        })
        .collect();
    let suite = build_suite(&specs, &basis).unwrap();
    let times = lin(0.0, 1.0, 40);
    let coeffs = DMatrix::from_fn(40, 5, |_, _| rng.random_range(-1.0..1.0));
    let fields: Vec<VectorField> = (0..40)
        .map(|i| basis.reconstruct(&coeffs.row(i).iter().copied().collect::<Vec<_>>()).unwrap())
        .collect();
    let set = SnapshotSet::new(times.clone(), fields, None).unwrap();
    let rec = sample_measurements(&suite, &set, &times).unwrap();
    let (lsq, _) = lsq_estimate(&suite, &rec).unwrap();
    let e_lsq = (lsq.values() - &coeffs).amax() / coeffs.amax();

    // linear and quadratic ground truth from random readings
    let ns = 4;
    let nr = 3;
    let t = lin(0.0, 2.0, 200);
    let f = DMatrix::from_fn(200, ns, |_, _| rng.random_range(-1.0..1.0));
    let rec = MeasurementRecord::new(t.clone(), f.clone()).unwrap();
    let lambda = DMatrix::from_fn(ns, nr, |_, _| rng.random_range(-1.0..1.0));
    let lin_a = &f * &lambda;
    let lin_tr = CoefficientTrajectory::new(t.clone(), lin_a.clone()).unwrap();
    let m = lse_fit(&lin_tr, &rec).unwrap();
    let e_lse = (lse_estimate(&m, &rec).unwrap().values() - &lin_a).amax() / lin_a.amax();

    let mut om = vec![0.0; ns * ns * nr];
    for k in 0..ns {
        for q in k..ns {
            for j in 0..nr {
                let v = rng.random_range(-1.0..1.0);
                om[(k * ns + q) * nr + j] = v;
                om[(q * ns + k) * nr + j] = v;
            }
        }
    }
    let truth = QseModel::new(lambda.clone(), om).unwrap();
    let quad_a = DMatrix::from_fn(200, nr, |i, j| truth.evaluate(&f.row(i).iter().copied().collect::<Vec<_>>())[j]);
    let quad_tr = CoefficientTrajectory::new(t.clone(), quad_a.clone()).unwrap();
    let qm = qse_fit(&quad_tr, &rec).unwrap();
    let e_qse = (qse_estimate(&qm, &rec).unwrap().values() - &quad_a).amax() / quad_a.amax();

    // integer delays of a periodic white signal
    let l = 64;
    let base: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
    let delays = [3usize, 11];
    let n = 4 * l;
    let ts: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    let sig = DMatrix::from_fn(n, 1, |i, _| base[i % l]);
    let out = DMatrix::from_fn(n, 2, |i, j| base[(i + l - delays[j]) % l]);
    let srec = MeasurementRecord::new(ts.clone(), sig).unwrap();
    let str_ = CoefficientTrajectory::new(ts, out.clone()).unwrap();
    let sm = slse_fit(&str_, &srec, Some(l)).unwrap();
    let mut e_phase = 0.0f64;
    for b in 0..l {
        for (j, &d) in delays.iter().enumerate() {
            let want = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (b * d) as f64 / l as f64);
            e_phase = e_phase.max((sm.gamma(b, 0, j) - want).norm());
        }
    }
    let e_slse = (slse_estimate(&sm, &srec).unwrap().values() - &out).amax();
    let pass = e_lsq <= 1e-8 && e_lse <= 1e-8 && e_qse <= 1e-8 && e_phase <= 1e-6 && sm.excluded_bins.is_empty();
    Outcome {
        pass,
        detail: format!(
            "LSQ {e_lsq:.1e}, LSE {e_lse:.1e}, QSE {e_qse:.1e}, SLSE transfer {e_phase:.1e} (estimate {e_slse:.1e})"
        ),
    }
}

// ---------------------------------------------------------------- 5

struct Planar {
    rom: RomCoefficients,
    suite: SensorSuite,
    lse: LseModel,
    stream: MeasurementRecord,
    /// Projected truth at the stream samples.
    truth: CoefficientTrajectory,
    sliding: SlidingOptions,
    errors: [(String, f64); 4],
    windows: Vec<(Variant, Vec<WindowReport>)>,
    elapsed: Duration,
}

static PLANAR: OnceLock<Planar> = OnceLock::new();

/// Two point sensors chosen to see the two dominant modes best relative to
/// the rest.
fn best_pair(grid: &Grid, basis: &PodBasis) -> Vec<SensorSpec> {
    let n = basis.n_retained();
    let mut cands = vec![];
    for i in (2..grid.dims()[0] - 2).step_by(3) {
        for j in (2..grid.dims()[1] - 2).step_by(3) {
            for c in 0..2 {
                let fl = grid.flat_index(&[i, j]);
                let h: Vec<f64> = (0..n).map(|k| basis.mode(k).component(c)[fl]).collect();
                cands.push((grid.point(fl), c, h));
            }
        }
    }
    let mut best = (0.0, 0, 0);
    for a in 0..cands.len() {
        for b in a + 1..cands.len() {
            let h = DMatrix::from_fn(2, n, |r, k| if r == 0 { cands[a].2[k] } else { cands[b].2[k] });
            let lead = h.columns(0, 2).into_owned().singular_values().min();
            let score = lead / (h.columns(2, n - 2).norm() + 1e-300);
            if score > best.0 {
                best = (score, a, b);
            }
        }
    }
    vec![
        SensorSpec::point(cands[best.1].0.clone(), cands[best.1].1),
        SensorSpec::point(cands[best.2].0.clone(), cands[best.2].1),
    ]
}

fn planar() -> &'static Planar {
    PLANAR.get_or_init(|| {
        let t0 = Instant::now();
        let per = DEFAULT_PERIOD;
        let grid = Arc::new(Grid::uniform(&[40, 28], &[(0.0, 3.0), (0.0, 2.0)]).unwrap());
        let p = ScenarioParams::new(6, Dynamics::LimitCycle, (0.0, 14.0 * per), per / 500.0, 1);
        let sc = make_scenario_with(&grid, &p).unwrap();
        let train_t = lin(0.0, 4.0 * per, 401);
        let set = sc.snapshots(&train_t).unwrap();
        let basis = compute_pod(&set, 6).unwrap();
        let b = assemble_quadratic_tensor(&basis).unwrap();
        let op = build_collocation(0.0, 4.0 * per, 161).unwrap();
        let pod_tr = CoefficientTrajectory::new(train_t.clone(), basis.modal_coefficients()).unwrap();
        let (rom, _) = calibrate(&b, &resample_to_nodes(&pod_tr, &op).unwrap(), &op).unwrap();
        let suite = build_suite(&best_pair(&grid, &basis), &basis).unwrap();
        let train = sample_measurements(&suite, &set, &train_t).unwrap().centered(suite.ref_offset()).unwrap();
        let lse = lse_fit(&pod_tr, &train).unwrap();

        let st = lin(8.0 * per, 11.0 * per, 301);
        let stream = sample_measurements(&suite, &sc, &st).unwrap();
        let rows: Vec<DVector<f64>> = st.iter().map(|&t| basis.project(&sc.field_at(t).unwrap()).unwrap()).collect();
        let truth = CoefficientTrajectory::from_rows(st.clone(), &rows).unwrap();
        let sliding = SlidingOptions {
            window: 201,
            stride: 5,
            n_nodes: 121,
            tol: None,
            max_iter: DEFAULT_MAX_ITER,
            warm_start: true,
            parallel: true,
        };
        let ends: Vec<usize> = (200..301).step_by(5).collect();
        let eval_truth = rows_at(&truth, &ends);
        let (lsq, _) = lsq_estimate(&suite, &stream).unwrap();
        let lse_e = lse_estimate(&lse, &stream.centered(suite.ref_offset()).unwrap()).unwrap();
        let e_lsq = mean(&coefficient_error(&rows_at(&lsq, &ends), &eval_truth).unwrap());
        let e_lse = mean(&coefficient_error(&rows_at(&lse_e, &ends), &eval_truth).unwrap());
        let mut errors = vec![("LSQ".to_string(), e_lsq), ("LSE".to_string(), e_lse)];
        let mut windows = vec![];
        for v in [Variant::KLsq, Variant::KLse] {
            let model = (v == Variant::KLse).then_some(&lse);
            let (est, reps) =
                sliding_window_estimate(&rom, &suite, &stream, v, model, v.default_c_r(), &sliding).unwrap();
            errors.push((v.name().to_string(), mean(&coefficient_error(&est, &eval_truth).unwrap())));
            windows.push((v, reps));
        }
        Planar {
            rom,
            suite,
            lse,
            stream,
            truth,
            sliding,
            errors: errors.try_into().unwrap(),
            windows,
            elapsed: t0.elapsed(),
        }
    })
}

fn ranking_planar() -> Outcome {
    let p = planar();
    let e = |name: &str| p.errors.iter().find(|(n, _)| n == name).unwrap().1;
    let (lsq, lse, klsq, klse) = (e("LSQ"), e("LSE"), e("K-LSQ"), e("K-LSE"));
    Outcome {
        pass: klsq * 10.0 <= lse && klse * 10.0 <= lse && lse < lsq && p.elapsed < Duration::from_secs(120),
        detail: format!(
            "mean coefficient error over window ends: LSQ {lsq:.2}%, LSE {lse:.2}%, K-LSQ {klsq:.2}%, K-LSE {klse:.2}%"
        ),
    }
}

// ---------------------------------------------------------------- 6

struct Spatial {
    /// (near, far) reports for LSE and K-LSE.
    lse: [ErrorReport; 2],
    klse: [ErrorReport; 2],
    reports: Vec<NewtonReport>,
    elapsed: Duration,
}

static SPATIAL: OnceLock<Spatial> = OnceLock::new();

fn spatial() -> &'static Spatial {
    SPATIAL.get_or_init(|| {
        let t0 = Instant::now();
        let per = DEFAULT_PERIOD;
        let blocks = 4;
        let grid = Arc::new(Grid::uniform(&[20, 16, 12], &[(0.0, 2.0), (0.0, 1.5), (0.0, 1.0)]).unwrap());
        let far = 40.0 * per;
        let mut p = ScenarioParams::new(
            20,
            Dynamics::ChaoticQuadratic,
            (0.0, far + (blocks as f64 + 2.0) * per),
            per / 200.0,
            1,
        );
        p.n_unresolved = 6;
        let sc = make_scenario_with(&grid, &p).unwrap();
        let tw = 8.0 * per;
        let train_t = lin(0.0, tw, 1601);
        let set = sc.snapshots(&train_t).unwrap();
        let basis = compute_pod(&set, 20).unwrap();
        let b = assemble_quadratic_tensor(&basis).unwrap();
        let op = build_collocation(0.0, tw, 641).unwrap();
        let pod_tr = CoefficientTrajectory::new(train_t.clone(), basis.modal_coefficients()).unwrap();
        let (rom, _) = calibrate(&b, &resample_to_nodes(&pod_tr, &op).unwrap(), &op).unwrap();
        let specs: Vec<SensorSpec> = (0..24)
            .map(|i| {
                let x = 0.2 + 1.6 * ((i * 7) % 24) as f64 / 23.0;
                let y = 0.15 + 1.2 * ((i * 5) % 24) as f64 / 23.0;
                let z = 0.1 + 0.8 * ((i * 11) % 24) as f64 / 23.0;
                SensorSpec::point(vec![x, y, z], i % 3)
            })
            .collect();
        let suite = build_suite(&specs, &basis).unwrap();
        let train = sample_measurements(&suite, &set, &train_t).unwrap().centered(suite.ref_offset()).unwrap();
        let lse = lse_fit(&pod_tr, &train).unwrap();
        let mut reports = vec![];
        let mut evaluate = |w0: f64| {
            let (mut times, mut est, mut stat, mut refs, mut fields) = (vec![], vec![], vec![], vec![], vec![]);
            for blk in 0..blocks {
                let a = w0 + blk as f64 * per;
                let st = lin(a, a + per, 201);
                let stream = sample_measurements(&suite, &sc, &st).unwrap();
                let prob = assemble_problem(&rom, &suite, &stream, Variant::KLse, Some(&lse), Variant::KLse.default_c_r(), 61)
                    .unwrap();
                let (x, rep) = solve(&prob, Init::StaticTargets, None, DEFAULT_MAX_ITER).unwrap();
                reports.push(rep);
                let x = x.resample(&st, Interpolation::Rational(6)).unwrap();
                let l = lse_estimate(&lse, &stream.centered(suite.ref_offset()).unwrap()).unwrap();
                for i in (if blk == 0 { 0 } else { 1 })..st.len() {
                    let f = sc.field_at(st[i]).unwrap();
                    times.push(st[i]);
                    est.push(x.sample(i));
                    stat.push(l.sample(i));
                    refs.push(basis.project(&f).unwrap());
                    fields.push(f);
                }
            }
            let r = CoefficientTrajectory::from_rows(times.clone(), &refs).unwrap();
            let k = CoefficientTrajectory::from_rows(times.clone(), &est).unwrap();
            let s = CoefficientTrajectory::from_rows(times, &stat).unwrap();
            (
                ErrorReport::evaluate("LSE", &s, &r, &fields, &basis).unwrap(),
                ErrorReport::evaluate("K-LSE", &k, &r, &fields, &basis).unwrap(),
            )
        };
        let (ln, kn) = evaluate(tw + per);
        let (lf, kf) = evaluate(far);
        Spatial {
            lse: [ln, lf],
            klse: [kn, kf],
            reports,
            elapsed: t0.elapsed(),
        }
    })
}

fn ranking_spatial() -> Outcome {
    let s = spatial();
    let mut ratio = 0.0f64;
    let mut drift = 0.0f64;
    for c in 0..3 {
        for w in 0..2 {
            ratio = ratio.max(s.klse[w].projected[c].unwrap() / s.lse[w].projected[c].unwrap());
        }
        drift = drift.max(s.klse[1].projected[c].unwrap() / s.klse[0].projected[c].unwrap());
    }
    let fmt = |r: &ErrorReport| {
        r.projected.iter().map(|v| format!("{:.3}", v.unwrap())).collect::<Vec<_>>().join("/")
    };
    Outcome {
        pass: ratio <= 0.5 && drift <= 1.5 && s.elapsed < Duration::from_secs(600),
        detail: format!(
            "projected field error (%): near LSE {} K-LSE {}, far LSE {} K-LSE {}; worst K-LSE/LSE {ratio:.2}, far/near {drift:.2}",
            fmt(&s.lse[0]),
            fmt(&s.klse[0]),
            fmt(&s.lse[1]),
            fmt(&s.klse[1])
        ),
    }
}

// ---------------------------------------------------------------- 7

fn strictly_decreasing(h: &[f64]) -> bool {
    h.windows(2).all(|w| w[1] < w[0])
}

/// Pattern search from a grid of starts, refined to a tiny step.
fn brute_force_min(f: &dyn Fn(&[f64]) -> f64, dim: usize, radius: f64) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let n_starts = levels.len().pow(dim as u32);
    for s in 0..n_starts {
        let mut x: Vec<f64> = (0..dim).map(|d| levels[(s / levels.len().pow(d as u32)) % levels.len()] * radius).collect();
        let mut fx = f(&x);
        let mut h = radius / 4.0;
        while h > 1e-12 * radius {
            let mut moved = false;
            for d in 0..dim {
                for sgn in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[d] += sgn * h;
                    let fy = f(&y);
                    if fy < fx {
                        x = y;
                        fx = fy;
                        moved = true;
                    }
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|b| fx < b.0) {
            best = Some((fx, x));
        }
    }
    best.unwrap().1
}

fn observer_contract() -> Outcome {
    let p = planar();
    let s = spatial();
    let mut max_it = 0usize;
    let mut decreasing = true;
    let mut all_converged = true;
    for (_, reps) in &p.windows {
        for w in reps {
            max_it = max_it.max(w.iterations);
            decreasing &= strictly_decreasing(&w.objective_history);
            all_converged &= w.converged;
        }
    }
    for r in &s.reports {
        max_it = max_it.max(r.iterations);
        decreasing &= strictly_decreasing(&r.objective_history);
        all_converged &= r.converged;
    }

    // small instances against brute force
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_bf = 0.0f64;
    for (n, m) in [(1usize, 2usize), (1, 3), (1, 4), (2, 2)] {
        for _ in 0..3 {
            let a = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
            let c = DMatrix::from_fn(n, n, |i, j| if i == j { -1.0 } else { rng.random_range(-0.5..0.5) });
            let b = QuadTensor::from_vec(n, (0..n * n * n).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
            let rom = RomCoefficients::new(a, c, b).unwrap();
            let op = build_collocation(0.0, 1.0, m).unwrap();
            let target = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let c_r = rng.random_range(0.1..2.0);
            let prob = ObserverProblem::new(rom, op, target, c_r, Variant::KLse).unwrap();
            let (x, _) = solve(&prob, Init::StaticTargets, Some(1e-13), DEFAULT_MAX_ITER).unwrap();
            let f = |v: &[f64]| prob.objective(&DMatrix::from_row_slice(m, n, v));
            let bf = brute_force_min(&f, m * n, 2.0);
            let xs: Vec<f64> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| x.values()[(i, j)]).collect();
            // compare minimisers and, as the tie-breaker for flat valleys, values
            let dx = xs.iter().zip(&bf).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
            worst_bf = worst_bf.max(dx);
        }
    }

    // residual-weight sweep on the first planar window
    let rec = p.stream.slice(0, p.sliding.window).unwrap();
    let base = assemble_problem(&p.rom, &p.suite, &rec, Variant::KLse, Some(&p.lse), 1.0, p.sliding.n_nodes).unwrap();
    let truth_nodes = p.truth.resample(base.op().nodes(), Interpolation::Rational(6)).unwrap();
    let mut table = String::from("    C_R        |R|          |X-T|        e(a) [%]\n");
    let mut prev: Option<(f64, f64)> = None;
    let mut monotone = true;
    let mut guess = None;
    for c_r in [1e-2, 1e-1, 1.0, 1e1, 1e2] {
        let prob = base.with_c_r(c_r).unwrap();
        let init = guess.clone().map_or(Init::StaticTargets, Init::Given);
        let (x, _) = solve(&prob, init, None, DEFAULT_MAX_ITER).unwrap();
        let r = prob.residual(x.values()).norm();
        let d = (x.values() - prob.target()).norm();
        let e = mean(&coefficient_error(&x, &truth_nodes).unwrap());
        table.push_str(&format!("    {c_r:<9.0e}  {r:<11.4e}  {d:<11.4e}  {e:.3}\n"));
        if let Some((pr, pd)) = prev {
            monotone &= r <= pr * (1.0 + 1e-9) && d >= pd * (1.0 - 1e-9);
        }
        prev = Some((r, d));
        guess = Some(x.values().clone());
    }
    print!("{table}");
    Outcome {
        pass: max_it <= 10 && decreasing && all_converged && worst_bf <= 1e-6 && monotone,
        detail: format!(
            "max Newton iterations {max_it}, objective strictly decreasing {decreasing}, converged {all_converged}, brute-force gap {worst_bf:.1e}, C_R trade-off monotone {monotone}"
        ),
    }
}

// ---------------------------------------------------------------- 8

fn sliding_mode() -> Outcome {
    let p = planar();
    let mut ok = 0usize;
    let mut total = 0usize;
    for (v, warm) in &p.windows {
        let model = (*v == Variant::KLse).then_some(&p.lse);
        let cold_opts = SlidingOptions {
            warm_start: false,
            ..p.sliding.clone()
        };
        let (_, cold) =
            sliding_window_estimate(&p.rom, &p.suite, &p.stream, *v, model, v.default_c_r(), &cold_opts).unwrap();
        for (w, c) in warm.iter().zip(&cold) {
            total += 1;
            ok += (w.iterations <= c.iterations) as usize;
        }
    }
    let share = ok as f64 / total as f64;
    let full = SlidingOptions {
        window: p.stream.n_times(),
        ..p.sliding.clone()
    };
    let (slid, _) = sliding_window_estimate(
        &p.rom,
        &p.suite,
        &p.stream,
        Variant::KLse,
        Some(&p.lse),
        Variant::KLse.default_c_r(),
        &full,
    )
    .unwrap();
    let prob = assemble_problem(
        &p.rom,
        &p.suite,
        &p.stream,
        Variant::KLse,
        Some(&p.lse),
        Variant::KLse.default_c_r(),
        full.n_nodes,
    )
    .unwrap();
    let (single, _) = solve(&prob, Init::StaticTargets, None, DEFAULT_MAX_ITER).unwrap();
    let last = single.sample(single.n_samples() - 1);
    let diff = (slid.sample(0) - &last).amax() / last.amax();
    Outcome {
        pass: share >= 0.8 && diff <= 1e-12,
        detail: format!("warm <= cold on {ok}/{total} windows ({:.0}%), full-stream window vs single solve {diff:.1e}", share * 100.0),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("POD invariants", pod_invariants, Duration::from_secs(30)),
        ("ROM oracles", rom_oracles, Duration::from_secs(10)),
        ("calibration recovery", calibration_recovery, Duration::from_secs(20)),
        ("estimator exactness", estimator_ladder, Duration::from_secs(20)),
        ("2-D ranking", ranking_planar, Duration::from_secs(120)),
        ("3-D ranking", ranking_spatial, Duration::from_secs(600)),
        ("observer contract", observer_contract, Duration::MAX),
        ("sliding window", sliding_mode, Duration::MAX),
    ];
    // ACCEPTANCE_ONLY=5,7 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run));
        let dt = t.elapsed();
        let (pass, detail) = match res {
            Ok(o) => (o.pass && dt < *limit, o.detail),
            Err(e) => (
                false,
                format!(
                    "panicked: {}",
                    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
                ),
            ),
        };
        failed += (!pass) as usize;
        println!(
            "criterion {} {} {name}: {detail} [{:.1}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            dt.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
