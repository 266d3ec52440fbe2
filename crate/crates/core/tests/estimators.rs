use std::f64::consts::PI;
use std::sync::Arc;

use flowrecon::estimators::*;
use flowrecon::linalg::trapezoid_weights;
use flowrecon::sensors::{build_suite, SensorSpec};
use flowrecon::synth::{make_modes, ModeFamily};
use flowrecon::{CoefficientTrajectory, Grid, MeasurementRecord};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn times(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * dt).collect()
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn traj(t: &[f64], v: DMatrix<f64>) -> CoefficientTrajectory {
    CoefficientTrajectory::new(t.to_vec(), v).unwrap()
}

fn rec(t: &[f64], v: DMatrix<f64>) -> MeasurementRecord {
    MeasurementRecord::new(t.to_vec(), v).unwrap()
}

/// Weighted normal equations solved by LU.
fn normal_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let xtw = x.transpose() * wm;
    (&xtw * x).lu().solve(&(&xtw * y)).unwrap()
}

fn weighted_sq(r: &DMatrix<f64>, w: &[f64]) -> f64 {
    (0..r.nrows()).map(|i| w[i] * r.row(i).norm_squared()).sum()
}

#[test]
fn lsq_recovers_in_span_coefficients() {
    let grid = Arc::new(Grid::uniform(&[24, 20], &[(0.0, 2.0), (0.0, 1.0)]).unwrap());
    let basis = make_modes(&grid, 4, ModeFamily::Trigonometric, 5).unwrap();
    let specs: Vec<SensorSpec> = (0..8)
        .map(|i| SensorSpec::point(vec![0.15 + 0.22 * i as f64, 0.1 + 0.11 * i as f64], i % 2))
        .collect();
    let suite = build_suite(&specs, &basis).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = times(6, 0.1);
    let a = random(&mut rng, 6, 4);
    let mut f = DMatrix::zeros(6, 8);
    for i in 0..6 {
        let field = basis.reconstruct(a.row(i).iter().copied().collect::<Vec<_>>().as_slice()).unwrap();
        f.set_row(i, &suite.measure(&field).transpose());
    }
    let (est, op) = lsq_estimate(&suite, &rec(&t, f)).unwrap();
    assert!(op.warning.is_none());
    assert!((est.values() - &a).amax() < 1e-10);
}

#[test]
fn lsq_underdetermined_stays_finite() {
    let grid = Arc::new(Grid::uniform(&[24, 20], &[(0.0, 2.0), (0.0, 1.0)]).unwrap());
    let basis = make_modes(&grid, 6, ModeFamily::Trigonometric, 1).unwrap();
    let specs = vec![SensorSpec::point(vec![0.7, 0.4], 0), SensorSpec::point(vec![1.3, 0.6], 1)];
    let suite = build_suite(&specs, &basis).unwrap();
    let (est, _) = lsq_estimate(&suite, &rec(&[0.0, 1.0], DMatrix::from_element(2, 2, 0.3))).unwrap();
    assert!(est.values().iter().all(|v| v.is_finite()));
}

#[test]
fn lse_single_sensor_half() {
    let t = times(50, 0.1);
    let a = DMatrix::from_fn(50, 1, |i, _| (0.3 * i as f64).sin());
    let m = lse_fit(&traj(&t, a.clone()), &rec(&t, &a * 2.0)).unwrap();
    assert!((m.lambda[(0, 0)] - 0.5).abs() < 1e-14);
}

#[test]
fn lse_square_map_replays_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = times(80, 0.05);
    let a = random(&mut rng, 80, 3);
    let m = random(&mut rng, 3, 3) + DMatrix::identity(3, 3) * 2.0;
    let f = &a * m.transpose();
    let model = lse_fit(&traj(&t, a.clone()), &rec(&t, f.clone())).unwrap();
    let est = lse_estimate(&model, &rec(&t, f)).unwrap();
    assert!((est.values() - a).amax() < 1e-10);
}

#[test]
fn lse_matches_dense_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t: Vec<f64> = {
        let mut s = 0.0;
        (0..120).map(|_| { s += rng.random_range(0.01..0.05); s }).collect()
    };
    let a = random(&mut rng, 120, 4);
    let m = random(&mut rng, 5, 4);
    let mut f = &a * m.transpose();
    for i in 0..120 {
        for k in 0..5 {
            f[(i, k)] += 0.3 * a[(i, k % 4)] * a[(i, (k + 1) % 4)];
        }
    }
    let model = lse_fit(&traj(&t, a.clone()), &rec(&t, f.clone())).unwrap();
    let oracle = normal_solve(&f, &a, &trapezoid_weights(&t));
    let err = (&model.lambda - &oracle).amax() / oracle.amax();
    assert!(err < 1e-12, "{err:e}");
}

#[test]
fn lse_residuals_orthogonal_to_sensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = times(200, 0.01);
    let a = random(&mut rng, 200, 3);
    let f = random(&mut rng, 200, 5) + &a.clone().insert_columns(3, 2, 0.0) * 0.5;
    let model = lse_fit(&traj(&t, a.clone()), &rec(&t, f.clone())).unwrap();
    let r = lse_estimate(&model, &rec(&t, f.clone())).unwrap().values() - &a;
    let w = trapezoid_weights(&t);
    for j in 0..3 {
        for k in 0..5 {
            let ip: f64 = (0..200).map(|i| w[i] * r[(i, j)] * f[(i, k)]).sum();
            let nr = weighted_sq(&r.columns(j, 1).into_owned(), &w).sqrt();
            let nf = weighted_sq(&f.columns(k, 1).into_owned(), &w).sqrt();
            assert!(ip.abs() < 1e-10 * nr * nf, "{j} {k} {ip:e}");
        }
    }
}

#[test]
fn lse_zero_in_zero_out() {
    let model = LseModel { lambda: DMatrix::from_element(3, 2, 1.7) };
    let est = lse_estimate(&model, &rec(&[0.0, 1.0], DMatrix::zeros(2, 3))).unwrap();
    assert!(est.values().iter().all(|&v| v == 0.0));
    let id = LseModel { lambda: DMatrix::identity(2, 2) };
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(lse_estimate(&id, &rec(&[0.0, 1.0], f.clone())).unwrap().values(), &f);
}

#[test]
fn lse_singular_covariance_names_sensors() {
    let t = times(30, 0.1);
    let f1: Vec<f64> = t.iter().map(|x| x.sin()).collect();
    let f = DMatrix::from_fn(30, 3, |i, k| match k {
        0 => f1[i],
        1 => (2.0 * t[i]).cos(),
        _ => 2.0 * f1[i],
    });
    let a = DMatrix::from_fn(30, 1, |i, _| t[i]);
    let e = lse_fit(&traj(&t, a), &rec(&t, f)).unwrap_err().to_string();
    assert!(e.contains('1') && e.contains('3') && !e.contains('2'), "{e}");
}

#[test]
fn qse_linear_truth_has_no_quadratic_part() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = times(150, 0.02);
    let f = random(&mut rng, 150, 3);
    let a = &f * random(&mut rng, 3, 2);
    let q = qse_fit(&traj(&t, a.clone()), &rec(&t, f.clone())).unwrap();
    let l = lse_fit(&traj(&t, a), &rec(&t, f)).unwrap();
    assert!(q.omega.iter().all(|w| w.abs() < 1e-8));
    assert!((&q.lambda - &l.lambda).amax() < 1e-10);
}

#[test]
fn qse_square_of_one_sensor() {
    let t = times(60, 0.1);
    let f = DMatrix::from_fn(60, 1, |i, _| (0.4 * t[i]).sin() + 0.2 * t[i].cos());
    let a = f.map(|v| v * v);
    let q = qse_fit(&traj(&t, a), &rec(&t, f)).unwrap();
    assert!(q.lambda[(0, 0)].abs() < 1e-10);
    assert!((q.omega(0, 0, 0) - 1.0).abs() < 1e-10);
}

#[test]
fn qse_matches_augmented_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, ns, nr) = (200, 3, 2);
    let t = times(n, 0.01);
    let f = random(&mut rng, n, ns);
    let lam = random(&mut rng, ns, nr);
    let mut a = &f * &lam;
    for i in 0..n {
        for j in 0..nr {
            for k in 0..ns {
                for m in 0..ns {
                    a[(i, j)] += 0.1 * (1 + k + 2 * m + j) as f64 * f[(i, k)] * f[(i, m)];
                }
            }
        }
    }
    a += random(&mut rng, n, nr) * 0.05;
    let q = qse_fit(&traj(&t, a.clone()), &rec(&t, f.clone())).unwrap();
    let pairs: Vec<(usize, usize)> = (0..ns).flat_map(|k| (k..ns).map(move |m| (k, m))).collect();
    let x = DMatrix::from_fn(n, ns + pairs.len(), |i, c| {
        if c < ns { f[(i, c)] } else { f[(i, pairs[c - ns].0)] * f[(i, pairs[c - ns].1)] }
    });
    let theta = normal_solve(&x, &a, &trapezoid_weights(&t));
    for k in 0..ns {
        for j in 0..nr {
            assert!((q.lambda[(k, j)] - theta[(k, j)]).abs() < 1e-10);
        }
    }
    for (p, &(k, m)) in pairs.iter().enumerate() {
        for j in 0..nr {
            let want = theta[(ns + p, j)];
            let got = if k == m { q.omega(k, k, j) } else { q.omega(k, m, j) + q.omega(m, k, j) };
            assert!((got - want).abs() < 1e-10, "{k}{m}{j}: {got} vs {want}");
        }
    }
}

#[test]
fn qse_model_round_trips_through_record() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = times(80, 0.05);
    let f = random(&mut rng, 80, 2);
    let a = f.map(|v| v.powi(3));
    let q = qse_fit(&traj(&t, a), &rec(&t, f)).unwrap();
    assert_eq!(QseModel::from_record(&q.to_record()).unwrap(), q);
}

fn sine_record(l: usize, dt: f64, n: usize, bin: usize, delay: f64) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let t = times(n, dt);
    let nu = bin as f64 / (l as f64 * dt);
    let f = DMatrix::from_fn(n, 1, |i, _| (2.0 * PI * nu * t[i]).sin());
    let a = DMatrix::from_fn(n, 1, |i, _| (2.0 * PI * nu * (t[i] - delay)).sin());
    (t, f, a)
}

#[test]
fn slse_delay_is_a_phase() {
    let (l, dt, bin, delay) = (64, 0.01, 5, 0.0123);
    let (t, f, a) = sine_record(l, dt, 4 * l, bin, delay);
    let m = slse_fit(&traj(&t, a), &rec(&t, f), Some(l)).unwrap();
    let g = m.gamma(bin, 0, 0);
    let nu = m.frequencies[bin];
    assert!((g.norm() - 1.0).abs() < 1e-6);
    let want = -2.0 * PI * nu * delay;
    let d = (g.arg() - want + PI).rem_euclid(2.0 * PI) - PI;
    assert!(d.abs() < 1e-6, "{} vs {want}", g.arg());
    assert!(m.excluded_bins.len() > 0);
}

#[test]
fn slse_gain_two_broadband() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 512;
    let t = times(n, 0.01);
    let f = random(&mut rng, n, 1);
    let m = slse_fit(&traj(&t, &f * 2.0), &rec(&t, f), Some(64)).unwrap();
    assert!(m.excluded_bins.is_empty());
    for b in 0..64 {
        assert!((m.gamma(b, 0, 0) - 2.0).norm() < 1e-10);
    }
}

#[test]
fn slse_bins_are_conjugate_and_estimates_real() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, l) = (400, 40);
    let t = times(n, 0.02);
    let f = random(&mut rng, n, 3);
    let a = random(&mut rng, n, 2);
    let m = slse_fit(&traj(&t, a), &rec(&t, f.clone()), Some(l)).unwrap();
    for b in 1..l {
        for k in 0..3 {
            for j in 0..2 {
                assert_eq!(m.gamma(b, k, j), m.gamma(l - b, k, j).conj());
            }
        }
    }
    let (_, residue) = slse_estimate_with_residue(&m, &rec(&t, f)).unwrap();
    assert!(residue < 1e-10, "{residue:e}");
}

#[test]
fn slse_estimate_is_circular_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, l) = (300, 30);
    let t = times(n, 0.05);
    let f = random(&mut rng, n, 3);
    let a = random(&mut rng, n, 2) + &f.columns(0, 2) * 0.7;
    let m = slse_fit(&traj(&t, a), &rec(&t, f), Some(l)).unwrap();
    let g = random(&mut rng, l, 3);
    let est = slse_estimate(&m, &rec(&t[..l], g.clone())).unwrap();
    let kernel = slse_kernel(&m);
    for i in 0..l {
        for j in 0..2 {
            let mut v = 0.0;
            for q in 0..l {
                for k in 0..3 {
                    v += kernel[q][(k, j)] * g[((i + l - q) % l, k)];
                }
            }
            assert!((est.values()[(i, j)] - v).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn qse_never_worse_than_lse(seed in 0u64..10_000, ns in 1usize..4, nr in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let t: Vec<f64> = times(n, 0.1);
        let f = random(&mut rng, n, ns);
        let a = random(&mut rng, n, nr) + &f * random(&mut rng, ns, nr) + f.map(|v| v * v).columns(0, 1) * random(&mut rng, 1, nr);
        let w = trapezoid_weights(&t);
        let l = lse_fit(&traj(&t, a.clone()), &rec(&t, f.clone())).unwrap();
        let q = qse_fit(&traj(&t, a.clone()), &rec(&t, f.clone())).unwrap();
        let el = weighted_sq(&(lse_estimate(&l, &rec(&t, f.clone())).unwrap().values() - &a), &w);
        let eq = weighted_sq(&(qse_estimate(&q, &rec(&t, f)).unwrap().values() - &a), &w);
        prop_assert!(eq <= el * (1.0 + 1e-12) + 1e-14, "{} > {}", eq, el);
    }

    #[test]
    fn qse_omega_exactly_symmetric(seed in 0u64..10_000, ns in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = times(80, 0.1);
        let f = random(&mut rng, 80, ns);
        let a = random(&mut rng, 80, 2);
        let q = qse_fit(&traj(&t, a), &rec(&t, f)).unwrap();
        for k in 0..ns {
            for m in 0..ns {
                for j in 0..2 {
                    prop_assert_eq!(q.omega(k, m, j).to_bits(), q.omega(m, k, j).to_bits());
                }
            }
        }
    }
}
