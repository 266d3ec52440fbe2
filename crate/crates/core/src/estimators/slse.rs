use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::measurement::MeasurementRecord;
use crate::record::Record;
use crate::trajectory::CoefficientTrajectory;

/// Per-bin transfer matrices `Γ̂_kj(ν)` between sensor and coefficient
/// spectra for blocks of `training_length` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SlseModel {
    /// `Γ̂` at index `(bin·N_s + k)·N_r + j`.
    pub gamma_hat: Vec<Complex64>,
    /// Bin frequencies in cycles per unit time (negative above Nyquist).
    pub frequencies: Vec<f64>,
    /// Block length in samples.
    pub training_length: usize,
    pub dt: f64,
    /// Bins whose cross-spectral matrix was singular; their `Γ̂` is zero.
    pub excluded_bins: Vec<usize>,
    n_sensors: usize,
    n_modes: usize,
}

/// Relative threshold on the smallest eigenvalue of a bin's cross-spectral
/// matrix, measured against the largest trace over all bins.
const BIN_TOL: f64 = 1e-12;

fn sample_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::invalid("spectral estimation needs at least 2 samples"));
    }
    let h = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::invalid("spectral estimation needs uniformly sampled records"));
    }
    Ok(h)
}

fn bin_frequencies(l: usize, dt: f64) -> Vec<f64> {
    (0..l)
        .map(|b| {
            let kb = if b <= l / 2 { b as f64 } else { b as f64 - l as f64 };
            kb / (l as f64 * dt)
        })
        .collect()
}

/// Column-wise DFTs of rows `start..start + l`.
fn block_spectra(planner: &mut FftPlanner<f64>, data: &DMatrix<f64>, start: usize, l: usize) -> Vec<Vec<Complex64>> {
    let fft = planner.plan_fft_forward(l);
    (0..data.ncols())
        .map(|c| {
            let mut buf: Vec<Complex64> = (0..l).map(|i| Complex64::new(data[(start + i, c)], 0.0)).collect();
            fft.process(&mut buf);
            buf
        })
        .collect()
}

/// Segment starts with 50% overlap covering `n` samples in blocks of `l`.
fn segment_starts(n: usize, l: usize) -> Vec<usize> {
    let hop = (l / 2).max(1);
    let mut s: Vec<usize> = (0..).map(|i| i * hop).take_while(|&s| s + l <= n).collect();
    if let Some(&last) = s.last() {
        if last + l < n {
            s.push(n - l);
        }
    }
    s
}

/// Default block length: the largest even length giving at least four
/// half-overlapping segments.
pub(crate) fn default_length(n: usize) -> usize {
    let l = (2 * n) / 5;
    l - l % 2
}

/// Fits `Γ̂` by solving `⟨f̂ f̂ᴴ⟩ Γ̂ = ⟨f̂ α̂ᴴ⟩`-type normal equations per bin,
/// with spectra averaged over half-overlapping segments.
pub fn slse_fit(
    reference: &CoefficientTrajectory,
    record: &MeasurementRecord,
    segment_length: Option<usize>,
) -> Result<SlseModel> {
    super::check_paired(reference, record)?;
    let dt = sample_step(record.times())?;
    let n = record.n_times();
    let l = segment_length.unwrap_or_else(|| default_length(n));
    if l < 2 || l > n {
        return Err(Error::invalid(format!(
            "segment length {l} invalid for a record of {n} samples"
        )));
    }
    let starts = segment_starts(n, l);
    let (ns, nr) = (record.n_sensors(), reference.n_modes());
    let mut sff = vec![DMatrix::<Complex64>::zeros(ns, ns); l];
    let mut sfa = vec![DMatrix::<Complex64>::zeros(ns, nr); l];
    let mut planner = FftPlanner::new();
    for &s in &starts {
        let fh = block_spectra(&mut planner, record.values(), s, l);
        let ah = block_spectra(&mut planner, reference.values(), s, l);
        for b in 0..l {
            for k in 0..ns {
                for m in 0..ns {
                    sff[b][(m, k)] += fh[m][b] * fh[k][b].conj();
                }
                for j in 0..nr {
                    sfa[b][(k, j)] += fh[k][b].conj() * ah[j][b];
                }
            }
        }
    }
    let scale = sff
        .iter()
        .map(|m| m.diagonal().iter().map(|z| z.re).sum::<f64>())
        .fold(0.0f64, f64::max);
    let mut gamma = vec![Complex64::new(0.0, 0.0); l * ns * nr];
    let mut excluded = Vec::new();
    // Solve the non-negative bins and mirror the rest by conjugation so the
    // estimate of a real signal stays real.
    for b in 0..=l / 2 {
        let herm = (&sff[b] + sff[b].adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.clone().symmetric_eigen();
        let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
        if !(scale > 0.0) || lmin <= BIN_TOL * scale {
            excluded.push(b);
            if b != 0 && 2 * b != l {
                excluded.push(l - b);
            }
            continue;
        }
        // ⟨f̂_m f̂_k*⟩ Γ̂_mj summed over m equals ⟨f̂_k* α̂_j⟩: the system matrix
        // is the transpose of sff.
        let sol = herm
            .transpose()
            .lu()
            .solve(&sfa[b])
            .ok_or_else(|| Error::invalid(format!("bin {b} solve failed")))?;
        for k in 0..ns {
            for j in 0..nr {
                let g = sol[(k, j)];
                gamma[(b * ns + k) * nr + j] = g;
                if b != 0 && 2 * b != l {
                    gamma[((l - b) * ns + k) * nr + j] = g.conj();
                }
            }
        }
    }
    excluded.sort_unstable();
    if !excluded.is_empty() {
        log::warn!(
            "SLSE: {} of {l} frequency bins have a singular cross-spectral matrix and were set to zero",
            excluded.len()
        );
    }
    Ok(SlseModel {
        gamma_hat: gamma,
        frequencies: bin_frequencies(l, dt),
        training_length: l,
        dt,
        excluded_bins: excluded,
        n_sensors: ns,
        n_modes: nr,
    })
}

impl SlseModel {
    pub fn gamma(&self, bin: usize, k: usize, j: usize) -> Complex64 {
        self.gamma_hat[(bin * self.n_sensors + k) * self.n_modes + j]
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Estimates one block of exactly `training_length` samples starting at
    /// `start`; returns the real part and the largest imaginary residue.
    fn estimate_block(&self, planner: &mut FftPlanner<f64>, f: &DMatrix<f64>, start: usize) -> (DMatrix<f64>, f64) {
        let l = self.training_length;
        let fh = block_spectra(planner, f, start, l);
        let ifft = planner.plan_fft_inverse(l);
        let mut out = DMatrix::zeros(l, self.n_modes);
        let mut imag = 0.0f64;
        for j in 0..self.n_modes {
            let mut buf: Vec<Complex64> = (0..l)
                .map(|b| (0..self.n_sensors).map(|k| self.gamma(b, k, j) * fh[k][b]).sum())
                .collect();
            ifft.process(&mut buf);
            for (i, z) in buf.iter().enumerate() {
                out[(i, j)] = z.re / l as f64;
                imag = imag.max((z.im / l as f64).abs());
            }
        }
        (out, imag)
    }

    pub fn to_record(&self) -> Record {
        let l = self.training_length;
        let shape = vec![l, self.n_sensors, self.n_modes];
        let mut r = Record::new("slse-model");
        r.push("gamma_re", shape.clone(), self.gamma_hat.iter().map(|z| z.re).collect())
            .push("gamma_im", shape, self.gamma_hat.iter().map(|z| z.im).collect())
            .push_vector("frequencies", &self.frequencies)
            .push_scalar("dt", self.dt)
            .push_vector(
                "excluded_bins",
                &self.excluded_bins.iter().map(|&b| b as f64).collect::<Vec<_>>(),
            );
        r
    }

    pub fn from_record(r: &Record) -> Result<Self> {
        r.expect_kind("slse-model")?;
        let re = r.get("gamma_re")?;
        let im = r.get("gamma_im")?;
        if re.shape.len() != 3 || re.shape != im.shape {
            return Err(Error::invalid("slse-model gamma arrays malformed"));
        }
        Ok(SlseModel {
            gamma_hat: re.data.iter().zip(&im.data).map(|(&a, &b)| Complex64::new(a, b)).collect(),
            frequencies: r.vector("frequencies")?.iter().copied().collect(),
            training_length: re.shape[0],
            dt: r.scalar("dt")?,
            excluded_bins: r.vector("excluded_bins")?.iter().map(|&b| b as usize).collect(),
            n_sensors: re.shape[1],
            n_modes: re.shape[2],
        })
    }
}

/// Applies `Γ̂` block by block. Records longer than the training length are
/// covered by half-overlapping blocks; each sample is taken from the block
/// in which it sits closest to the centre.
pub fn slse_estimate(model: &SlseModel, record: &MeasurementRecord) -> Result<CoefficientTrajectory> {
    let (est, _) = slse_estimate_with_residue(model, record)?;
    Ok(est)
}

/// Like [`slse_estimate`], also returning the largest imaginary residue of
/// the inverse transforms.
pub fn slse_estimate_with_residue(model: &SlseModel, record: &MeasurementRecord) -> Result<(CoefficientTrajectory, f64)> {
    if record.n_sensors() != model.n_sensors {
        return Err(Error::invalid(format!(
            "record has {} sensors, model {}",
            record.n_sensors(),
            model.n_sensors
        )));
    }
    let dt = sample_step(record.times())?;
    if (dt - model.dt).abs() > 1e-9 * model.dt {
        return Err(Error::invalid(format!(
            "record sampled every {dt}, model trained at {}",
            model.dt
        )));
    }
    let n = record.n_times();
    let l = model.training_length;
    if n < l {
        return Err(Error::invalid(format!(
            "record of {n} samples shorter than the training length {l}"
        )));
    }
    let starts = segment_starts(n, l);
    let mut planner = FftPlanner::new();
    let blocks: Vec<(DMatrix<f64>, f64)> = starts
        .iter()
        .map(|&s| model.estimate_block(&mut planner, record.values(), s))
        .collect();
    let residue = blocks.iter().fold(0.0f64, |a, b| a.max(b.1));
    let mut values = DMatrix::zeros(n, model.n_modes);
    for i in 0..n {
        let (bi, s) = starts
            .iter()
            .enumerate()
            .filter(|(_, &s)| i >= s && i < s + l)
            .min_by(|(_, &a), (_, &b)| {
                let da = (2 * i + 1).abs_diff(2 * a + l);
                let db = (2 * i + 1).abs_diff(2 * b + l);
                da.cmp(&db)
            })
            .map(|(bi, &s)| (bi, s))
            .expect("blocks cover the record");
        values.set_row(i, &blocks[bi].0.row(i - s));
    }
    Ok((super::trajectory(record, values)?, residue))
}

/// Circular-convolution kernel `k_kj[n] = IDFT(Γ̂_kj)[n]`.
pub fn slse_kernel(model: &SlseModel) -> Vec<DMatrix<f64>> {
    let l = model.training_length;
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(l);
    let mut out = vec![DMatrix::zeros(model.n_sensors, model.n_modes); l];
    for k in 0..model.n_sensors {
        for j in 0..model.n_modes {
            let mut buf: Vec<Complex64> = (0..l).map(|b| model.gamma(b, k, j)).collect();
            ifft.process(&mut buf);
            for (i, z) in buf.iter().enumerate() {
                out[i][(k, j)] = z.re / l as f64;
            }
        }
    }
    out
}
