//! The pipeline stages. Each reads its inputs from files, writes its outputs
//! into the output directory and returns the paths written.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flowrecon::calibration::{calibrate, resample_to_nodes};
use flowrecon::collocation::build_collocation;
use flowrecon::estimators::{
    lse_estimate, lse_fit, lsq_estimate, qse_estimate, qse_fit, slse_estimate, slse_fit, LseModel,
};
use flowrecon::metrics::{render_report, ErrorReport, ReportLayout};
use flowrecon::observer::{sliding_window_estimate, SlidingOptions, WindowReport};
use flowrecon::rom::assemble_quadratic_tensor;
use flowrecon::sensors::{add_noise, build_suite, sample_measurements, SensorSuite};
use flowrecon::synth::{make_scenario_with, ScenarioParams};
use flowrecon::{
    compute_pod, CoefficientTrajectory, FileFormat, Grid, MeasurementRecord, PodBasis, RomCoefficients, SnapshotSet,
};
use nalgebra::DVector;

use crate::config::{Method, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::provenance::Provenance;

const TRAINING: &str = "training_snapshots";
const STREAM: &str = "stream_snapshots";
const TRUTH_TRAINING: &str = "truth_training_coefficients.txt";
const TRUTH_STREAM: &str = "truth_stream_coefficients.txt";
const TRUTH_ROM: &str = "truth_rom.txt";
const POD_MODES: &str = "pod_modes";
const POD_BASIS: &str = "pod_basis";
const POD_COEFFS: &str = "pod_coefficients.txt";
const ROM: &str = "rom.txt";
const CALIBRATION: &str = "calibration_report.txt";
const MEAS_TRAINING: &str = "measurements_training.txt";
const MEAS_STREAM: &str = "measurements_stream.txt";
const REPORT: &str = "report.txt";
const REPORT_VALUES: &str = "report_values.txt";

/// Resolved configuration plus where things live.
pub struct Context {
    pub cfg: PipelineConfig,
    /// Directory that relative input paths in the config refer to.
    pub base: PathBuf,
    pub out: PathBuf,
}

fn ext(f: FileFormat) -> &'static str {
    match f {
        FileFormat::TextTable => "txt",
        FileFormat::RawBinary => "bin",
    }
}

/// An input file with the label used in provenance headers.
struct Input {
    label: String,
    path: PathBuf,
}

impl Context {
    fn fmt(&self) -> FileFormat {
        self.cfg.paths.format
    }

    fn with_ext(&self, stem: &str) -> String {
        format!("{stem}.{}", ext(self.fmt()))
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// A stage output that must already exist; names the stage producing it.
    fn upstream(&self, name: &str, producer: &str) -> CliResult<Input> {
        let path = self.output(name);
        if !path.is_file() {
            return Err(CliError::io(format!(
                "missing {}; run `flowrecon {producer}` first",
                path.display()
            )));
        }
        Ok(Input { label: name.to_string(), path })
    }

    /// Snapshot input: the configured external file or the synth output.
    fn snapshots(&self, configured: &Option<PathBuf>, stem: &str) -> CliResult<Input> {
        match configured {
            Some(p) => {
                let path = self.base.join(p);
                if !path.is_file() {
                    return Err(CliError::io(format!("snapshot file {} does not exist", path.display())));
                }
                let label = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                Ok(Input { label, path })
            }
            None => self.upstream(&self.with_ext(stem), "synth"),
        }
    }

    fn provenance(&self, command: &str, inputs: &[&Input]) -> CliResult<Provenance> {
        let mut p = Provenance::new(command);
        for i in inputs {
            p.input(&i.label, &i.path)?;
        }
        Ok(p)
    }

    fn ensure_out(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", self.out.display())))
    }

    fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.output(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn load_basis(&self) -> CliResult<(PodBasis, Input, Input)> {
        let modes = self.upstream(&self.with_ext(POD_MODES), "pod")?;
        let side = self.upstream(&self.with_ext(POD_BASIS), "pod")?;
        let basis = PodBasis::load(&modes.path, &side.path, self.fmt())?;
        Ok((basis, modes, side))
    }
}

pub fn cmd_synth(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let s = ctx
        .cfg
        .synth
        .as_ref()
        .ok_or_else(|| CliError::validation("synth: section missing from the configuration"))?;
    let extents: Vec<(f64, f64)> = s.extents.iter().map(|e| (e[0], e[1])).collect();
    let grid = Arc::new(Grid::uniform(&s.dims, &extents)?);
    let span = (
        s.training.start.min(s.stream.start),
        s.training.end.max(s.stream.end),
    );
    let dt = s.dt.unwrap_or(s.period / 200.0);
    let mut p = ScenarioParams::new(s.n_modes, s.dynamics, span, dt, ctx.cfg.seed);
    p.n_unresolved = s.n_unresolved;
    p.family = s.family;
    p.omega = 2.0 * PI / s.period;
    p.spin_up = 60.0 * s.period;
    if let Some(a) = s.unresolved_amplitude {
        p.unresolved_amplitude = a;
    }
    let sc = make_scenario_with(&grid, &p).map_err(|e| CliError::from(e).context("synthetic scenario"))?;
    ctx.ensure_out()?;
    let mut prov = ctx.provenance("synth", &[])?;
    prov.param("seed", &ctx.cfg.seed).param("synth", s);
    let comment = prov.text();
    let fmt = ctx.fmt();
    let mut written = Vec::new();
    for (stem, truth, smp) in [(TRAINING, TRUTH_TRAINING, &s.training), (STREAM, TRUTH_STREAM, &s.stream)] {
        let t = smp.times();
        let path = ctx.output(&ctx.with_ext(stem));
        sc.snapshots(&t)?.save(&path, fmt, &comment)?;
        written.push(path);
        let path = ctx.output(truth);
        sc.coefficients_at(&t)?.save(&path, &comment)?;
        written.push(path);
    }
    let path = ctx.output(TRUTH_ROM);
    sc.true_rom.save(&path, FileFormat::TextTable, &comment)?;
    written.push(path);
    Ok(written)
}

pub fn cmd_pod(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let input = ctx.snapshots(&ctx.cfg.paths.snapshots, TRAINING)?;
    let set = SnapshotSet::load(&input.path, ctx.fmt())?;
    let basis = compute_pod(&set, ctx.cfg.pod.n_retained)?;
    let defect = basis.orthonormality_defect();
    if defect > 1e-10 {
        log::warn!("POD modes orthonormal only to {defect:e}");
    }
    ctx.ensure_out()?;
    let mut prov = ctx.provenance("pod", &[&input])?;
    prov.param("pod", &ctx.cfg.pod);
    let comment = prov.text();
    let modes = ctx.output(&ctx.with_ext(POD_MODES));
    let side = ctx.output(&ctx.with_ext(POD_BASIS));
    basis.save(&modes, &side, ctx.fmt(), &comment)?;
    let coeffs = ctx.output(POD_COEFFS);
    CoefficientTrajectory::new(set.times().to_vec(), basis.modal_coefficients())?.save(&coeffs, &comment)?;
    Ok(vec![modes, side, coeffs])
}

pub fn cmd_calibrate(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let (basis, modes, side) = ctx.load_basis()?;
    let coeffs_in = ctx.upstream(POD_COEFFS, "pod")?;
    let coeffs = CoefficientTrajectory::load(&coeffs_in.path)?;
    let (t0, t1) = coeffs.span();
    let [w0, w1] = ctx.cfg.calibration.window.unwrap_or([t0, t1]);
    if w0 < t0 || w1 > t1 {
        return Err(CliError::validation(format!(
            "calibration.window: [{w0}, {w1}] leaves the training span [{t0}, {t1}]"
        )));
    }
    let op = build_collocation(w0, w1, ctx.cfg.calibration.n_nodes)?;
    let b = assemble_quadratic_tensor(&basis)?;
    let reference = resample_to_nodes(&coeffs, &op)?;
    let (rom, report) = calibrate(&b, &reference, &op)?;
    let mut prov = ctx.provenance("calibrate", &[&modes, &side, &coeffs_in])?;
    prov.param("calibration", &ctx.cfg.calibration);
    let comment = prov.text();
    let rom_path = ctx.output(ROM);
    rom.save(&rom_path, FileFormat::TextTable, &comment)?;
    let rep_path = ctx.output(CALIBRATION);
    report.save(&rep_path, &comment)?;
    Ok(vec![rom_path, rep_path])
}

fn estimate_path(m: Method) -> String {
    format!("estimate_{}.txt", m.slug())
}

fn telemetry_text(comment: &str, reports: &[WindowReport]) -> String {
    let mut out = String::new();
    for l in comment.lines() {
        let _ = writeln!(out, "# {l}");
    }
    out.push_str("# columns: start end iterations converged objective\n");
    for w in reports {
        let _ = writeln!(
            out,
            "{:e} {:e} {} {} {:e}",
            w.start, w.end, w.iterations, w.converged as u8, w.objective
        );
    }
    out
}

fn noisy(rec: MeasurementRecord, ctx: &Context, salt: u64) -> CliResult<MeasurementRecord> {
    match ctx.cfg.estimators.noise(ctx.cfg.seed.wrapping_add(salt)) {
        Some(n) => Ok(add_noise(&rec, &n)?),
        None => Ok(rec),
    }
}

fn centered(rec: &MeasurementRecord, suite: &SensorSuite) -> CliResult<MeasurementRecord> {
    Ok(rec.centered(suite.ref_offset())?)
}

pub fn cmd_estimate(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    if cfg.sensors.is_empty() {
        return Err(CliError::validation("sensors: at least one sensor is needed for estimation"));
    }
    let (basis, modes, side) = ctx.load_basis()?;
    let coeffs_in = ctx.upstream(POD_COEFFS, "pod")?;
    let methods = &cfg.estimators.methods;
    let needs_rom = methods.iter().any(|m| m.variant().is_some());
    let rom_in = if needs_rom { Some(ctx.upstream(ROM, "calibrate")?) } else { None };
    let train_in = ctx.snapshots(&cfg.paths.snapshots, TRAINING)?;
    let stream_in = ctx.snapshots(&cfg.paths.stream, STREAM)?;
    let rom = rom_in.as_ref().map(|r| RomCoefficients::load(&r.path, FileFormat::TextTable)).transpose()?;
    let coeffs = CoefficientTrajectory::load(&coeffs_in.path)?;
    let train_set = SnapshotSet::load(&train_in.path, ctx.fmt())?;
    let stream_set = SnapshotSet::load(&stream_in.path, ctx.fmt())?;

    let suite = build_suite(&cfg.sensors, &basis)?;
    let train = noisy(sample_measurements(&suite, &train_set, train_set.times())?, ctx, 0)?;
    let stream = noisy(sample_measurements(&suite, &stream_set, stream_set.times())?, ctx, 1)?;
    let train_c = centered(&train, &suite)?;
    let stream_c = centered(&stream, &suite)?;

    let mut inputs: Vec<&Input> = vec![&modes, &side, &coeffs_in];
    if let Some(r) = &rom_in {
        inputs.push(r);
    }
    inputs.push(&train_in);
    inputs.push(&stream_in);
    let mut prov = ctx.provenance("estimate", &inputs)?;
    prov.param("seed", &cfg.seed).param("sensors", &cfg.sensors).param("estimators", &cfg.estimators);
    let comment = prov.text();
    let mut written = Vec::new();
    for (name, rec) in [(MEAS_TRAINING, &train), (MEAS_STREAM, &stream)] {
        let path = ctx.output(name);
        rec.save(&path, &comment)?;
        written.push(path);
    }

    let lse: Option<LseModel> = if methods.iter().any(|m| matches!(m, Method::Lse | Method::KLse)) {
        let m = lse_fit(&coeffs, &train_c).map_err(|e| CliError::from(e).context("LSE fit"))?;
        let path = ctx.output("model_lse.txt");
        m.to_record().save(&path, FileFormat::TextTable, &comment)?;
        written.push(path);
        Some(m)
    } else {
        None
    };

    for &m in methods {
        let mut note = String::new();
        let est = match m {
            Method::Lsq => {
                let (est, op) = lsq_estimate(&suite, &stream)?;
                if let Some(w) = op.warning {
                    note = format!("warning {w}");
                }
                est
            }
            Method::Lse => lse_estimate(lse.as_ref().expect("fitted above"), &stream_c)?,
            Method::Qse => {
                let q = qse_fit(&coeffs, &train_c).map_err(|e| CliError::from(e).context("QSE fit"))?;
                let path = ctx.output("model_qse.txt");
                q.to_record().save(&path, FileFormat::TextTable, &comment)?;
                written.push(path);
                qse_estimate(&q, &stream_c)?
            }
            Method::Slse => {
                let s = slse_fit(&coeffs, &train_c, cfg.estimators.slse_segment)
                    .map_err(|e| CliError::from(e).context("SLSE fit"))?;
                if !s.excluded_bins.is_empty() {
                    note = format!("warning {} frequency bins excluded", s.excluded_bins.len());
                }
                let path = ctx.output("model_slse.txt");
                s.to_record().save(&path, FileFormat::TextTable, &comment)?;
                written.push(path);
                slse_estimate(&s, &stream_c).map_err(|e| CliError::from(e).context("SLSE estimate"))?
            }
            Method::KLsq | Method::KLse => {
                let variant = m.variant().expect("observer method");
                let o = cfg.estimators.observer(m);
                let opts = SlidingOptions {
                    window: o.window,
                    stride: o.stride,
                    n_nodes: o.n_nodes,
                    tol: o.tol,
                    max_iter: o.max_iter,
                    warm_start: o.warm_start,
                    parallel: !o.warm_start,
                };
                let c_r = o.c_r.unwrap_or_else(|| variant.default_c_r());
                let rom = rom.as_ref().expect("loaded above");
                let (est, reports) =
                    sliding_window_estimate(rom, &suite, &stream, variant, lse.as_ref(), c_r, &opts)
                        .map_err(|e| CliError::from(e).context(m.name()))?;
                let failed = reports.iter().filter(|w| !w.converged).count();
                if failed > 0 {
                    log::warn!("{}: {failed} of {} windows did not converge", m.name(), reports.len());
                    note = format!("warning {failed} windows did not converge");
                }
                let path = ctx.output(&format!("observer_{}.txt", m.slug()));
                let mut p = prov.clone();
                p.note(format!("method {}", m.name()));
                ctx.write_text(&format!("observer_{}.txt", m.slug()), &telemetry_text(&p.text(), &reports))?;
                written.push(path);
                est
            }
        };
        let mut p = prov.clone();
        p.note(format!("method {}", m.name()));
        if !note.is_empty() {
            p.note(note);
        }
        let path = ctx.output(&estimate_path(m));
        est.save(&path, &p.text())?;
        written.push(path);
    }
    Ok(written)
}

/// Indices of `times` that appear (exactly) in every estimate.
fn common_times(all: &[CoefficientTrajectory]) -> Vec<f64> {
    let mut t: Vec<f64> = all[0].times().to_vec();
    for e in &all[1..] {
        t.retain(|x| e.times().iter().any(|y| y.to_bits() == x.to_bits()));
    }
    t
}

fn rows_at(tr: &CoefficientTrajectory, times: &[f64]) -> CliResult<CoefficientTrajectory> {
    let rows: Vec<DVector<f64>> = times
        .iter()
        .map(|t| {
            let i = tr.times().iter().position(|y| y.to_bits() == t.to_bits()).expect("common time");
            tr.sample(i)
        })
        .collect();
    Ok(CoefficientTrajectory::from_rows(times.to_vec(), &rows)?)
}

pub fn cmd_report(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let (basis, modes, side) = ctx.load_basis()?;
    let stream_in = ctx.snapshots(&cfg.paths.stream, STREAM)?;
    let mut est_in = Vec::new();
    for &m in &cfg.estimators.methods {
        est_in.push(ctx.upstream(&estimate_path(m), "estimate")?);
    }
    let stream = SnapshotSet::load(&stream_in.path, ctx.fmt())?;
    let estimates: Vec<CoefficientTrajectory> = est_in
        .iter()
        .map(|i| CoefficientTrajectory::load(&i.path))
        .collect::<Result<_, _>>()?;
    let mut times = common_times(&estimates);
    if let Some([a, b]) = cfg.metrics.window {
        times.retain(|&t| t >= a && t <= b);
    }
    if times.len() < 2 {
        return Err(CliError::validation(
            "metrics: fewer than 2 sample times common to every estimate inside the averaging window",
        ));
    }
    let mut fields = Vec::with_capacity(times.len());
    let mut refs = Vec::with_capacity(times.len());
    for &t in &times {
        let f = stream.field_at(t)?;
        refs.push(basis.project(&f)?);
        fields.push(f);
    }
    let reference = CoefficientTrajectory::from_rows(times.clone(), &refs)?;
    let mut reports = Vec::new();
    for (m, est) in cfg.estimators.methods.iter().zip(&estimates) {
        let est = rows_at(est, &times)?;
        reports.push(ErrorReport::evaluate(m.name(), &est, &reference, &fields, &basis)?);
    }
    let mut inputs: Vec<&Input> = vec![&modes, &side, &stream_in];
    inputs.extend(est_in.iter());
    let mut prov = ctx.provenance("report", &inputs)?;
    prov.param("metrics", &cfg.metrics)
        .note(format!("averaging window [{:e}, {:e}] over {} samples", times[0], times[times.len() - 1], times.len()));
    let comment = prov.text();
    let mut text = String::new();
    for l in comment.lines() {
        let _ = writeln!(text, "# {l}");
    }
    text.push_str("\nmodal coefficient errors e(a_i) in %\n");
    text.push_str(&render_report(&reports, ReportLayout::CoefficientTable));
    text.push_str("\nvelocity errors in %: total, fluctuating, projected on the retained modes\n");
    text.push_str(&render_report(&reports, ReportLayout::ComponentTable));
    let mut kv = String::new();
    for l in comment.lines() {
        let _ = writeln!(kv, "# {l}");
    }
    for r in &reports {
        kv.push_str(&r.to_key_values());
    }
    let a = ctx.write_text(REPORT, &text)?;
    let b = ctx.write_text(REPORT_VALUES, &kv)?;
    Ok(vec![a, b])
}

/// Config file directory, used to resolve relative input paths.
pub fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}
