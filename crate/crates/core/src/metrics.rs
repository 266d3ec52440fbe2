//! Relative L² errors of estimated coefficients and fields, and the report
//! tables built from them.
//!
//! All errors are percentages `100 · ‖est − ref‖ / ‖ref‖` with trapezoidal
//! time quadrature over the compared samples. Field errors take the spatial
//! L² norm of one velocity component per snapshot, then the time L² norm of
//! that scalar. A channel whose reference norm vanishes is reported as
//! undefined (`None`).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::interp::{Interpolation, DEFAULT_RATIONAL_DEGREE};
use crate::linalg::trapezoid_weights;
use crate::par;
use crate::pod::PodBasis;
use crate::trajectory::CoefficientTrajectory;

fn time_weights(times: &[f64]) -> Vec<f64> {
    if times.len() == 1 {
        vec![1.0]
    } else {
        trapezoid_weights(times)
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 && num.is_finite() && den.is_finite() {
        Some(100.0 * (num / den).sqrt())
    } else {
        None
    }
}

/// Per-mode `e(a_i)`. The estimate is interpolated onto the reference times
/// unless both share them already.
pub fn coefficient_error(
    estimated: &CoefficientTrajectory,
    reference: &CoefficientTrajectory,
) -> Result<Vec<Option<f64>>> {
    if estimated.n_modes() != reference.n_modes() {
        return Err(Error::invalid(format!(
            "estimate has {} modes, reference {}",
            estimated.n_modes(),
            reference.n_modes()
        )));
    }
    let same = estimated.times().len() == reference.times().len()
        && estimated
            .times()
            .iter()
            .zip(reference.times())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    let est = if same {
        estimated.clone()
    } else {
        estimated.resample(reference.times(), Interpolation::Rational(DEFAULT_RATIONAL_DEGREE))?
    };
    let w = time_weights(reference.times());
    Ok(par::map_range(reference.n_modes(), |j| {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, wi) in w.iter().enumerate() {
            let r = reference.values()[(i, j)];
            let d = est.values()[(i, j)] - r;
            num += wi * d * d;
            den += wi * r * r;
        }
        ratio(num, den)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldErrorMode {
    Total,
    Fluctuating,
    PodProjected,
}

fn component_sq(f: &VectorField, c: usize) -> f64 {
    let w = f.grid().weights();
    f.component(c).iter().zip(w).map(|(v, w)| w * v * v).sum()
}

fn component_diff_sq(a: &VectorField, b: &VectorField, c: usize) -> f64 {
    let w = a.grid().weights();
    a.component(c)
        .iter()
        .zip(b.component(c))
        .zip(w)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum()
}

/// Per-component relative error of a sequence of fields sampled at `times`.
pub fn field_error(
    times: &[f64],
    estimated: &[VectorField],
    reference: &[VectorField],
    mode: FieldErrorMode,
    basis: &PodBasis,
) -> Result<Vec<Option<f64>>> {
    if estimated.len() != times.len() || reference.len() != times.len() || times.is_empty() {
        return Err(Error::invalid(format!(
            "{} estimated and {} reference fields for {} times",
            estimated.len(),
            reference.len(),
            times.len()
        )));
    }
    let grid = basis.grid();
    for f in estimated.iter().chain(reference) {
        f.grid().check_same(grid)?;
    }
    let nc = grid.n_axes();
    let per_time: Vec<(Vec<f64>, Vec<f64>)> = par::try_map_range(times.len(), |i| {
        let (e, r) = match mode {
            FieldErrorMode::Total => (estimated[i].clone(), reference[i].clone()),
            FieldErrorMode::Fluctuating => (
                estimated[i].sub(basis.reference())?,
                reference[i].sub(basis.reference())?,
            ),
            FieldErrorMode::PodProjected => {
                let a: Vec<f64> = basis.project(&reference[i])?.iter().copied().collect();
                (estimated[i].clone(), basis.reconstruct(&a)?)
            }
        };
        Ok::<_, Error>((
            (0..nc).map(|c| component_diff_sq(&e, &r, c)).collect(),
            (0..nc).map(|c| component_sq(&r, c)).collect(),
        ))
    })?;
    let w = time_weights(times);
    Ok((0..nc)
        .map(|c| {
            let num: f64 = per_time.iter().zip(&w).map(|(p, w)| w * p.0[c]).sum();
            let den: f64 = per_time.iter().zip(&w).map(|(p, w)| w * p.1[c]).sum();
            ratio(num, den)
        })
        .collect())
}

/// Error summary of one estimation method.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub method: String,
    pub per_coefficient: Vec<Option<f64>>,
    pub per_component: Vec<Option<f64>>,
    pub fluctuating: Vec<Option<f64>>,
    pub projected: Vec<Option<f64>>,
    pub averaging_window: (f64, f64),
}

impl ErrorReport {
    /// Fills every table of the report from reconstructed fields.
    pub fn evaluate(
        method: &str,
        estimated: &CoefficientTrajectory,
        reference: &CoefficientTrajectory,
        reference_fields: &[VectorField],
        basis: &PodBasis,
    ) -> Result<Self> {
        let per_coefficient = coefficient_error(estimated, reference)?;
        let times = reference.times();
        let est = estimated.resample(times, Interpolation::Rational(DEFAULT_RATIONAL_DEGREE))?;
        let fields = par::try_map_range(times.len(), |i| {
            let a: Vec<f64> = est.sample(i).iter().copied().collect();
            basis.reconstruct(&a)
        })?;
        let run = |m| field_error(times, &fields, reference_fields, m, basis);
        Ok(ErrorReport {
            method: method.to_string(),
            per_coefficient,
            per_component: run(FieldErrorMode::Total)?,
            fluctuating: run(FieldErrorMode::Fluctuating)?,
            projected: run(FieldErrorMode::PodProjected)?,
            averaging_window: reference.span(),
        })
    }

    /// Mean of the defined per-coefficient errors.
    pub fn mean_coefficient_error(&self) -> Option<f64> {
        let v: Vec<f64> = self.per_coefficient.iter().flatten().copied().collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }

    /// `key = value` lines for every entry; undefined entries read `nan`.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let m = &self.method;
        let _ = writeln!(out, "{m}.window_start = {:e}", self.averaging_window.0);
        let _ = writeln!(out, "{m}.window_end = {:e}", self.averaging_window.1);
        let groups: [(&str, &Vec<Option<f64>>); 4] = [
            ("coefficient", &self.per_coefficient),
            ("component", &self.per_component),
            ("fluctuating", &self.fluctuating),
            ("projected", &self.projected),
        ];
        for (name, vals) in groups {
            for (i, v) in vals.iter().enumerate() {
                let _ = writeln!(out, "{m}.{name}.{} = {}", i + 1, fmt_kv(*v));
            }
        }
        out
    }
}

fn fmt_kv(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"))
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportLayout {
    CoefficientTable,
    ComponentTable,
}

const COMPONENT_NAMES: [&str; 3] = ["U", "V", "W"];

/// Renders reports as an aligned text table, one row per method.
pub fn render_report(reports: &[ErrorReport], layout: ReportLayout) -> String {
    let mut header = vec!["method".to_string()];
    match layout {
        ReportLayout::CoefficientTable => {
            let n = reports.iter().map(|r| r.per_coefficient.len()).max().unwrap_or(0);
            header.extend((1..=n).map(|i| format!("e(a{i})")));
        }
        ReportLayout::ComponentTable => {
            let n = reports.iter().map(|r| r.per_component.len()).max().unwrap_or(0);
            for prefix in ["", "'", "_f"] {
                for c in COMPONENT_NAMES.iter().take(n) {
                    header.push(match prefix {
                        "'" => format!("e({c}')"),
                        "_f" => format!("e({c}_f)"),
                        _ => format!("e({c})"),
                    });
                }
            }
        }
    }
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.method.clone()];
        match layout {
            ReportLayout::CoefficientTable => row.extend(r.per_coefficient.iter().map(|v| fmt_pct(*v))),
            ReportLayout::ComponentTable => {
                for group in [&r.per_component, &r.fluctuating, &r.projected] {
                    row.extend(group.iter().map(|v| fmt_pct(*v)));
                }
            }
        }
        rows.push(row);
    }
    let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
