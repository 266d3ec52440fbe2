//! Time-indexed text tables: one row per time, first column is time.
//!
//! ```text
//! # free comments
//! # columns: t a1 a2 ...
//! 0e0 1.5e0 -2e-1
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::{self, TextReader};

pub(crate) fn render(comment: &str, columns: &[String], times: &[f64], values: &DMatrix<f64>) -> String {
    let mut out = String::new();
    io::push_comment(&mut out, comment);
    out.push_str("# columns: t");
    for c in columns {
        out.push(' ');
        out.push_str(c);
    }
    out.push('\n');
    for (i, t) in times.iter().enumerate() {
        let _ = write!(out, "{t:e}");
        for j in 0..values.ncols() {
            let _ = write!(out, " {:e}", values[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub(crate) fn write(
    path: &Path,
    comment: &str,
    columns: &[String],
    times: &[f64],
    values: &DMatrix<f64>,
) -> Result<()> {
    io::write_file(path, render(comment, columns, times, values).as_bytes())
}

/// Reads a table written by [`write`]; returns column names (without `t`),
/// times and the value matrix.
pub(crate) fn read(path: &Path) -> Result<(Vec<String>, Vec<f64>, DMatrix<f64>)> {
    let bytes = io::read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        position: format!("byte {}", e.valid_up_to()),
        message: "file is not valid UTF-8".into(),
    })?;
    let columns: Vec<String> = text
        .lines()
        .find_map(|l| l.strip_prefix("# columns:"))
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            position: "header".into(),
            message: "missing '# columns:' line".into(),
        })?
        .split_whitespace()
        .skip(1)
        .map(str::to_string)
        .collect();
    let ncols = columns.len();
    let mut r = TextReader::new(path, text);
    let mut times = Vec::new();
    let mut data = Vec::new();
    while r.peek().is_some() {
        times.push(r.next_f64()?);
        data.extend(r.read_f64s(ncols)?);
    }
    let values = DMatrix::from_row_slice(times.len(), ncols, &data);
    Ok((columns, times, values))
}
