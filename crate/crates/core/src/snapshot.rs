//! Time-stamped snapshot ensembles and their file formats.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, VectorField};
use crate::io::{self, BinReader, BinWriter, FileFormat, TextReader};

const MAGIC: &[u8; 8] = b"FRSNAPv1";

/// Snapshots `U^(i) = u(x, t_i)` plus a reference field `ū`.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    grid: Arc<Grid>,
    times: Vec<f64>,
    fields: Vec<VectorField>,
    reference: VectorField,
}

pub(crate) fn check_increasing(times: &[f64], what: &str) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid(format!("{what} contain non-finite values")));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "{what} not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Pointwise arithmetic mean of a set of fields.
pub fn mean_field(fields: &[VectorField]) -> Result<VectorField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::invalid("mean of an empty field set"))?;
    let mut acc = VectorField::zeros(first.grid().clone());
    for f in fields {
        acc.axpy(1.0, f)?;
    }
    acc.scale(1.0 / fields.len() as f64);
    Ok(acc)
}

impl SnapshotSet {
    /// Validates and assembles a snapshot set. The reference defaults to the
    /// time mean of the snapshots.
    pub fn new(
        times: Vec<f64>,
        fields: Vec<VectorField>,
        reference: Option<VectorField>,
    ) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 snapshots, got {}",
                fields.len()
            )));
        }
        if times.len() != fields.len() {
            return Err(Error::invalid(format!(
                "{} times for {} snapshots",
                times.len(),
                fields.len()
            )));
        }
        check_increasing(&times, "snapshot times")?;
        let grid = fields[0].grid().clone();
        for f in &fields[1..] {
            grid.check_same(f.grid())?;
        }
        let reference = match reference {
            Some(r) => {
                grid.check_same(r.grid())?;
                r
            }
            None => mean_field(&fields)?,
        };
        Ok(SnapshotSet {
            grid,
            times,
            fields,
            reference,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn reference(&self) -> &VectorField {
        &self.reference
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Replaces the reference field.
    pub fn with_reference(mut self, reference: VectorField) -> Result<Self> {
        self.grid.check_same(reference.grid())?;
        self.reference = reference;
        Ok(self)
    }

    /// Snapshot fluctuations `U^(i) − ū`.
    pub fn fluctuations(&self) -> Result<Vec<VectorField>> {
        self.fields.iter().map(|f| f.sub(&self.reference)).collect()
    }

    /// Field at time `t`, linearly interpolated between bracketing snapshots.
    pub fn field_at(&self, t: f64) -> Result<VectorField> {
        let (i, theta) = self.bracket(t)?;
        if theta == 0.0 {
            return Ok(self.fields[i].clone());
        }
        let mut f = self.fields[i].scaled(1.0 - theta);
        f.axpy(theta, &self.fields[i + 1])?;
        Ok(f)
    }

    /// Index `i` and fraction `θ` with `t = (1−θ) t_i + θ t_{i+1}`.
    pub(crate) fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        bracket(&self.times, t)
    }

    pub fn save(&self, path: &Path, format: FileFormat, comment: &str) -> Result<()> {
        let bytes = match format {
            FileFormat::TextTable => self.to_text(comment).into_bytes(),
            FileFormat::RawBinary => self.to_binary(comment),
        };
        io::write_file(path, &bytes)
    }

    pub fn load(path: &Path, format: FileFormat) -> Result<Self> {
        let bytes = io::read_file(path)?;
        match format {
            FileFormat::TextTable => {
                let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    position: format!("byte {}", e.valid_up_to()),
                    message: "file is not valid UTF-8".into(),
                })?;
                Self::from_text(path, text)
            }
            FileFormat::RawBinary => Self::from_binary(path, &bytes),
        }
    }

    fn header_words(&self) -> Vec<usize> {
        let mut h = vec![self.grid.n_axes()];
        h.extend_from_slice(self.grid.dims());
        h.extend([self.grid.n_axes(), self.fields.len(), 1]);
        h
    }

    fn to_text(&self, comment: &str) -> String {
        let mut out = String::new();
        io::push_comment(&mut out, comment);
        out.push_str("snapshots");
        for w in self.header_words() {
            out.push_str(&format!(" {w}"));
        }
        out.push('\n');
        for axis in 0..self.grid.n_axes() {
            out.push_str(&format!("# coords axis {axis}\n"));
            io::push_values(&mut out, self.grid.coords(axis));
        }
        out.push_str("# times\n");
        io::push_values(&mut out, &self.times);
        for (i, f) in self.fields.iter().chain([&self.reference]).enumerate() {
            if i == self.fields.len() {
                out.push_str("# reference\n");
            } else {
                out.push_str(&format!("# snapshot {i}\n"));
            }
            for c in f.components() {
                io::push_values(&mut out, c);
            }
        }
        out
    }

    fn to_binary(&self, comment: &str) -> Vec<u8> {
        let mut w = BinWriter::default();
        w.buf.extend_from_slice(MAGIC);
        w.string(comment);
        for h in self.header_words() {
            w.usize(h);
        }
        for axis in 0..self.grid.n_axes() {
            w.f64s(self.grid.coords(axis));
        }
        w.f64s(&self.times);
        for f in self.fields.iter().chain([&self.reference]) {
            for c in f.components() {
                w.f64s(c);
            }
        }
        w.buf
    }

    fn from_text(path: &Path, text: &str) -> Result<Self> {
        let mut r = TextReader::new(path, text);
        r.expect("snapshots")?;
        let n_axes = r.next_usize()?;
        if !(2..=3).contains(&n_axes) {
            return Err(r.error(format!("n_axes must be 2 or 3, got {n_axes}")));
        }
        let dims: Vec<usize> = (0..n_axes).map(|_| r.next_usize()).collect::<Result<_>>()?;
        let n_comp = r.next_usize()?;
        let n_snap = r.next_usize()?;
        let has_ref = r.next_usize()?;
        if n_comp != n_axes {
            return Err(r.error(format!("{n_comp} components on a {n_axes}-axis grid")));
        }
        if has_ref > 1 {
            return Err(r.error("has_reference flag must be 0 or 1"));
        }
        let coords: Vec<Vec<f64>> = dims.iter().map(|&n| r.read_f64s(n)).collect::<Result<_>>()?;
        let grid = Arc::new(Grid::new(coords).map_err(|e| r.error(e.to_string()))?);
        let times = r.read_f64s(n_snap)?;
        check_increasing(&times, "snapshot times").map_err(|e| r.error(e.to_string()))?;
        let n_pts = grid.n_points();
        let read_field = |r: &mut TextReader| -> Result<VectorField> {
            let comps = (0..n_comp).map(|_| r.read_f64s(n_pts)).collect::<Result<_>>()?;
            VectorField::new(grid.clone(), comps)
        };
        let fields = (0..n_snap).map(|_| read_field(&mut r)).collect::<Result<Vec<_>>>()?;
        let reference = if has_ref == 1 { Some(read_field(&mut r)?) } else { None };
        r.expect_end()?;
        SnapshotSet::new(times, fields, reference).map_err(|e| r.error(e.to_string()))
    }

    fn from_binary(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::new(path, bytes);
        r.expect_magic(MAGIC)?;
        let _comment = r.read_string()?;
        let n_axes = r.read_usize()?;
        if !(2..=3).contains(&n_axes) {
            return Err(r.error(format!("n_axes must be 2 or 3, got {n_axes}")));
        }
        let dims: Vec<usize> = (0..n_axes).map(|_| r.read_usize()).collect::<Result<_>>()?;
        let n_comp = r.read_usize()?;
        let n_snap = r.read_usize()?;
        let has_ref = r.read_usize()?;
        if n_comp != n_axes {
            return Err(r.error(format!("{n_comp} components on a {n_axes}-axis grid")));
        }
        if has_ref > 1 {
            return Err(r.error("has_reference flag must be 0 or 1"));
        }
        let coords: Vec<Vec<f64>> = dims.iter().map(|&n| r.read_f64s(n)).collect::<Result<_>>()?;
        let grid = Arc::new(Grid::new(coords).map_err(|e| r.error(e.to_string()))?);
        let times = r.read_f64s(n_snap)?;
        check_increasing(&times, "snapshot times").map_err(|e| r.error(e.to_string()))?;
        let n_pts = grid.n_points();
        let read_field = |r: &mut BinReader| -> Result<VectorField> {
            let comps = (0..n_comp).map(|_| r.read_f64s(n_pts)).collect::<Result<_>>()?;
            VectorField::new(grid.clone(), comps)
        };
        let fields = (0..n_snap).map(|_| read_field(&mut r)).collect::<Result<Vec<_>>>()?;
        let reference = if has_ref == 1 { Some(read_field(&mut r)?) } else { None };
        r.expect_end()?;
        SnapshotSet::new(times, fields, reference).map_err(|e| r.error(e.to_string()))
    }
}

/// Index `i` and fraction `θ ∈ [0, 1)` locating `t` in increasing `times`;
/// `θ = 0` exactly when `t` coincides with a sample.
pub(crate) fn bracket(times: &[f64], t: f64) -> Result<(usize, f64)> {
    let n = times.len();
    let (start, end) = (times[0], times[n - 1]);
    if !(t >= start && t <= end) {
        return Err(Error::Extrapolation { time: t, start, end });
    }
    let i = times.partition_point(|&x| x <= t);
    if i == 0 {
        return Ok((0, 0.0));
    }
    let i = i - 1;
    if times[i] == t || i == n - 1 {
        return Ok((i, 0.0));
    }
    Ok((i, (t - times[i]) / (times[i + 1] - times[i])))
}
