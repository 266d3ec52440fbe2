//! Self-describing records of named arrays, used to persist ROM
//! coefficients, fitted estimator models and ground-truth sidecars.
//!
//! Text layout:
//!
//! ```text
//! # optional comments
//! record <kind>
//! array <name> <ndim> <shape...>
//! <values, row-major>
//! ...
//! end
//! ```
//!
//! The binary layout carries the same content after the magic `FRRECv01`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::{self, BinReader, BinWriter, FileFormat, TextReader};

const MAGIC: &[u8; 8] = b"FRRECv01";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: String,
    pub entries: Vec<Entry>,
}

impl Record {
    pub fn new(kind: impl Into<String>) -> Self {
        Record {
            kind: kind.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> &mut Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.entries.push(Entry {
            name: name.to_string(),
            shape,
            data,
        });
        self
    }

    pub fn push_scalar(&mut self, name: &str, v: f64) -> &mut Self {
        self.push(name, vec![], vec![v])
    }

    pub fn push_vector(&mut self, name: &str, v: &[f64]) -> &mut Self {
        self.push(name, vec![v.len()], v.to_vec())
    }

    /// Stores a matrix row-major.
    pub fn push_matrix(&mut self, name: &str, m: &DMatrix<f64>) -> &mut Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        self.push(name, vec![m.nrows(), m.ncols()], data)
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::invalid(format!("record '{}' has no entry '{name}'", self.kind)))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let e = self.get(name)?;
        if e.data.len() != 1 {
            return Err(Error::invalid(format!("entry '{name}' is not a scalar")));
        }
        Ok(e.data[0])
    }

    pub fn vector(&self, name: &str) -> Result<DVector<f64>> {
        let e = self.get(name)?;
        if e.shape.len() != 1 {
            return Err(Error::invalid(format!("entry '{name}' is not a vector")));
        }
        Ok(DVector::from_vec(e.data.clone()))
    }

    pub fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let e = self.get(name)?;
        if e.shape.len() != 2 {
            return Err(Error::invalid(format!("entry '{name}' is not a matrix")));
        }
        Ok(DMatrix::from_row_slice(e.shape[0], e.shape[1], &e.data))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(format!(
                "expected a '{kind}' record, found '{}'",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_text(&self, comment: &str) -> String {
        let mut out = String::new();
        io::push_comment(&mut out, comment);
        out.push_str(&format!("record {}\n", self.kind));
        for e in &self.entries {
            out.push_str(&format!("array {} {}", e.name, e.shape.len()));
            for s in &e.shape {
                out.push_str(&format!(" {s}"));
            }
            out.push('\n');
            io::push_values(&mut out, &e.data);
        }
        out.push_str("end\n");
        out
    }

    pub fn to_binary(&self, comment: &str) -> Vec<u8> {
        let mut w = BinWriter::default();
        w.buf.extend_from_slice(MAGIC);
        w.string(comment);
        w.string(&self.kind);
        w.usize(self.entries.len());
        for e in &self.entries {
            w.string(&e.name);
            w.usize(e.shape.len());
            for &s in &e.shape {
                w.usize(s);
            }
            w.f64s(&e.data);
        }
        w.buf
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
                Self::parse_text(path, text)
            }
            FileFormat::RawBinary => Self::parse_binary(path, &bytes),
        }
    }

    pub(crate) fn parse_text(path: &Path, text: &str) -> Result<Self> {
        let mut r = TextReader::new(path, text);
        r.expect("record")?;
        let kind = r.next_token()?.to_string();
        let mut rec = Record::new(kind);
        loop {
            match r.next_token()? {
                "end" => break,
                "array" => {
                    let name = r.next_token()?.to_string();
                    let ndim = r.next_usize()?;
                    let shape: Vec<usize> =
                        (0..ndim).map(|_| r.next_usize()).collect::<Result<_>>()?;
                    let data = r.read_f64s(shape.iter().product())?;
                    rec.entries.push(Entry { name, shape, data });
                }
                other => return Err(r.error(format!("expected 'array' or 'end', found '{other}'"))),
            }
        }
        r.expect_end()?;
        Ok(rec)
    }

    pub(crate) fn parse_binary(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::new(path, bytes);
        r.expect_magic(MAGIC)?;
        let _comment = r.read_string()?;
        let mut rec = Record::new(r.read_string()?);
        let n = r.read_usize()?;
        for _ in 0..n {
            let name = r.read_string()?;
            let ndim = r.read_usize()?;
            let shape: Vec<usize> = (0..ndim).map(|_| r.read_usize()).collect::<Result<_>>()?;
            let data = r.read_f64s(shape.iter().product())?;
            rec.entries.push(Entry { name, shape, data });
        }
        r.expect_end()?;
        Ok(rec)
    }
}
