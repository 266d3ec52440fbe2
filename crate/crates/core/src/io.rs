//! Low-level readers and writers shared by the file formats.
//!
//! Text files are whitespace-delimited numbers with `#` comments. Binary
//! files are little-endian: an 8-byte magic, a length-prefixed UTF-8 comment
//! block, then u64 header words and f64 payload.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FileFormat {
    #[default]
    #[serde(alias = "text")]
    TextTable,
    #[serde(alias = "binary")]
    RawBinary,
}

impl FromStr for FileFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "text-table" => Ok(FileFormat::TextTable),
            "binary" | "raw-binary" => Ok(FileFormat::RawBinary),
            other => Err(Error::invalid(format!("unknown file format '{other}'"))),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `# ` prefixed comment lines.
pub(crate) fn push_comment(out: &mut String, comment: &str) {
    for line in comment.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
}

/// Appends values on one line using the shortest round-trip representation.
pub(crate) fn push_values(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

/// Token stream over a text file that tracks line numbers.
pub(crate) struct TextReader<'a> {
    path: PathBuf,
    tokens: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> TextReader<'a> {
    pub fn new(path: &Path, text: &'a str) -> Self {
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(|t| (lineno + 1, t)));
        }
        TextReader {
            path: path.to_path_buf(),
            tokens,
            pos: 0,
        }
    }

    fn position(&self) -> String {
        match self.tokens.get(self.pos) {
            Some((line, _)) => format!("line {line}"),
            None => match self.tokens.last() {
                Some((line, _)) => format!("end of file after line {line}"),
                None => "start of empty file".to_string(),
            },
        }
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            position: self.position(),
            message: message.into(),
        }
    }

    pub fn next_token(&mut self) -> Result<&'a str> {
        match self.tokens.get(self.pos) {
            Some(&(_, t)) => {
                self.pos += 1;
                Ok(t)
            }
            None => Err(self.error("unexpected end of file")),
        }
    }

    pub fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|&(_, t)| t)
    }

    pub fn expect(&mut self, keyword: &str) -> Result<()> {
        let t = self.next_token()?;
        if t != keyword {
            self.pos -= 1;
            return Err(self.error(format!("expected '{keyword}', found '{t}'")));
        }
        Ok(())
    }

    pub fn next_usize(&mut self) -> Result<usize> {
        let t = self.next_token()?;
        t.parse().map_err(|_| {
            self.pos -= 1;
            self.error(format!("expected a non-negative integer, found '{t}'"))
        })
    }

    pub fn next_f64(&mut self) -> Result<f64> {
        let t = self.next_token()?;
        t.parse().map_err(|_| {
            self.pos -= 1;
            self.error(format!("expected a number, found '{t}'"))
        })
    }

    pub fn read_f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.next_f64()).collect()
    }

    pub fn expect_end(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.error(format!("trailing data starting with '{t}'"))),
        }
    }
}

/// Cursor over a binary file with byte-offset diagnostics.
pub(crate) struct BinReader<'a> {
    path: PathBuf,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BinReader<'a> {
    pub fn new(path: &Path, bytes: &'a [u8]) -> Self {
        BinReader {
            path: path.to_path_buf(),
            bytes,
            pos: 0,
        }
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            position: format!("byte {}", self.pos),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(format!(
                "need {n} bytes, only {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let m = self.take(8)?;
        if m != magic {
            self.pos -= 8;
            return Err(self.error("bad magic number"));
        }
        Ok(())
    }

    pub fn read_u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn read_usize(&mut self) -> Result<usize> {
        let v = self.read_u64()?;
        usize::try_from(v).map_err(|_| self.error(format!("count {v} too large")))
    }

    pub fn read_f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let total = n
            .checked_mul(8)
            .ok_or_else(|| self.error("array size overflow"))?;
        let b = self.take(total)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn read_string(&mut self) -> Result<String> {
        let n = self.read_usize()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.error("invalid UTF-8 string"))
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct BinWriter {
    pub buf: Vec<u8>,
}

impl BinWriter {
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn string(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}
