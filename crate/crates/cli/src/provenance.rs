//! Provenance headers written as comments at the top of every output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// `flowrecon <version> <command>`, then one `input` line per file read and
/// the stage parameters as `param` lines. Carries nothing that changes
/// between identical runs.
#[derive(Debug, Clone)]
pub struct Provenance {
    lines: Vec<String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Provenance {
            lines: vec![format!("flowrecon {} {command}", env!("CARGO_PKG_VERSION"))],
        }
    }

    /// Records the hash of an input under `label` (a path relative to the
    /// run, so moving the output directory does not change headers).
    pub fn input(&mut self, label: &str, path: &Path) -> CliResult<&mut Self> {
        let h = sha256_file(path)?;
        self.lines.push(format!("input {label} sha256:{h}"));
        Ok(self)
    }

    pub fn param<T: Serialize>(&mut self, name: &str, value: &T) -> &mut Self {
        let mut table = BTreeMap::new();
        table.insert(name, value);
        match toml::to_string(&table) {
            Ok(text) => self
                .lines
                .extend(text.lines().filter(|l| !l.trim().is_empty()).map(|l| format!("param {l}"))),
            Err(e) => self.lines.push(format!("param {name} <unserializable: {e}>")),
        }
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.lines.push(text.into());
        self
    }

    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}
