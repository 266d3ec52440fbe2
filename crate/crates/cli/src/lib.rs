//! Library side of the `flowrecon` binary: configuration, stages, errors.

pub mod config;
pub mod error;
pub mod provenance;
pub mod stages;

use std::path::{Path, PathBuf};

use config::PipelineConfig;
use error::CliResult;
use stages::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Pod,
    Calibrate,
    Estimate,
    Report,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// Loads and validates the configuration, then runs one stage.
/// Returns the files written.
pub fn run(command: Command, config_path: &Path, ov: &Overrides) -> CliResult<Vec<PathBuf>> {
    let mut cfg = PipelineConfig::load(config_path)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let base = stages::base_dir(config_path);
    let out = match &ov.output_dir {
        Some(d) => d.clone(),
        None => base.join(&cfg.paths.output_dir),
    };
    let ctx = Context { cfg, base, out };
    match command {
        Command::Synth => stages::cmd_synth(&ctx),
        Command::Pod => stages::cmd_pod(&ctx),
        Command::Calibrate => stages::cmd_calibrate(&ctx),
        Command::Estimate => stages::cmd_estimate(&ctx),
        Command::Report => stages::cmd_report(&ctx),
    }
}
