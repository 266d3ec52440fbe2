use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowrecon_cli::{run, Command, Overrides};

/// Flow reconstruction from sparse sensors with POD and Galerkin models.
#[derive(Parser)]
#[command(name = "flowrecon", version)]
struct Args {
    /// TOML configuration file.
    #[arg(long, global = true, default_value = "flowrecon.toml")]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides paths.output_dir.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic flow: snapshots, true coefficients, true model.
    Synth,
    /// Compute the POD basis of the training snapshots.
    Pod,
    /// Calibrate the Galerkin model on the POD coefficients.
    Calibrate,
    /// Run the configured estimators on the stream measurements.
    Estimate,
    /// Compare estimates against the projected stream.
    Report,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let command = match args.command {
        Cmd::Synth => Command::Synth,
        Cmd::Pod => Command::Pod,
        Cmd::Calibrate => Command::Calibrate,
        Cmd::Estimate => Command::Estimate,
        Cmd::Report => Command::Report,
    };
    let ov = Overrides { seed: args.seed, output_dir: args.output_dir };
    match run(command, &args.config, &ov) {
        Ok(paths) => {
            if command == Command::Report {
                if let Some(p) = paths.first() {
                    if let Ok(text) = std::fs::read_to_string(p) {
                        print!("{text}");
                    }
                }
            } else {
                for p in paths {
                    println!("wrote {}", p.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category.exit_code())
        }
    }
}
