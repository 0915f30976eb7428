//! The `qdpc` command line: simulate, reconstruct, score and learn pupils,
//! writing self-describing artifact directories.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod stack;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use args::{Cli, Command};
pub use config::RunConfig;
pub use error::{CliError, Result};

use output::OutDir;

/// Runs one parsed invocation; returns the artifact directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cli.command.apply(&mut cfg)?;
    let base = cfg.resolve_out_base(cli.out_dir.as_deref());
    cfg.out_dir = Some(base.clone());
    let out = OutDir::create(base.join(cli.command.name()))?;
    match &cli.command {
        Command::Ptf(_) => commands::ptf(&cfg, &out)?,
        Command::Simulate(_) => commands::simulate(&cfg, &out)?,
        Command::Reconstruct(a) => commands::reconstruct(a, &mut cfg, &out)?,
        Command::Sensor(a) => commands::sensor(a, &mut cfg, &out)?,
        Command::Metrics(a) => commands::metrics(a, &cfg, &out)?,
        Command::LearnPupil(_) => commands::learn(&cfg, &out)?,
        Command::Reproduce(_) => commands::reproduce_table2(&cfg, &out)?,
    }
    Ok(out.path().to_path_buf())
}

/// Parses `args` (program name first) and runs them. Parse failures become
/// [`CliError::Usage`].
pub fn run_from<I, T>(args: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.render().to_string()))?;
    run(&cli)
}
