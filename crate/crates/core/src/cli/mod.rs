//! Command-line front end. Exit codes: 0 success (partial per-age failures
//! are flagged in the output), 2 invalid input or configuration, 3 every fit
//! failed.

mod args;
mod commands;
pub mod output;

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use args::{Cli, Command, DiagnoseArgs, FitArgs, ForestArgs, SimulateArgs, SmoothArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FIT_FAILED: i32 = 3;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "DCREG_SEED";

#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    AllFailed(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::AllFailed(_) => EXIT_FIT_FAILED,
        }
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Provenance written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: String,
    pub config: C,
    pub seed: u64,
    pub version: &'static str,
    pub jobs: usize,
    pub wall_clock_secs: f64,
    pub convergence: Vec<serde_json::Value>,
    pub outputs: Vec<String>,
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_INVALID;
        }
        if rayon::ThreadPoolBuilder::new().num_threads(j).build_global().is_err() {
            log::debug!("global thread pool already initialised");
        }
    }
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Invalid(m) => eprintln!("error: {m}"),
                Failure::AllFailed(m) => eprintln!("fit failed: {m}"),
            }
            f.code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let name = cli.command.name();
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Fit(a) => commands::fit(layered(a, cfg, name)?),
        Command::Simulate(a) => commands::simulate(layered(a, cfg, name)?),
        Command::Smooth(a) => commands::smooth(layered(a, cfg, name)?),
        Command::Diagnose(a) => commands::diagnose(layered(a, cfg, name)?),
    }
}

/// Layers flags over the config file. The file may hold the arguments
/// directly, nest them under the command name, or be a run manifest.
fn layered<A>(flags: A, path: Option<&Path>, command: &str) -> CliResult<A>
where
    A: args::Layer + DeserializeOwned + Default,
{
    let Some(path) = path else { return Ok(flags) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("config {}: {e}", path.display())))?;
    if value.get("command").is_some() && value.get("config").is_some() {
        if value["command"] != command {
            return Err(Failure::Invalid(format!("manifest was written by '{}', not '{command}'", value["command"])));
        }
        value = value["config"].take();
    } else if let Some(nested) = value.get_mut(command) {
        value = nested.take();
    }
    let config: A =
        serde_json::from_value(value).map_err(|e| Failure::Invalid(format!("config {}: {e}", path.display())))?;
    Ok(flags.layer(config))
}

/// Flag, then config, then `DCREG_SEED`, then 0.
fn resolve_seed(seed: Option<u64>) -> CliResult<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Invalid(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
