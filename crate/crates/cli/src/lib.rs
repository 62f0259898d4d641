//! Command-line driver: configuration, worker pool, and result files.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use arw_core::experiments::ExperimentError;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("invalid value for --{flag}: {message}")]
    Config { flag: &'static str, message: String },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) if !e.use_stderr() => EXIT_OK,
            CliError::Usage(_) | CliError::Config { .. } => EXIT_CONFIG,
            CliError::Experiment(ExperimentError::InvalidPlan(_)) => EXIT_CONFIG,
            CliError::Experiment(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

/// Runs one command and returns the process exit status.
pub fn parse_and_run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    match try_run(argv) {
        Ok(code) => code,
        Err(e) => {
            let code = e.exit_code();
            match e {
                CliError::Usage(u) => {
                    let _ = u.print();
                }
                other => eprintln!("error: {other}"),
            }
            code
        }
    }
}

fn try_run<I, S>(argv: I) -> Result<i32, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cfg = RunConfig::parse_args(argv)?;
    echo_config(&cfg);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w as usize);
    }
    let pool = builder.build().map_err(|e| CliError::Config { flag: "workers", message: e.to_string() })?;
    let outcome = pool.install(|| commands::execute(&cfg))?;
    match &cfg.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            output::write_report(&cfg, &outcome.report, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            output::write_report(&cfg, &outcome.report, &mut w)?;
            w.flush()?;
        }
    }
    match outcome.check {
        Some(false) if cfg.check => {
            eprintln!("check failed: {}", cfg.command);
            Ok(EXIT_CHECK_FAILED)
        }
        _ => Ok(EXIT_OK),
    }
}

fn echo_config(cfg: &RunConfig) {
    let mut line = String::from("config:");
    for (k, v) in cfg.resolved() {
        line.push_str(&format!(" {k}={v}"));
    }
    match cfg.workers {
        Some(w) => line.push_str(&format!(" workers={w}")),
        None => line.push_str(&format!(" workers={}", rayon::current_num_threads())),
    }
    if let Some(out) = &cfg.out {
        line.push_str(&format!(" out={}", out.display()));
    }
    eprintln!("{line}");
}
