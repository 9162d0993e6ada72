//! Shared plumbing for the subcommands: error-to-exit-code mapping, flag
//! parsing, and stats output.

use std::path::{Path, PathBuf};

use grapple::engine::{RunError, RunStats, UpdateError};
use grapple::io::FormatError;
use grapple::{ConsistencyModel, SchedulerKind};

/// Exit codes: 0 success, 2 configuration or parse problems, 3 numerical
/// divergence, 1 everything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(RunError),
    Format(FormatError),
    Io(std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Format(_) => 2,
            CliError::Run(RunError::UpdateFailed { source, .. }) => match source {
                UpdateError::NumericalDivergence(_) | UpdateError::DegeneratePotential(_) => 3,
                UpdateError::Other(_) => 1,
            },
            CliError::Run(_) => 1,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Run(e) => write!(f, "run failed: {e}"),
            CliError::Format(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Run(e)
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Format(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Options shared by every subcommand, resolved against per-algorithm
/// defaults.
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub workers: Option<usize>,
    pub scheduler: Option<String>,
    pub model: Option<String>,
    pub stats_out: Option<PathBuf>,
}

impl Globals {
    pub fn workers_or(&self, default: usize) -> usize {
        self.workers.unwrap_or(default).max(1)
    }

    pub fn default_workers() -> usize {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
    }

    pub fn scheduler_or(&self, default: SchedulerKind) -> CliResult<SchedulerKind> {
        match &self.scheduler {
            None => Ok(default),
            Some(s) => s.parse().map_err(CliError::Config),
        }
    }

    pub fn model_or(&self, default: ConsistencyModel) -> CliResult<ConsistencyModel> {
        match &self.model {
            None => Ok(default),
            Some(s) => s.parse().map_err(CliError::Config),
        }
    }

    pub fn write_stats(&self, stats: &RunStats) -> CliResult<()> {
        if let Some(path) = &self.stats_out {
            grapple::io::append_csv_row(path, RunStats::CSV_HEADER, &stats.csv_row())?;
        }
        Ok(())
    }
}

/// Parses `WxH` or `W,H` dimension specs.
pub fn parse_dims(spec: &str) -> CliResult<(usize, usize)> {
    let parts: Vec<&str> = spec.split(['x', 'X', ',']).collect();
    if parts.len() != 2 {
        return Err(CliError::config(format!(
            "expected a WxH size, got `{spec}`"
        )));
    }
    let w = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("bad width in `{spec}`")))?;
    let h = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("bad height in `{spec}`")))?;
    if w == 0 || h == 0 {
        return Err(CliError::config("sizes must be positive"));
    }
    Ok((w, h))
}

/// Parses a comma-separated pair of reals.
pub fn parse_pair(spec: &str) -> CliResult<[f64; 2]> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::config(format!(
            "expected two comma-separated values, got `{spec}`"
        )));
    }
    let a = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("bad number in `{spec}`")))?;
    let b = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("bad number in `{spec}`")))?;
    Ok([a, b])
}

pub fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> CliResult<Vec<T>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::config(format!("bad {what} in `{spec}`")))
        })
        .collect()
}

pub fn write_tsv_file(path: &Path, lines: Vec<String>) -> CliResult<()> {
    grapple::io::write_tsv(path, lines)?;
    Ok(())
}
