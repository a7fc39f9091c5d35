//! Scenario runner: loads a scenario, runs the closed loop and writes the
//! time series and its summary.

pub mod config;
pub mod output;
pub mod summary;

pub use config::{load_scenario, parse_config, preset, LoadError, PRESETS};
pub use output::{read_csv, write_csv};
pub use summary::{summarize, RunSummary};

use pantilt_core::{run_scenario, ScenarioConfig};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CSV_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] LoadError),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Output { .. } | Self::Csv { .. } => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub csv_path: Option<PathBuf>,
    pub summary_path: PathBuf,
}

/// Runs `config` and writes the summary, plus the CSV unless `summary_only`.
pub fn run(
    config: &ScenarioConfig,
    out_dir: &Path,
    summary_only: bool,
) -> Result<RunOutput, RunError> {
    let log = run_scenario(config).map_err(LoadError::from)?;
    let summary = summarize(&log.rows, &config.limits);

    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Output { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let csv_path = if summary_only {
        None
    } else {
        let path = out_dir.join(CSV_FILE);
        let file = File::create(&path).map_err(io_err(&path))?;
        write_csv(BufWriter::new(file), &log.rows).map_err(|source| RunError::Csv {
            path: path.clone(),
            source,
        })?;
        Some(path)
    };

    let summary_path = out_dir.join(SUMMARY_FILE);
    std::fs::write(&summary_path, summary.to_toml()).map_err(io_err(&summary_path))?;

    Ok(RunOutput {
        summary,
        csv_path,
        summary_path,
    })
}

/// Recomputes the summary of a written CSV.
pub fn summarize_file(path: &Path, config: &ScenarioConfig) -> Result<RunSummary, RunError> {
    let file = File::open(path).map_err(|source| RunError::Output {
        path: path.to_path_buf(),
        source,
    })?;
    let rows = read_csv(file).map_err(|source| RunError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(summarize(&rows, &config.limits))
}
