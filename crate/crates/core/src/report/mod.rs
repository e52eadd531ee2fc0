//! Experiment configuration, grid orchestration, report tables, plot
//! scripts and synthetic populations.

mod config;
mod plot;
mod run;
mod synthetic;
mod tables;

use thiserror::Error;

use crate::hmd::DataError;

pub use config::{ExperimentConfig, DATA_DIR_ENV};
pub use plot::emit_plot_script;
pub use run::{load_population, run_experiment, run_grid, write_outputs, ExperimentOutcome};
pub use synthetic::{generate_synthetic_country, SyntheticTruth};
pub use tables::{
    summarize_strategy_winner, verdicts_to_text, ReportTable, StrategyVerdict, TableRow, MEAN_ROW,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("incomplete grid: {0}")]
    IncompleteGrid(String),
    #[error("bad synthetic truth: {0}")]
    BadTruth(String),
    #[error("malformed table: {0}")]
    Parse(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ReportError {
    /// Process exit status for configuration and data errors.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
