//! Forecast error criteria and the expanding-window backtest comparing the
//! two fitting strategies.

mod backtest;
mod io;
mod metrics;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::forecast::ForecastError;
use crate::hmd::{AgeRange, DataError, Sex};
use crate::models::{FitError, ModelKind};

pub use backtest::{
    backtest_with, cell_seed, expanding_window_backtest, BacktestSettings, ForecastRequest,
    Forecaster, ModelForecaster, MIN_TRAINING_YEARS,
};
pub use io::{read_cells_csv, write_cells_csv, Metric};
pub use metrics::{interval_score, mape, mean_interval_score, rmspe};

/// How retiree-age forecasts are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Truncate to the retiree ages, then fit and forecast.
    PartialFit,
    /// Fit and forecast on all ages, then truncate the forecasts.
    FullFitThenTruncate,
}

impl Strategy {
    pub const BOTH: [Strategy; 2] = [Strategy::FullFitThenTruncate, Strategy::PartialFit];

    pub fn id(self) -> &'static str {
        match self {
            Strategy::PartialFit => "partial",
            Strategy::FullFitThenTruncate => "full",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Strategy::PartialFit => "Partial",
            Strategy::FullFitThenTruncate => "Full",
        }
    }

    /// Ages the forecasts are scored on, 60..100+ for both strategies.
    pub fn eval_range(self) -> AgeRange {
        AgeRange::RETIREE
    }

    pub fn fit_range(self) -> AgeRange {
        backtest::fit_range(self)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Strategy {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "partial" | "partialfit" => Ok(Strategy::PartialFit),
            "full" | "fullfitthentruncate" => Ok(Strategy::FullFitThenTruncate),
            other => Err(EvalError::Parse(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Errors of one (country, sex, model, strategy) combination at horizon `h`,
/// pooled over the `n_origins` forecast origins that reach `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestCell {
    pub country: String,
    pub sex: Sex,
    pub model: ModelKind,
    pub strategy: Strategy,
    pub horizon: usize,
    /// Percent.
    pub mape: f64,
    pub rmspe: f64,
    /// Raw scale; reports multiply by 100.
    pub mean_interval_score: f64,
    pub n_origins: usize,
    /// Why the cell has no metrics, if it failed.
    pub failure: Option<String>,
}

impl BacktestCell {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Mape => self.mape,
            Metric::Rmspe => self.rmspe,
            Metric::MeanIntervalScore => self.mean_interval_score,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("actual rate at ({row}, {col}) is {value}; percentage errors need positive actuals")]
    ZeroActual { row: usize, col: usize, value: f64 },
    #[error("interval bounds inverted: lower {lb} > upper {ub}")]
    InvertedBounds { lb: f64, ub: f64 },
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("{0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("surface has {years} years; the backtest needs at least {needed}")]
    TooFewYears { years: usize, needed: usize },
    #[error("invalid backtest settings: {0}")]
    BadSettings(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
