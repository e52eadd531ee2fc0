//! Random-walk extrapolation of fitted indices and simulated prediction
//! intervals for future death rates.

mod io;
mod rwd;
mod simulate;

use thiserror::Error;

pub use io::{read_forecast_csv, write_forecast_csv};
pub use rwd::{estimate_rwd, forecast_cohort_series, RwdParams};
pub use simulate::{make_forecast, make_forecast_for_ages, quantile, simulate_paths, SampleCube};

/// Name of the normal-variate generator, recorded with every forecast.
pub const RNG_NAME: &str = "chacha8";

/// Point forecasts and prediction bounds, indexed `[age][h - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub model: String,
    pub ages: Vec<u32>,
    /// Horizons `1..=H`.
    pub horizons: Vec<usize>,
    /// Median of the simulated rates.
    pub point: Vec<Vec<f64>>,
    /// `alpha / 2` quantile.
    pub lower: Vec<Vec<f64>>,
    /// `1 - alpha / 2` quantile.
    pub upper: Vec<Vec<f64>>,
    pub alpha: f64,
    pub n_sims: usize,
    pub seed: u64,
}

impl ForecastResult {
    pub fn max_horizon(&self) -> usize {
        self.horizons.len()
    }

    pub fn age_index(&self, age: u32) -> Option<usize> {
        self.ages.iter().position(|&a| a == age)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("series of length {len} is too short for a random walk with drift (need 3)")]
    TooShort { len: usize },
    #[error("model did not converge; refusing to forecast from it")]
    NotConverged,
    #[error("bad dimensions: {0}")]
    BadDims(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("malformed forecast file: {0}")]
    Parse(String),
}
