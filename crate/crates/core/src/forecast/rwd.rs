use super::ForecastError;
use crate::models::CohortEffect;

/// Random walk with drift fitted to an index series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwdParams {
    pub drift: f64,
    /// Innovation standard deviation.
    pub sigma: f64,
    pub last_value: f64,
    /// Year (or cohort) of `last_value`.
    pub last_index: i32,
}

impl RwdParams {
    /// Expected value `steps` periods after the last observation.
    pub fn project(&self, steps: usize) -> f64 {
        self.last_value + steps as f64 * self.drift
    }
}

/// Drift is the mean first difference; sigma is the standard deviation of the
/// differences about it, with one degree of freedom spent on the drift.
pub fn estimate_rwd(series: &[f64], last_index: i32) -> Result<RwdParams, ForecastError> {
    let t = series.len();
    if t < 3 {
        return Err(ForecastError::TooShort { len: t });
    }
    let drift = (series[t - 1] - series[0]) / (t - 1) as f64;
    let ss: f64 = series
        .windows(2)
        .map(|w| (w[1] - w[0] - drift).powi(2))
        .sum();
    let sigma = (ss / (t - 2) as f64).sqrt();
    if !drift.is_finite() || !sigma.is_finite() {
        return Err(ForecastError::BadDims(
            "series contains non-finite values".into(),
        ));
    }
    Ok(RwdParams {
        drift,
        sigma,
        last_value: series[t - 1],
        last_index,
    })
}

/// Random walk with drift on the estimated cohort effects, in cohort order.
/// Thin cohorts are skipped.
pub fn forecast_cohort_series(gamma: &CohortEffect) -> Result<RwdParams, ForecastError> {
    let series = gamma.estimated_series();
    let Some(&(last, _)) = series.last() else {
        return Err(ForecastError::TooShort { len: 0 });
    };
    let values: Vec<f64> = series.iter().map(|&(_, v)| v).collect();
    estimate_rwd(&values, last)
}
