//! Expanding-window backtest of one model and strategy on one surface.

use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::metrics::{mape, mean_interval_score, rmspe};
use super::{BacktestCell, BacktestError, Strategy};
use crate::forecast::{make_forecast_for_ages, ForecastResult};
use crate::hmd::{truncate_ages, AgeRange, MortalitySurface};
use crate::models::{fit, ModelSpec};

/// Training years needed beyond the holdout.
pub const MIN_TRAINING_YEARS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestSettings {
    /// Number of final years held out; also the longest horizon.
    pub holdout: usize,
    pub alpha: f64,
    pub n_sims: usize,
    pub seed: u64,
    pub rmspe_outside_root: bool,
}

impl Default for BacktestSettings {
    fn default() -> Self {
        BacktestSettings {
            holdout: 30,
            alpha: 0.2,
            n_sims: 5000,
            seed: 0,
            rmspe_outside_root: false,
        }
    }
}

/// Everything a forecaster is given at one forecast origin.
#[derive(Debug, Clone, Copy)]
pub struct ForecastRequest<'a> {
    /// Training surface, already restricted to the strategy's fitting range.
    pub train: &'a MortalitySurface,
    pub spec: &'a ModelSpec,
    /// Ages the forecast must cover.
    pub eval_ages: &'a [u32],
    pub horizon: usize,
    pub alpha: f64,
    pub n_sims: usize,
    pub seed: u64,
}

/// Produces forecasts for the backtest. [`ModelForecaster`] fits the model
/// and simulates; tests substitute stubs.
pub trait Forecaster: Sync {
    fn forecast(&self, request: &ForecastRequest<'_>) -> Result<ForecastResult, BacktestError>;
}

/// Fit the requested model on the training surface and simulate.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelForecaster;

impl Forecaster for ModelForecaster {
    fn forecast(&self, r: &ForecastRequest<'_>) -> Result<ForecastResult, BacktestError> {
        let fitted = fit(r.spec, r.train)?;
        Ok(make_forecast_for_ages(
            &fitted,
            r.eval_ages,
            r.horizon,
            r.alpha,
            r.n_sims,
            r.seed,
        )?)
    }
}

/// Seed for one forecast origin, independent of execution order.
pub fn cell_seed(
    seed: u64,
    country: &str,
    sex: &str,
    model: &str,
    strategy: &str,
    origin: usize,
) -> u64 {
    let key = format!("{seed}|{country}|{sex}|{model}|{strategy}|{origin}");
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Forecasts from one origin, `[age][h - 1]`.
struct OriginForecast {
    point: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
}

/// Backtest with the model fitter. See [`backtest_with`].
pub fn expanding_window_backtest(
    surface: &MortalitySurface,
    spec: &ModelSpec,
    strategy: Strategy,
    settings: &BacktestSettings,
) -> Result<Vec<BacktestCell>, BacktestError> {
    backtest_with(&ModelForecaster, surface, spec, strategy, settings)
}

/// Forecast from origins `o = 0..holdout`, training on the first
/// `n - holdout + o` years and forecasting `holdout - o` steps, then pool the
/// forecasts by horizon against the held-out rates on the evaluation ages.
///
/// A failed origin marks every horizon it contributes to as failed instead of
/// aborting.
pub fn backtest_with<F: Forecaster>(
    forecaster: &F,
    surface: &MortalitySurface,
    spec: &ModelSpec,
    strategy: Strategy,
    settings: &BacktestSettings,
) -> Result<Vec<BacktestCell>, BacktestError> {
    let holdout = settings.holdout;
    let n = surface.n_years();
    if holdout == 0 {
        return Err(BacktestError::BadSettings(
            "holdout must be at least 1".into(),
        ));
    }
    if n < holdout + MIN_TRAINING_YEARS {
        return Err(BacktestError::TooFewYears {
            years: n,
            needed: holdout + MIN_TRAINING_YEARS,
        });
    }
    let eval = truncate_ages(surface, strategy.eval_range())?;
    let eval_ages = eval.ages().to_vec();
    let fit_surface = match strategy {
        Strategy::PartialFit => truncate_ages(surface, strategy.fit_range())?,
        Strategy::FullFitThenTruncate => surface.clone(),
    };

    let (country, sex, model) = (surface.country(), surface.sex().code(), spec.kind.id());
    let origins: Vec<Result<OriginForecast, String>> = (0..holdout)
        .into_par_iter()
        .map(|o| {
            let horizon = holdout - o;
            let train = fit_surface
                .first_years(n - horizon)
                .map_err(|e| e.to_string())?;
            let request = ForecastRequest {
                train: &train,
                spec,
                eval_ages: &eval_ages,
                horizon,
                alpha: settings.alpha,
                n_sims: settings.n_sims,
                seed: cell_seed(settings.seed, country, sex, model, strategy.id(), o),
            };
            let f = forecaster
                .forecast(&request)
                .map_err(|e| format!("origin {o}: {e}"))?;
            if f.ages != eval_ages || f.max_horizon() < horizon {
                return Err(format!(
                    "origin {o}: forecast does not cover the evaluation grid"
                ));
            }
            Ok(OriginForecast {
                point: f.point,
                lower: f.lower,
                upper: f.upper,
            })
        })
        .collect();

    let p = eval_ages.len();
    let mut cells = Vec::with_capacity(holdout);
    for h in 1..=holdout {
        let used = holdout - h + 1;
        let mut cell = BacktestCell {
            country: country.to_string(),
            sex: surface.sex(),
            model: spec.kind,
            strategy,
            horizon: h,
            mape: f64::NAN,
            rmspe: f64::NAN,
            mean_interval_score: f64::NAN,
            n_origins: used,
            failure: None,
        };
        if let Some(Err(e)) = origins[..used].iter().find(|r| r.is_err()) {
            cell.failure = Some(e.clone());
            cells.push(cell);
            continue;
        }
        let mut actual = DMatrix::zeros(p, used);
        let (mut point, mut lower, mut upper) = (actual.clone(), actual.clone(), actual.clone());
        for (o, r) in origins[..used].iter().enumerate() {
            let f = r.as_ref().expect("failures handled above");
            let year = n - holdout + o + h - 1;
            for i in 0..p {
                actual[(i, o)] = eval.rates()[(i, year)];
                point[(i, o)] = f.point[i][h - 1];
                lower[(i, o)] = f.lower[i][h - 1];
                upper[(i, o)] = f.upper[i][h - 1];
            }
        }
        let scores = mape(&actual, &point).and_then(|m| {
            Ok((
                m,
                rmspe(&actual, &point, settings.rmspe_outside_root)?,
                mean_interval_score(&lower, &upper, &actual, settings.alpha)?,
            ))
        });
        match scores {
            Ok((m, r, s)) => {
                cell.mape = m;
                cell.rmspe = r;
                cell.mean_interval_score = s;
            }
            Err(e) => cell.failure = Some(format!("h={h}: {e}")),
        }
        cells.push(cell);
    }
    Ok(cells)
}

/// Ages a strategy fits on.
pub(crate) fn fit_range(strategy: Strategy) -> AgeRange {
    match strategy {
        Strategy::PartialFit => AgeRange::RETIREE,
        Strategy::FullFitThenTruncate => AgeRange::FULL,
    }
}
