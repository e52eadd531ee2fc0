use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{estimate_rwd, forecast_cohort_series, ForecastError, ForecastResult, RwdParams};
use crate::models::FittedModel;

const MIN_SIMS: usize = 100;

/// Simulated rates, `n_sims x ages x horizons`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCube {
    pub n_sims: usize,
    pub ages: Vec<u32>,
    pub horizon: usize,
    data: Vec<f64>,
}

impl SampleCube {
    /// Rate for simulation `sim`, age index `i` and horizon `h` in `1..=H`.
    pub fn rate(&self, sim: usize, i: usize, h: usize) -> f64 {
        self.data[(sim * self.ages.len() + i) * self.horizon + h - 1]
    }
}

/// Drifts and innovation scales of every extrapolated index.
struct Plan {
    periods: Vec<RwdParams>,
    /// Cohort walk and the number of cohorts it must reach beyond the last
    /// estimated one.
    cohort: Option<(RwdParams, usize)>,
}

/// One simulated future: period indices `[component][h - 1]` and projected
/// cohort effects `[cohort - last_estimated - 1]`.
struct Path {
    kappas: Vec<Vec<f64>>,
    gamma: Vec<f64>,
}

fn plan(fitted: &FittedModel, horizon: usize, n_sims: usize) -> Result<Plan, ForecastError> {
    if !fitted.converged {
        return Err(ForecastError::NotConverged);
    }
    if horizon < 1 {
        return Err(ForecastError::BadDims("horizon must be at least 1".into()));
    }
    if n_sims < MIN_SIMS {
        return Err(ForecastError::BadDims(format!(
            "n_sims must be at least {MIN_SIMS}, got {n_sims}"
        )));
    }
    let (p, n) = (fitted.n_ages(), fitted.n_years());
    if fitted.alpha.len() != p
        || fitted.betas.len() != fitted.kappas.len()
        || fitted.betas.iter().any(|b| b.len() != p)
        || fitted.kappas.iter().any(|k| k.len() != n)
    {
        return Err(ForecastError::BadDims(
            "parameter lengths disagree with the fitted grid".into(),
        ));
    }
    let last_year = *fitted
        .years
        .last()
        .ok_or(ForecastError::TooShort { len: 0 })?;
    let periods = fitted
        .kappas
        .iter()
        .map(|k| estimate_rwd(k, last_year))
        .collect::<Result<Vec<_>, _>>()?;
    let cohort = match &fitted.gamma {
        Some(g) => {
            let rwd = forecast_cohort_series(g)?;
            let youngest = last_year + horizon as i32 - fitted.ages[0] as i32;
            Some((rwd, (youngest - rwd.last_index).max(0) as usize))
        }
        None => None,
    };
    Ok(Plan { periods, cohort })
}

/// Random walk from `rwd` with innovations drawn from `rng`; sigma = 0 gives
/// the drift line exactly.
fn walk(rwd: &RwdParams, steps: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut noise = 0.0;
    (1..=steps)
        .map(|h| {
            let e: f64 = rng.sample(StandardNormal);
            noise += rwd.sigma * e;
            rwd.project(h) + noise
        })
        .collect()
}

/// Each simulation draws from its own stream of one seeded generator, so the
/// paths do not depend on how simulations are scheduled.
fn simulate(plan: &Plan, horizon: usize, n_sims: usize, seed: u64) -> Vec<Path> {
    (0..n_sims)
        .into_par_iter()
        .map(|sim| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(sim as u64);
            let kappas = plan
                .periods
                .iter()
                .map(|r| walk(r, horizon, &mut rng))
                .collect();
            let gamma = match &plan.cohort {
                Some((r, steps)) => walk(r, *steps, &mut rng),
                None => Vec::new(),
            };
            Path { kappas, gamma }
        })
        .collect()
}

fn log_rate(fitted: &FittedModel, plan: &Plan, path: &Path, i: usize, h: usize) -> f64 {
    let mut eta = fitted.alpha[i];
    for (b, k) in fitted.betas.iter().zip(&path.kappas) {
        eta += b[i] * k[h - 1];
    }
    if let (Some(g), Some((rwd, _))) = (&fitted.gamma, &plan.cohort) {
        let cohort = *fitted.years.last().unwrap() + h as i32 - fitted.ages[i] as i32;
        eta += if cohort <= rwd.last_index {
            g.value(cohort).unwrap_or(0.0)
        } else {
            path.gamma[(cohort - rwd.last_index - 1) as usize]
        };
    }
    eta
}

/// Simulate `n_sims` futures of every fitted age over horizons `1..=H`.
pub fn simulate_paths(
    fitted: &FittedModel,
    horizon: usize,
    n_sims: usize,
    seed: u64,
) -> Result<SampleCube, ForecastError> {
    let plan = plan(fitted, horizon, n_sims)?;
    let paths = simulate(&plan, horizon, n_sims, seed);
    let p = fitted.n_ages();
    let mut data = Vec::with_capacity(n_sims * p * horizon);
    for path in &paths {
        for i in 0..p {
            data.extend((1..=horizon).map(|h| log_rate(fitted, &plan, path, i, h).exp()));
        }
    }
    Ok(SampleCube {
        n_sims,
        ages: fitted.ages.clone(),
        horizon,
        data,
    })
}

/// Sample quantile of sorted data, linear interpolation between order
/// statistics (Hyndman-Fan type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// Median forecasts and `alpha/2`, `1 - alpha/2` simulated quantiles for all
/// fitted ages.
pub fn make_forecast(
    fitted: &FittedModel,
    horizon: usize,
    alpha: f64,
    n_sims: usize,
    seed: u64,
) -> Result<ForecastResult, ForecastError> {
    make_forecast_for_ages(fitted, &fitted.ages, horizon, alpha, n_sims, seed)
}

/// As [`make_forecast`], restricted to `ages`. The simulated paths are the
/// same as for the full age range, so restricting commutes with forecasting.
pub fn make_forecast_for_ages(
    fitted: &FittedModel,
    ages: &[u32],
    horizon: usize,
    alpha: f64,
    n_sims: usize,
    seed: u64,
) -> Result<ForecastResult, ForecastError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ForecastError::BadAlpha(alpha));
    }
    let rows = ages
        .iter()
        .map(|a| {
            fitted.ages.iter().position(|x| x == a).ok_or_else(|| {
                ForecastError::BadDims(format!("age {a} is not in the fitted range"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let plan = plan(fitted, horizon, n_sims)?;
    let paths = simulate(&plan, horizon, n_sims, seed);

    let per_age: Vec<[Vec<f64>; 3]> = rows
        .par_iter()
        .map(|&i| {
            let mut buf = vec![0.0; n_sims];
            let mut out = [
                Vec::with_capacity(horizon),
                Vec::with_capacity(horizon),
                Vec::with_capacity(horizon),
            ];
            for h in 1..=horizon {
                for (slot, path) in buf.iter_mut().zip(&paths) {
                    *slot = log_rate(fitted, &plan, path, i, h).exp();
                }
                buf.sort_by(f64::total_cmp);
                out[0].push(quantile(&buf, 0.5));
                out[1].push(quantile(&buf, alpha / 2.0));
                out[2].push(quantile(&buf, 1.0 - alpha / 2.0));
            }
            out
        })
        .collect();

    let mut result = ForecastResult {
        model: fitted.spec.kind.id().to_string(),
        ages: ages.to_vec(),
        horizons: (1..=horizon).collect(),
        point: Vec::with_capacity(ages.len()),
        lower: Vec::with_capacity(ages.len()),
        upper: Vec::with_capacity(ages.len()),
        alpha,
        n_sims,
        seed,
    };
    for [point, lower, upper] in per_age {
        result.point.push(point);
        result.lower.push(lower);
        result.upper.push(upper);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_seven_quantiles() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 5.0);
        assert_eq!(quantile(&x, 0.5), 3.0);
        assert!((quantile(&x, 0.1) - 1.4).abs() < 1e-15);
        assert!((quantile(&x, 0.9) - 4.6).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }
}
