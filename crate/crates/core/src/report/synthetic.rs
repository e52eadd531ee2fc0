//! Simulated populations for running the experiment without data files.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::hmd::{MortalitySurface, Sex};

/// Parameters a synthetic population is drawn from:
/// `log m[x,t] = alpha[x] + beta[x] * kappa[t] + gamma[t - x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub country: String,
    /// `"F"` or `"M"`.
    pub sex: String,
    pub first_year: i32,
    /// Single ages; the last one is an open group.
    pub ages: Vec<u32>,
    pub alpha: Vec<f64>,
    /// Sums to one.
    pub beta: Vec<f64>,
    /// One value per year, centred.
    pub kappa: Vec<f64>,
    /// One value per cohort, oldest first (`first_year - last age` onwards).
    pub gamma: Option<Vec<f64>>,
    /// Exposure per age, constant over years.
    pub exposures: Vec<f64>,
}

fn bad(msg: impl Into<String>) -> ReportError {
    ReportError::BadTruth(msg.into())
}

impl SyntheticTruth {
    /// A Lee-Carter population over 1950..2016 and ages 0..110+, with a level,
    /// improvement pattern and size that vary with `seed`.
    pub fn lee_carter(country: &str, sex: Sex, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ages: Vec<u32> = (0..=110).collect();
        let years = 2016 - 1950 + 1;
        let male = sex == Sex::Male;
        let level = rng.random_range(0.8..1.25) * if male { 1.6 } else { 1.0 };
        let alpha = ages
            .iter()
            .map(|&a| {
                let x = a as f64;
                let g = 2.5e-5 * level * (0.1 * x).exp();
                let senescent = g / (1.0 + g);
                let infant = 0.02 * (-1.5 * x).exp();
                let hump = if male { 8e-4 } else { 3e-4 } * (-((x - 22.0) / 6.0).powi(2)).exp();
                (infant + hump + 1.5e-4 + senescent).ln()
            })
            .collect();
        let raw: Vec<f64> = ages
            .iter()
            .map(|&a| 1.3 - 0.009 * a as f64 + 0.05 * rng.random::<f64>())
            .collect();
        let total: f64 = raw.iter().sum();
        let beta = raw.iter().map(|b| b / total).collect();
        let drift = -rng.random_range(1.2..1.8);
        let noise = Normal::new(0.0, 1.5).expect("positive sd");
        let mut k = 0.0;
        let mut kappa: Vec<f64> = (0..years)
            .map(|_| {
                k += drift + noise.sample(&mut rng);
                k
            })
            .collect();
        let mean = kappa.iter().sum::<f64>() / years as f64;
        kappa.iter_mut().for_each(|v| *v -= mean);
        let size = rng.random_range(0.3..3.0) * 1e5;
        let exposures = ages
            .iter()
            .map(|&a| size * (-(a as f64 / 85.0).powi(6)).exp())
            .collect();
        SyntheticTruth {
            country: country.to_string(),
            sex: sex.code().to_string(),
            first_year: 1950,
            ages,
            alpha,
            beta,
            kappa,
            gamma: None,
            exposures,
        }
    }

    pub fn years(&self) -> Vec<i32> {
        (0..self.kappa.len())
            .map(|j| self.first_year + j as i32)
            .collect()
    }

    pub fn log_rate(&self, i: usize, j: usize) -> f64 {
        let mut eta = self.alpha[i] + self.beta[i] * self.kappa[j];
        if let Some(g) = &self.gamma {
            eta += g[j + self.ages.len() - 1 - i];
        }
        eta
    }

    pub fn rates(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ages.len(), self.kappa.len(), |i, j| {
            self.log_rate(i, j).exp()
        })
    }

    /// Check dimensions, the normalisations and that every rate is a
    /// probability-scale value in (0, 1].
    pub fn validate(&self) -> Result<Sex, ReportError> {
        let sex: Sex = self
            .sex
            .parse()
            .map_err(|_| bad(format!("unknown sex '{}'", self.sex)))?;
        let (p, n) = (self.ages.len(), self.kappa.len());
        if p < 3 || n < 3 {
            return Err(bad(format!("grid {p} x {n} is too small")));
        }
        if self.ages.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(bad("ages must be consecutive"));
        }
        if self.alpha.len() != p || self.beta.len() != p || self.exposures.len() != p {
            return Err(bad("alpha, beta and exposures need one value per age"));
        }
        if (self.beta.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
            return Err(bad("beta must sum to one"));
        }
        let scale = self.kappa.iter().fold(1.0f64, |m, k| m.max(k.abs()));
        if self.kappa.iter().sum::<f64>().abs() > 1e-8 * scale * n as f64 {
            return Err(bad("kappa must be centred"));
        }
        if let Some(g) = &self.gamma {
            if g.len() != p + n - 1 {
                return Err(bad(format!(
                    "gamma needs {} cohorts, got {}",
                    p + n - 1,
                    g.len()
                )));
            }
        }
        if let Some(e) = self
            .exposures
            .iter()
            .find(|e| !(**e > 0.0) || !e.is_finite())
        {
            return Err(bad(format!("exposure {e} is not positive")));
        }
        let rates = self.rates();
        if let Some(m) = rates.iter().find(|m| !(**m > 0.0 && **m <= 1.0)) {
            return Err(bad(format!("true rate {m} lies outside (0, 1]")));
        }
        Ok(sex)
    }
}

/// Draw Poisson deaths from `truth` and return the surface (rates are deaths
/// over exposures) with a copy of the truth.
pub fn generate_synthetic_country(
    seed: u64,
    truth: &SyntheticTruth,
) -> Result<(MortalitySurface, SyntheticTruth), ReportError> {
    let sex = truth.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates = truth.rates();
    let (p, n) = rates.shape();
    let exposures = DMatrix::from_fn(p, n, |i, _| truth.exposures[i]);
    // Column-major draw order: year by year, youngest age first.
    let mut deaths = DMatrix::zeros(p, n);
    for j in 0..n {
        for i in 0..p {
            let lambda = exposures[(i, j)] * rates[(i, j)];
            deaths[(i, j)] = Poisson::new(lambda)
                .map_err(|e| bad(e.to_string()))?
                .sample(&mut rng);
        }
    }
    let observed = deaths.component_div(&exposures);
    let surface = MortalitySurface::new(
        &truth.country,
        sex,
        truth.ages.clone(),
        true,
        truth.years(),
        observed,
        Some(deaths),
        Some(exposures),
    )
    .map_err(|e| bad(e.to_string()))?;
    Ok((surface, truth.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_truth_is_valid_and_spans_1950_to_2016() {
        for sex in Sex::BOTH {
            let t = SyntheticTruth::lee_carter("SYN", sex, 4);
            assert_eq!(t.validate().unwrap(), sex);
            assert_eq!(t.ages.len(), 111);
            assert_eq!(t.years().first(), Some(&1950));
            assert_eq!(t.years().last(), Some(&2016));
        }
    }

    #[test]
    fn bad_truths_are_rejected() {
        let good = SyntheticTruth::lee_carter("SYN", Sex::Female, 1);
        let mut t = good.clone();
        t.beta[0] += 0.1;
        assert!(matches!(t.validate(), Err(ReportError::BadTruth(_))));
        let mut t = good.clone();
        t.alpha[110] = 0.5;
        assert!(matches!(t.validate(), Err(ReportError::BadTruth(_))));
        let mut t = good.clone();
        t.exposures[3] = 0.0;
        assert!(t.validate().is_err());
        let mut t = good;
        t.gamma = Some(vec![0.0; 5]);
        assert!(t.validate().is_err());
    }
}
