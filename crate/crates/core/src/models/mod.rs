//! Stochastic mortality models fitted to a [`MortalitySurface`].
//!
//! Every model shares one log-rate structure,
//!
//! ```text
//! log m[x,t] = alpha[x] + sum_j beta_j[x] * kappa_j[t] + gamma[t - x]
//! ```
//!
//! with the loadings `beta_j` either estimated (Lee-Carter) or fixed by the
//! model (APC: a unit loading; Plat: `1`, `xbar - x` and `(xbar - x)^+`).

mod constraints;
mod gaussian;
mod io;
mod poisson;
mod svd;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::hmd::MortalitySurface;

pub use constraints::{cohort_constraint_residuals, rotate_cohort_trends};
pub use gaussian::fit_lc_gaussian;
pub use io::{read_fitted_csv, write_fitted_csv};
pub use poisson::{fit_age_period, fit_apc, fit_lc_poisson, fit_plat, poisson_deviance};
pub use svd::{jacobi_svd, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    LcPoisson,
    LcGaussian,
    LcGaussian2,
    Apc,
    Plat,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::LcPoisson,
        ModelKind::LcGaussian,
        ModelKind::LcGaussian2,
        ModelKind::Apc,
        ModelKind::Plat,
    ];

    /// Identifier used on the command line and in CSV files.
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::LcPoisson => "lc-poisson",
            ModelKind::LcGaussian => "lc-gaussian",
            ModelKind::LcGaussian2 => "lc2-gaussian",
            ModelKind::Apc => "apc",
            ModelKind::Plat => "plat",
        }
    }

    /// Column heading used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::LcPoisson => "LC (Poisson)",
            ModelKind::LcGaussian => "LC (Gaussian)",
            ModelKind::LcGaussian2 => "LC2 (Gaussian)",
            ModelKind::Apc => "APC",
            ModelKind::Plat => "Plat",
        }
    }

    pub fn uses_poisson(self) -> bool {
        !matches!(self, ModelKind::LcGaussian | ModelKind::LcGaussian2)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .or(match s.as_str() {
                "lc2" | "lc-gaussian2" => Some(ModelKind::LcGaussian2),
                "lc" => Some(ModelKind::LcPoisson),
                _ => None,
            })
            .ok_or_else(|| FitError::InvalidSpec(format!("unknown model '{s}'")))
    }
}

/// Which model to fit and how hard to try.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Number of Plat period indices (3 on the full age range, 2 on retiree ages).
    pub plat_period_terms: usize,
    pub max_iter: usize,
    /// Absolute change in the objective that counts as converged.
    pub tol: f64,
    /// Cohorts with fewer observed cells keep a zero effect during fitting.
    pub min_cohort_cells: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            plat_period_terms: 3,
            max_iter: 2000,
            tol: 1e-8,
            min_cohort_cells: 5,
        }
    }

    pub fn with_plat_terms(mut self, terms: usize) -> Self {
        self.plat_period_terms = terms;
        self
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_iter == 0 {
            return Err(FitError::InvalidSpec("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(FitError::InvalidSpec("tol must be positive".into()));
        }
        if !matches!(self.plat_period_terms, 2 | 3) {
            return Err(FitError::InvalidSpec(format!(
                "plat_period_terms must be 2 or 3, got {}",
                self.plat_period_terms
            )));
        }
        Ok(())
    }
}

/// Estimated cohort effects, one per birth cohort spanned by the training grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortEffect {
    /// Birth year of `values[0]` (first year minus top age).
    pub first_cohort: i32,
    pub values: Vec<f64>,
    /// False for thin cohorts that were held at zero during fitting.
    pub estimated: Vec<bool>,
}

impl CohortEffect {
    pub fn value(&self, cohort: i32) -> Option<f64> {
        let k = cohort - self.first_cohort;
        (k >= 0)
            .then(|| self.values.get(k as usize).copied())
            .flatten()
    }

    pub fn cohorts(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.values.len()).map(move |k| self.first_cohort + k as i32)
    }

    /// The estimated cohorts and their effects, in cohort order.
    pub fn estimated_series(&self) -> Vec<(i32, f64)> {
        self.cohorts()
            .zip(&self.values)
            .zip(&self.estimated)
            .filter(|(_, &e)| e)
            .map(|((c, &v), _)| (c, v))
            .collect()
    }

    pub fn last_estimated(&self) -> Option<i32> {
        self.estimated_series().last().map(|&(c, _)| c)
    }
}

/// Parameters of one model fitted on one surface.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    /// Static age pattern.
    pub alpha: Vec<f64>,
    /// Age loadings, one vector per period index.
    pub betas: Vec<Vec<f64>>,
    /// Period indices over the training years.
    pub kappas: Vec<Vec<f64>>,
    pub gamma: Option<CohortEffect>,
    /// Residual variance of Gaussian fits.
    pub sigma2: Option<f64>,
    /// Objective after each iteration: Poisson log-likelihood relative to the
    /// saturated model, or minus half the residual sum of squares.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

impl FittedModel {
    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn objective(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn iterations(&self) -> usize {
        self.loglik_trace.len().saturating_sub(1)
    }

    /// Mean of the training ages (the Plat pivot age).
    pub fn mean_age(&self) -> f64 {
        mean_age(&self.ages)
    }

    pub fn log_rate(&self, i: usize, j: usize) -> f64 {
        let mut eta = self.alpha[i];
        for (b, k) in self.betas.iter().zip(&self.kappas) {
            eta += b[i] * k[j];
        }
        if let Some(g) = &self.gamma {
            eta += g.value(self.years[j] - self.ages[i] as i32).unwrap_or(0.0);
        }
        eta
    }

    pub fn fitted_log_rates(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_ages(), self.n_years(), |i, j| self.log_rate(i, j))
    }
}

pub(crate) fn mean_age(ages: &[u32]) -> f64 {
    ages.iter().map(|&a| a as f64).sum::<f64>() / ages.len() as f64
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("{0} needs deaths and exposures")]
    MissingCounts(ModelKind),
    #[error("surface too small to fit: {ages} ages x {years} years (need at least 3 x 3)")]
    DegenerateSurface { ages: usize, years: usize },
    #[error("objective is not finite: {0}")]
    NonFiniteObjective(String),
    #[error("rate at age {age}, year {year} is {value}; log-rates need positive rates")]
    NonPositiveRate { age: u32, year: i32, value: f64 },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("malformed model file: {0}")]
    Parse(String),
}

/// Fit `spec` to `surface`, dispatching on the model kind.
pub fn fit(spec: &ModelSpec, surface: &MortalitySurface) -> Result<FittedModel, FitError> {
    spec.validate()?;
    check_size(surface)?;
    match spec.kind {
        ModelKind::LcGaussian => fit_lc_gaussian(surface, 1).map(|m| with_spec(m, spec)),
        ModelKind::LcGaussian2 => fit_lc_gaussian(surface, 2).map(|m| with_spec(m, spec)),
        ModelKind::LcPoisson => fit_lc_poisson(surface, spec),
        ModelKind::Apc => fit_apc(surface, spec),
        ModelKind::Plat => fit_plat(surface, spec.plat_period_terms, spec),
    }
}

fn with_spec(mut m: FittedModel, spec: &ModelSpec) -> FittedModel {
    m.spec = *spec;
    m
}

pub(crate) fn check_size(surface: &MortalitySurface) -> Result<(), FitError> {
    if surface.n_ages() < 3 || surface.n_years() < 3 {
        return Err(FitError::DegenerateSurface {
            ages: surface.n_ages(),
            years: surface.n_years(),
        });
    }
    Ok(())
}

pub(crate) fn log_rates(surface: &MortalitySurface) -> Result<DMatrix<f64>, FitError> {
    let rates = surface.rates();
    for i in 0..rates.nrows() {
        for j in 0..rates.ncols() {
            let v = rates[(i, j)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(FitError::NonPositiveRate {
                    age: surface.ages()[i],
                    year: surface.years()[j],
                    value: v,
                });
            }
        }
    }
    Ok(rates.map(f64::ln))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_ids_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.id().parse::<ModelKind>().unwrap(), k);
        }
        assert!("cbd".parse::<ModelKind>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(ModelKind::Plat).validate().is_ok());
        assert!(ModelSpec::new(ModelKind::Plat)
            .with_plat_terms(4)
            .validate()
            .is_err());
        let mut s = ModelSpec::new(ModelKind::Apc);
        s.tol = 0.0;
        assert!(s.validate().is_err());
        s.tol = 1e-8;
        s.max_iter = 0;
        assert!(s.validate().is_err());
    }
}
