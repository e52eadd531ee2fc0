//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::ReportError;
use crate::evaluation::{BacktestSettings, Strategy};
use crate::hmd::{Country, Sex, COUNTRIES};
use crate::models::{ModelKind, ModelSpec};

/// Environment variable consulted when the config names no data directory.
pub const DATA_DIR_ENV: &str = "MORTCAST_DATA_DIR";

/// Declarative description of a backtest grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: Option<PathBuf>,
    /// Country codes, in report order.
    pub countries: Vec<String>,
    pub sexes: Vec<Sex>,
    pub models: Vec<ModelKind>,
    pub strategies: Vec<Strategy>,
    pub holdout: usize,
    pub alpha: f64,
    pub n_sims: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub rmspe_outside_root: bool,
    /// First calendar year kept from the data files.
    pub start_year: i32,
    /// Per-country overrides of the last data year.
    pub last_years: BTreeMap<String, i32>,
    pub plat_terms_full: usize,
    pub plat_terms_partial: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub min_cohort_cells: usize,
    /// Simulate populations instead of reading data files.
    pub synthetic: bool,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let spec = ModelSpec::new(ModelKind::LcPoisson);
        ExperimentConfig {
            data_dir: None,
            countries: COUNTRIES.iter().map(|c| c.code.to_string()).collect(),
            sexes: Sex::BOTH.to_vec(),
            models: ModelKind::ALL.to_vec(),
            strategies: Strategy::BOTH.to_vec(),
            holdout: 30,
            alpha: 0.2,
            n_sims: 5000,
            seed: 2019,
            output_dir: PathBuf::from("mortcast-out"),
            rmspe_outside_root: false,
            start_year: 1950,
            last_years: BTreeMap::new(),
            plat_terms_full: 3,
            plat_terms_partial: 2,
            max_iter: spec.max_iter,
            tol: spec.tol,
            min_cohort_cells: spec.min_cohort_cells,
            synthetic: false,
            jobs: 0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ReportError {
    ReportError::ConfigInvalid(msg.into())
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ReportError> {
    value
        .parse()
        .map_err(|_| invalid(format!("{key}: cannot parse '{value}'")))
}

impl ExperimentConfig {
    /// Parse `key = value` lines. Blank lines and `#` comments are ignored;
    /// unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut c = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                invalid(format!("line {}: expected key = value, got '{raw}'", n + 1))
            })?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ReportError> {
        match key {
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "countries" => {
                self.countries = if value.eq_ignore_ascii_case("all") {
                    COUNTRIES.iter().map(|c| c.code.to_string()).collect()
                } else {
                    list(value)
                        .map(|s| {
                            Country::lookup(s)
                                .map_or_else(|| s.to_ascii_uppercase(), |c| c.code.to_string())
                        })
                        .collect()
                }
            }
            "sexes" => {
                self.sexes = list(value)
                    .map(|s| s.parse::<Sex>().map_err(|e| invalid(format!("sexes: {e}"))))
                    .collect::<Result<_, _>>()?
            }
            "models" => {
                self.models = list(value)
                    .map(|s| {
                        s.parse::<ModelKind>()
                            .map_err(|e| invalid(format!("models: {e}")))
                    })
                    .collect::<Result<_, _>>()?
            }
            "strategies" => {
                self.strategies = list(value)
                    .map(|s| {
                        s.parse::<Strategy>()
                            .map_err(|e| invalid(format!("strategies: {e}")))
                    })
                    .collect::<Result<_, _>>()?
            }
            "holdout" => self.holdout = number(key, value)?,
            "alpha" => self.alpha = number(key, value)?,
            "n_sims" => self.n_sims = number(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "rmspe_outside_root" => self.rmspe_outside_root = number(key, value)?,
            "start_year" => self.start_year = number(key, value)?,
            "plat_terms_full" => self.plat_terms_full = number(key, value)?,
            "plat_terms_partial" => self.plat_terms_partial = number(key, value)?,
            "max_iter" => self.max_iter = number(key, value)?,
            "tol" => self.tol = number(key, value)?,
            "min_cohort_cells" => self.min_cohort_cells = number(key, value)?,
            "synthetic" => self.synthetic = number(key, value)?,
            "jobs" => self.jobs = number(key, value)?,
            _ => match key.strip_prefix("last_year.") {
                Some(code) if !code.is_empty() => {
                    self.last_years
                        .insert(code.to_ascii_uppercase(), number(key, value)?);
                }
                _ => return Err(invalid(format!("unknown key '{key}'"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.holdout < 1 {
            return Err(invalid("holdout must be at least 1"));
        }
        if self.n_sims < 100 {
            return Err(invalid(format!(
                "n_sims must be at least 100, got {}",
                self.n_sims
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.countries.is_empty()
            || self.sexes.is_empty()
            || self.models.is_empty()
            || self.strategies.is_empty()
        {
            return Err(invalid(
                "countries, sexes, models and strategies must be non-empty",
            ));
        }
        if !self.synthetic {
            if let Some(bad) = self.countries.iter().find(|c| Country::lookup(c).is_none()) {
                return Err(invalid(format!("unknown country code '{bad}'")));
            }
        }
        for terms in [self.plat_terms_full, self.plat_terms_partial] {
            if !matches!(terms, 2 | 3) {
                return Err(invalid(format!(
                    "Plat period terms must be 2 or 3, got {terms}"
                )));
            }
        }
        let probe = ModelSpec {
            max_iter: self.max_iter,
            tol: self.tol,
            ..ModelSpec::new(ModelKind::Apc)
        };
        probe.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// Configured data directory, falling back to the environment.
    pub fn resolve_data_dir(&self) -> Option<PathBuf> {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }

    /// Last data year for a country: override, then the country table, then `None`.
    pub fn last_year(&self, code: &str) -> Option<i32> {
        self.last_years
            .get(code)
            .copied()
            .or_else(|| Country::lookup(code).map(|c| c.last_year))
    }

    /// Model settings for one strategy; Plat's term count depends on the
    /// fitting range.
    pub fn model_spec(&self, kind: ModelKind, strategy: Strategy) -> ModelSpec {
        ModelSpec {
            kind,
            plat_period_terms: match strategy {
                Strategy::PartialFit => self.plat_terms_partial,
                Strategy::FullFitThenTruncate => self.plat_terms_full,
            },
            max_iter: self.max_iter,
            tol: self.tol,
            min_cohort_cells: self.min_cohort_cells,
        }
    }

    pub fn backtest_settings(&self) -> BacktestSettings {
        BacktestSettings {
            holdout: self.holdout,
            alpha: self.alpha,
            n_sims: self.n_sims,
            seed: self.seed,
            rmspe_outside_root: self.rmspe_outside_root,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_the_full_grid() {
        let c = ExperimentConfig::default();
        assert_eq!(c.countries.len(), 19);
        assert_eq!((c.holdout, c.alpha, c.n_sims), (30, 0.2, 5000));
        assert_eq!(
            c.countries.len() * c.sexes.len() * c.models.len() * c.strategies.len() * c.holdout,
            11400
        );
    }

    #[test]
    fn parses_keys_and_comments() {
        let c = ExperimentConfig::parse(
            "# demo\ncountries = AUS, swe\nmodels = lc-poisson,plat\nholdout=5 # short\nn_sims = 200\n\
             seed=9\nrmspe_outside_root = true\nlast_year.AUS = 2010\nsexes=F\n",
        )
        .unwrap();
        assert_eq!(c.countries, ["AUS", "SWE"]);
        assert_eq!(c.models, [ModelKind::LcPoisson, ModelKind::Plat]);
        assert_eq!((c.holdout, c.n_sims, c.seed), (5, 200, 9));
        assert!(c.rmspe_outside_root);
        assert_eq!(c.last_year("AUS"), Some(2010));
        assert_eq!(c.last_year("SWE"), Some(2016));
        assert_eq!(c.sexes, [Sex::Female]);
        assert_eq!(
            c.model_spec(ModelKind::Plat, Strategy::PartialFit)
                .plat_period_terms,
            2
        );
        assert_eq!(
            c.model_spec(ModelKind::Plat, Strategy::FullFitThenTruncate)
                .plat_period_terms,
            3
        );
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "colour = blue",
            "holdout = 0",
            "n_sims = 50",
            "alpha = 1.5",
            "countries = XYZ",
            "models = cbd",
            "holdout",
            "plat_terms_full = 4",
        ] {
            assert!(
                matches!(
                    ExperimentConfig::parse(text),
                    Err(ReportError::ConfigInvalid(_))
                ),
                "{text} accepted"
            );
        }
        assert!(ExperimentConfig::parse("synthetic = true\ncountries = XYZ").is_ok());
        let c = ExperimentConfig::parse("countries = DNK,gbrtenw").unwrap();
        assert_eq!(c.countries, ["DEN", "EW"]);
    }
}
