use std::fmt;
use std::io::Write;
use std::str::FromStr;

use super::{BacktestCell, EvalError, Strategy};
use crate::hmd::Sex;
use crate::models::ModelKind;

pub const CELLS_HEADER: &str = "country,sex,model,strategy,horizon,metric,value,n_origins,failed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Mape,
    Rmspe,
    MeanIntervalScore,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mape, Metric::Rmspe, Metric::MeanIntervalScore];

    pub fn id(self) -> &'static str {
        match self {
            Metric::Mape => "mape",
            Metric::Rmspe => "rmspe",
            Metric::MeanIntervalScore => "mean_interval_score",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Mape => "MAPE",
            Metric::Rmspe => "RMSPE",
            Metric::MeanIntervalScore => "Mean interval score (x100)",
        }
    }

    /// Factor applied when the metric is shown in a report table.
    pub fn report_scale(self) -> f64 {
        match self {
            Metric::MeanIntervalScore => 100.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mape" => Ok(Metric::Mape),
            "rmspe" => Ok(Metric::Rmspe),
            "mean_interval_score" | "interval_score" | "interval" | "mis" => {
                Ok(Metric::MeanIntervalScore)
            }
            other => Err(EvalError::Parse(format!("unknown metric '{other}'"))),
        }
    }
}

/// Long format: one row per cell and metric. Metrics of failed cells are `NaN`.
pub fn write_cells_csv<W: Write>(cells: &[BacktestCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CELLS_HEADER}")?;
    for c in cells {
        for m in Metric::ALL {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.country,
                c.sex.code(),
                c.model.id(),
                c.strategy.id(),
                c.horizon,
                m.id(),
                c.metric(m),
                c.n_origins,
                c.failed()
            )?;
        }
    }
    Ok(())
}

/// Inverse of [`write_cells_csv`]. Failure messages are not stored in the
/// file, so failed cells come back with the message `"failed"`.
pub fn read_cells_csv(text: &str) -> Result<Vec<BacktestCell>, EvalError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CELLS_HEADER) {
        return Err(EvalError::Parse(format!(
            "expected header '{CELLS_HEADER}'"
        )));
    }
    let mut cells: Vec<BacktestCell> = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| EvalError::Parse(format!("line {}: bad {what} in '{line}'", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad("column count"));
        }
        let sex: Sex = f[1].parse().map_err(|_| bad("sex"))?;
        let model: ModelKind = f[2].parse().map_err(|_| bad("model"))?;
        let strategy: Strategy = f[3].parse()?;
        let horizon: usize = f[4].parse().map_err(|_| bad("horizon"))?;
        let metric: Metric = f[5].parse()?;
        let value: f64 = f[6].parse().map_err(|_| bad("value"))?;
        let n_origins: usize = f[7].parse().map_err(|_| bad("n_origins"))?;
        let failed: bool = f[8].parse().map_err(|_| bad("failed flag"))?;

        let same = |c: &BacktestCell| {
            c.country == f[0]
                && c.sex == sex
                && c.model == model
                && c.strategy == strategy
                && c.horizon == horizon
        };
        if !cells.last().is_some_and(same) {
            cells.push(BacktestCell {
                country: f[0].to_string(),
                sex,
                model,
                strategy,
                horizon,
                mape: f64::NAN,
                rmspe: f64::NAN,
                mean_interval_score: f64::NAN,
                n_origins,
                failure: failed.then(|| "failed".to_string()),
            });
        }
        let cell = cells.last_mut().unwrap();
        match metric {
            Metric::Mape => cell.mape = value,
            Metric::Rmspe => cell.rmspe = value,
            Metric::MeanIntervalScore => cell.mean_interval_score = value,
        }
    }
    Ok(cells)
}
