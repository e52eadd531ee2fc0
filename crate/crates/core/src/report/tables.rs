//! Country-by-column error tables and the strategy comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::ReportError;
use crate::evaluation::{BacktestCell, Metric, Strategy};
use crate::hmd::Sex;
use crate::models::ModelKind;

/// Row label of the per-sex mean row.
pub const MEAN_ROW: &str = "Mean";

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub sex: Sex,
    pub country: String,
    pub values: Vec<f64>,
}

/// One metric at one horizon: a row per country and sex, a column per
/// (model, strategy), and a mean row per sex. Values are on the report
/// scale (interval scores times 100).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub metric: Metric,
    pub horizon: usize,
    pub columns: Vec<(ModelKind, Strategy)>,
    /// Country rows followed by the mean row, sex by sex.
    pub rows: Vec<TableRow>,
}

/// Column order: models in their canonical order, Full before Partial.
fn column_order(cells: &[BacktestCell]) -> Vec<(ModelKind, Strategy)> {
    let mut cols: Vec<(ModelKind, Strategy)> =
        cells.iter().map(|c| (c.model, c.strategy)).collect();
    cols.sort_by_key(|&(m, s)| (m, Strategy::BOTH.iter().position(|&x| x == s)));
    cols.dedup();
    cols
}

impl ReportTable {
    /// Tabulate `metric` at horizon `h`. Countries keep their first-seen
    /// order; failed or missing cells are `NaN`.
    pub fn build(
        cells: &[BacktestCell],
        metric: Metric,
        horizon: usize,
    ) -> Result<Self, ReportError> {
        let at_h: Vec<&BacktestCell> = cells.iter().filter(|c| c.horizon == horizon).collect();
        if at_h.is_empty() {
            return Err(ReportError::IncompleteGrid(format!(
                "no cells at horizon {horizon}"
            )));
        }
        let columns = column_order(cells);
        let mut countries: Vec<&str> = Vec::new();
        for c in &at_h {
            if !countries.contains(&c.country.as_str()) {
                countries.push(&c.country);
            }
        }
        let lookup: BTreeMap<(&str, Sex, ModelKind, Strategy), &BacktestCell> = at_h
            .iter()
            .map(|c| ((c.country.as_str(), c.sex, c.model, c.strategy), *c))
            .collect();

        let mut rows = Vec::new();
        for sex in Sex::BOTH {
            if !at_h.iter().any(|c| c.sex == sex) {
                continue;
            }
            let start = rows.len();
            for &country in &countries {
                let values = columns
                    .iter()
                    .map(|&(m, s)| match lookup.get(&(country, sex, m, s)) {
                        Some(c) if !c.failed() => c.metric(metric) * metric.report_scale(),
                        _ => f64::NAN,
                    })
                    .collect();
                rows.push(TableRow {
                    sex,
                    country: country.to_string(),
                    values,
                });
            }
            let block = &rows[start..];
            let means = (0..columns.len())
                .map(|j| block.iter().map(|r| r.values[j]).sum::<f64>() / block.len() as f64)
                .collect();
            rows.push(TableRow {
                sex,
                country: MEAN_ROW.to_string(),
                values: means,
            });
        }
        Ok(ReportTable {
            metric,
            horizon,
            columns,
            rows,
        })
    }

    /// Index of the smallest value in a row, ties going to the earlier column.
    pub fn best_column(row: &TableRow) -> Option<usize> {
        row.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .fold(None, |best: Option<(usize, f64)>, (j, &v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((j, v)),
            })
            .map(|(j, _)| j)
    }

    pub fn column_label(col: (ModelKind, Strategy)) -> String {
        format!("{} {}", col.0.label(), col.1.label())
    }

    /// Base name for files holding this table, e.g. `mape_h1`.
    pub fn file_stem(&self) -> String {
        format!("{}_h{}", self.metric.id(), self.horizon)
    }

    /// CSV with a metadata line; values use round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# metric={} horizon={}\nsex,country",
            self.metric.id(),
            self.horizon
        );
        for (m, s) in &self.columns {
            let _ = write!(out, ",{}:{}", m.id(), s.id());
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.sex.code(), r.country);
            for v in &r.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let bad = |m: String| ReportError::Parse(m);
        let mut lines = text.lines();
        let meta: BTreeMap<&str, &str> = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| bad("missing metadata line".into()))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let metric: Metric = meta
            .get("metric")
            .ok_or_else(|| bad("metadata lacks metric".into()))?
            .parse()
            .map_err(|e| bad(format!("{e}")))?;
        let horizon: usize = meta
            .get("horizon")
            .and_then(|h| h.parse().ok())
            .ok_or_else(|| bad("metadata lacks horizon".into()))?;
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let mut fields = header.split(',');
        if fields.next() != Some("sex") || fields.next() != Some("country") {
            return Err(bad(format!("unexpected header '{header}'")));
        }
        let columns = fields
            .map(|f| {
                let (m, s) = f
                    .split_once(':')
                    .ok_or_else(|| bad(format!("bad column '{f}'")))?;
                Ok((
                    m.parse::<ModelKind>().map_err(|e| bad(e.to_string()))?,
                    s.parse::<Strategy>().map_err(|e| bad(e.to_string()))?,
                ))
            })
            .collect::<Result<Vec<_>, ReportError>>()?;
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != columns.len() + 2 {
                return Err(bad(format!("wrong column count in '{line}'")));
            }
            let values = f[2..]
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| bad(format!("bad value '{v}'")))
                })
                .collect::<Result<_, _>>()?;
            rows.push(TableRow {
                sex: f[0]
                    .parse()
                    .map_err(|_| bad(format!("bad sex '{}'", f[0])))?,
                country: f[1].to_string(),
                values,
            });
        }
        Ok(ReportTable {
            metric,
            horizon,
            columns,
            rows,
        })
    }

    /// Aligned text with two decimals; the best value in each row is starred.
    pub fn to_text(&self) -> String {
        let labels: Vec<String> = self
            .columns
            .iter()
            .map(|&c| Self::column_label(c))
            .collect();
        let width = labels.iter().map(String::len).max().unwrap_or(0).max(8) + 2;
        let mut out = format!("{} at h = {}\n", self.metric.label(), self.horizon);
        let mut current: Option<Sex> = None;
        for r in &self.rows {
            if current != Some(r.sex) {
                current = Some(r.sex);
                let _ = write!(out, "\n{:<10}", r.sex.to_string());
                for l in &labels {
                    let _ = write!(out, "{l:>width$}");
                }
                out.push('\n');
            }
            let best = Self::best_column(r);
            let _ = write!(out, "{:<10}", r.country);
            for (j, v) in r.values.iter().enumerate() {
                let mark = if best == Some(j) { "*" } else { " " };
                let cell = if v.is_nan() {
                    "failed".to_string()
                } else {
                    format!("{v:.2}")
                };
                let _ = write!(out, "{:>w$}{mark}", cell, w = width - 1);
            }
            out.push('\n');
        }
        out
    }
}

/// Partial versus Full for one sex and model.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyVerdict {
    pub sex: Sex,
    pub model: ModelKind,
    pub partial_mean: f64,
    pub full_mean: f64,
    pub winner: Strategy,
    /// Set when the means are equal; the verdict then defaults to Full.
    pub tie: bool,
}

impl StrategyVerdict {
    /// How much lower the Partial mean is than the Full mean.
    pub fn margin(&self) -> f64 {
        self.full_mean - self.partial_mean
    }
}

type Pair = [Option<f64>; 2];

/// Compare the country-mean error of the two strategies for every sex and
/// model in the grid. Every country must have a successful cell under both
/// strategies.
pub fn summarize_strategy_winner(
    cells: &[BacktestCell],
    metric: Metric,
    horizon: usize,
) -> Result<Vec<StrategyVerdict>, ReportError> {
    let at_h: Vec<&BacktestCell> = cells.iter().filter(|c| c.horizon == horizon).collect();
    // (sex, model) -> country -> [Full, Partial]
    let mut groups: BTreeMap<(Sex, ModelKind), BTreeMap<&str, Pair>> = BTreeMap::new();
    for c in &at_h {
        if let Some(f) = &c.failure {
            return Err(ReportError::IncompleteGrid(format!(
                "{} {} {} {} h={horizon} failed: {f}",
                c.country, c.sex, c.model, c.strategy
            )));
        }
        let slot = usize::from(c.strategy == Strategy::PartialFit);
        groups
            .entry((c.sex, c.model))
            .or_default()
            .entry(&c.country)
            .or_default()[slot] = Some(c.metric(metric));
    }
    if groups.is_empty() {
        return Err(ReportError::IncompleteGrid(format!(
            "no cells at horizon {horizon}"
        )));
    }
    let mut out = Vec::new();
    for ((sex, model), countries) in groups {
        let (mut full, mut partial) = (0.0, 0.0);
        for (country, [f, p]) in &countries {
            match (f, p) {
                (Some(f), Some(p)) => {
                    full += f;
                    partial += p;
                }
                _ => {
                    return Err(ReportError::IncompleteGrid(format!(
                        "{country} {sex} {model} lacks a strategy at h={horizon}"
                    )))
                }
            }
        }
        let n = countries.len() as f64;
        let scale = metric.report_scale();
        let (full_mean, partial_mean) = (full / n * scale, partial / n * scale);
        let tie = full_mean == partial_mean;
        let winner = if partial_mean < full_mean {
            Strategy::PartialFit
        } else {
            Strategy::FullFitThenTruncate
        };
        out.push(StrategyVerdict {
            sex,
            model,
            partial_mean,
            full_mean,
            winner,
            tie,
        });
    }
    Ok(out)
}

/// Verdicts as aligned text.
pub fn verdicts_to_text(verdicts: &[StrategyVerdict], metric: Metric, horizon: usize) -> String {
    let mut out = format!("{} at h = {horizon}: mean over countries\n", metric.label());
    let _ = writeln!(
        out,
        "{:<8}{:<16}{:>10}{:>10}{:>10}  winner",
        "sex", "model", "Full", "Partial", "margin"
    );
    for v in verdicts {
        let _ = writeln!(
            out,
            "{:<8}{:<16}{:>10.2}{:>10.2}{:>10.2}  {}{}",
            v.sex.to_string(),
            v.model.label(),
            v.full_mean,
            v.partial_mean,
            v.margin(),
            v.winner.label(),
            if v.tie { " (tie)" } else { "" }
        );
    }
    out
}
