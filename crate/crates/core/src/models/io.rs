//! `param,index,value` CSV bundles for fitted models.

use std::collections::BTreeMap;
use std::io::Write;

use super::{CohortEffect, FitError, FittedModel, ModelKind, ModelSpec};

/// Write a fitted model. Only the final objective of the trace is kept.
pub fn write_fitted_csv<W: Write>(model: &FittedModel, mut out: W) -> std::io::Result<()> {
    let thin: Vec<String> = model
        .gamma
        .iter()
        .flat_map(|g| {
            g.cohorts()
                .zip(&g.estimated)
                .filter(|(_, &e)| !e)
                .map(|(c, _)| c.to_string())
        })
        .collect();
    write!(
        out,
        "# model={} plat_terms={} max_iter={} tol={} min_cohort_cells={} converged={} objective={} iterations={}",
        model.spec.kind,
        model.spec.plat_period_terms,
        model.spec.max_iter,
        model.spec.tol,
        model.spec.min_cohort_cells,
        model.converged,
        model.objective(),
        model.iterations(),
    )?;
    if let Some(s2) = model.sigma2 {
        write!(out, " sigma2={s2}")?;
    }
    if model.gamma.is_some() {
        write!(out, " thin_cohorts={}", thin.join(";"))?;
    }
    writeln!(out)?;
    writeln!(out, "param,index,value")?;
    for (age, a) in model.ages.iter().zip(&model.alpha) {
        writeln!(out, "alpha,{age},{a}")?;
    }
    for (c, b) in model.betas.iter().enumerate() {
        for (age, v) in model.ages.iter().zip(b) {
            writeln!(out, "beta{},{age},{v}", c + 1)?;
        }
    }
    for (c, k) in model.kappas.iter().enumerate() {
        for (year, v) in model.years.iter().zip(k) {
            writeln!(out, "kappa{},{year},{v}", c + 1)?;
        }
    }
    if let Some(g) = &model.gamma {
        for (cohort, v) in g.cohorts().zip(&g.values) {
            writeln!(out, "gamma,{cohort},{v}")?;
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> FitError {
    FitError::Parse(msg.into())
}

/// Read a model written by [`write_fitted_csv`].
pub fn read_fitted_csv(text: &str) -> Result<FittedModel, FitError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let meta = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| bad("missing metadata line"))?;
    let meta: BTreeMap<&str, &str> = meta
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let get = |k: &str| {
        meta.get(k)
            .copied()
            .ok_or_else(|| bad(format!("metadata lacks '{k}'")))
    };
    let num = |k: &str| -> Result<f64, FitError> {
        get(k)?.parse().map_err(|_| bad(format!("bad '{k}'")))
    };

    let kind: ModelKind = get("model")?.parse()?;
    let spec = ModelSpec {
        kind,
        plat_period_terms: num("plat_terms")? as usize,
        max_iter: num("max_iter")? as usize,
        tol: num("tol")?,
        min_cohort_cells: num("min_cohort_cells")? as usize,
    };
    let thin: Vec<i32> = match meta.get("thin_cohorts") {
        Some(s) if !s.is_empty() => s
            .split(';')
            .map(|c| c.parse().map_err(|_| bad("bad thin cohort")))
            .collect::<Result<_, _>>()?,
        _ => Vec::new(),
    };

    if lines.next().map(str::trim) != Some("param,index,value") {
        return Err(bad("missing 'param,index,value' header"));
    }
    let mut params: BTreeMap<String, Vec<(i64, f64)>> = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad(format!("bad row '{line}'")));
        }
        let index: i64 = f[1]
            .parse()
            .map_err(|_| bad(format!("bad index in '{line}'")))?;
        let value: f64 = f[2]
            .parse()
            .map_err(|_| bad(format!("bad value in '{line}'")))?;
        params
            .entry(f[0].to_string())
            .or_default()
            .push((index, value));
    }
    let take = |name: &str| params.get(name).cloned().unwrap_or_default();
    let alpha_rows = take("alpha");
    if alpha_rows.is_empty() {
        return Err(bad("no alpha rows"));
    }
    let ages: Vec<u32> = alpha_rows.iter().map(|r| r.0 as u32).collect();
    let alpha: Vec<f64> = alpha_rows.iter().map(|r| r.1).collect();
    let betas: Vec<Vec<f64>> = (1..=3)
        .map(|c| take(&format!("beta{c}")))
        .take_while(|v| !v.is_empty())
        .map(|v| v.into_iter().map(|r| r.1).collect())
        .collect();
    let kappa_rows: Vec<Vec<(i64, f64)>> = (1..=3)
        .map(|c| take(&format!("kappa{c}")))
        .take_while(|v| !v.is_empty())
        .collect();
    if kappa_rows.is_empty() || kappa_rows.len() != betas.len() {
        return Err(bad("loadings and period indices do not pair up"));
    }
    let years: Vec<i32> = kappa_rows[0].iter().map(|r| r.0 as i32).collect();
    let kappas = kappa_rows
        .into_iter()
        .map(|v| v.into_iter().map(|r| r.1).collect())
        .collect();
    let gamma_rows = take("gamma");
    let gamma = (!gamma_rows.is_empty()).then(|| CohortEffect {
        first_cohort: gamma_rows[0].0 as i32,
        estimated: gamma_rows
            .iter()
            .map(|r| !thin.contains(&(r.0 as i32)))
            .collect(),
        values: gamma_rows.iter().map(|r| r.1).collect(),
    });
    Ok(FittedModel {
        spec,
        ages,
        years,
        alpha,
        betas,
        kappas,
        gamma,
        sigma2: meta.get("sigma2").and_then(|s| s.parse().ok()),
        loglik_trace: vec![num("objective")?],
        converged: get("converged")? == "true",
    })
}
