//! Poisson maximum likelihood for the log-bilinear family.
//!
//! Deaths are modelled as `D[x,t] ~ Poisson(E[x,t] * exp(eta[x,t]))`.
//!
//! With fixed loadings (APC, Plat) the model is a log-link GLM and all
//! parameters take a joint Newton step per iteration. The Hessian is singular
//! along the identifiability directions, where the score is zero, so a tiny
//! ridge leaves the fixed point unchanged. Lee-Carter loadings make the
//! predictor bilinear; there the parameters are updated block by block with
//! one Newton step per parameter. Parameters within a block touch disjoint
//! cells, so each step can be halved until its own cells' deviance does not
//! increase. Both schemes are monotone in the log-likelihood.

use nalgebra::{DMatrix, DVector};

use super::constraints::{centre_period_indices, rotate_cohort_trends};
use super::gaussian::fit_lc_gaussian;
use super::{
    check_size, log_rates, mean_age, CohortEffect, FitError, FittedModel, ModelKind, ModelSpec,
};
use crate::hmd::MortalitySurface;

const MAX_HALVINGS: usize = 60;

/// Half the unit Poisson deviance of one cell, `d ln(d/mu) - (d - mu)`,
/// evaluated without cancellation near `mu = d`.
#[inline]
fn half_deviance(d: f64, mu: f64) -> f64 {
    if d <= 0.0 {
        mu
    } else {
        let u = mu / d - 1.0;
        d * (u - u.ln_1p())
    }
}

/// Poisson deviance of `log_rates` against observed deaths and exposures.
/// Cells with zero or missing exposure are ignored.
pub fn poisson_deviance(
    deaths: &DMatrix<f64>,
    exposures: &DMatrix<f64>,
    log_rates: &DMatrix<f64>,
) -> f64 {
    let mut total = 0.0;
    for ((&d, &e), &eta) in deaths.iter().zip(exposures.iter()).zip(log_rates.iter()) {
        if e > 0.0 && d.is_finite() && e.is_finite() {
            total += half_deviance(d, e * eta.exp());
        }
    }
    2.0 * total
}

struct Counts {
    deaths: DMatrix<f64>,
    exposures: DMatrix<f64>,
    observed: DMatrix<bool>,
}

fn prepare_counts(surface: &MortalitySurface, kind: ModelKind) -> Result<Counts, FitError> {
    let exposures = surface
        .exposures()
        .ok_or(FitError::MissingCounts(kind))?
        .clone();
    let deaths = match surface.deaths() {
        Some(d) => d.clone(),
        None => surface.rates().component_mul(&exposures),
    };
    let (p, n) = deaths.shape();
    let mut observed = DMatrix::from_element(p, n, false);
    let mut any = false;
    for i in 0..p {
        for j in 0..n {
            let (d, e) = (deaths[(i, j)], exposures[(i, j)]);
            if e == 0.0 && d > 0.0 {
                return Err(FitError::NonFiniteObjective(format!(
                    "{d} deaths on zero exposure at age {}, year {}",
                    surface.ages()[i],
                    surface.years()[j]
                )));
            }
            let ok = e > 0.0 && e.is_finite() && d.is_finite() && d >= 0.0;
            observed[(i, j)] = ok;
            any |= ok;
        }
    }
    if !any {
        return Err(FitError::MissingCounts(kind));
    }
    Ok(Counts {
        deaths,
        exposures,
        observed,
    })
}

struct Engine<'a> {
    counts: &'a Counts,
    eta: DMatrix<f64>,
    alpha: Vec<f64>,
    betas: Vec<Vec<f64>>,
    kappas: Vec<Vec<f64>>,
    free_loadings: bool,
    gamma: Option<(Vec<f64>, Vec<bool>)>,
    cells: Vec<(usize, usize, f64)>,
}

impl<'a> Engine<'a> {
    fn p(&self) -> usize {
        self.eta.nrows()
    }

    fn n(&self) -> usize {
        self.eta.ncols()
    }

    fn cohort_index(&self, i: usize, j: usize) -> usize {
        j + self.p() - 1 - i
    }

    fn recompute_eta(&mut self) {
        let (p, n) = (self.p(), self.n());
        for i in 0..p {
            for j in 0..n {
                let mut eta = self.alpha[i];
                for (b, k) in self.betas.iter().zip(&self.kappas) {
                    eta += b[i] * k[j];
                }
                if let Some((g, _)) = &self.gamma {
                    eta += g[self.cohort_index(i, j)];
                }
                self.eta[(i, j)] = eta;
            }
        }
    }

    fn loglik(&self) -> f64 {
        let c = self.counts;
        let mut total = 0.0;
        for idx in 0..self.eta.len() {
            if c.observed[idx] {
                total += half_deviance(c.deaths[idx], c.exposures[idx] * self.eta[idx].exp());
            }
        }
        -total
    }

    /// One safeguarded Newton step for the parameter whose cells are in
    /// `self.cells` (with their coefficients). Returns the accepted step.
    fn newton_step(&mut self) -> f64 {
        let c = self.counts;
        let (mut grad, mut hess, mut before) = (0.0, 0.0, 0.0);
        for &(i, j, w) in &self.cells {
            if !c.observed[(i, j)] || w == 0.0 {
                continue;
            }
            let d = c.deaths[(i, j)];
            let mu = c.exposures[(i, j)] * self.eta[(i, j)].exp();
            grad += w * (d - mu);
            hess += w * w * mu;
            before += half_deviance(d, mu);
        }
        if !(hess > 0.0) || !grad.is_finite() {
            return 0.0;
        }
        let mut step = grad / hess;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut after = 0.0;
            for &(i, j, w) in &self.cells {
                if c.observed[(i, j)] && w != 0.0 {
                    let mu = c.exposures[(i, j)] * (self.eta[(i, j)] + step * w).exp();
                    after += half_deviance(c.deaths[(i, j)], mu);
                }
            }
            if after <= before {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return 0.0;
        }
        for &(i, j, w) in &self.cells {
            self.eta[(i, j)] += step * w;
        }
        step
    }

    fn update_alpha(&mut self) {
        for i in 0..self.p() {
            self.cells.clear();
            self.cells.extend((0..self.n()).map(|j| (i, j, 1.0)));
            self.alpha[i] += self.newton_step();
        }
    }

    fn update_kappa(&mut self, comp: usize) {
        for j in 0..self.n() {
            self.cells.clear();
            let b = &self.betas[comp];
            self.cells.extend((0..b.len()).map(|i| (i, j, b[i])));
            self.kappas[comp][j] += self.newton_step();
        }
    }

    fn update_beta(&mut self, comp: usize) {
        for i in 0..self.p() {
            self.cells.clear();
            let k = &self.kappas[comp];
            self.cells.extend((0..k.len()).map(|j| (i, j, k[j])));
            self.betas[comp][i] += self.newton_step();
        }
    }

    fn update_gamma(&mut self) {
        let Some((_, estimated)) = &self.gamma else {
            return;
        };
        let estimated = estimated.clone();
        let (p, n) = (self.p(), self.n());
        for (k, est) in estimated.into_iter().enumerate() {
            if !est {
                continue;
            }
            self.cells.clear();
            // Cells with j - i == k - (p - 1).
            for i in 0..p {
                let j = k as isize + i as isize - (p as isize - 1);
                if j >= 0 && (j as usize) < n {
                    self.cells.push((i, j as usize, 1.0));
                }
            }
            let step = self.newton_step();
            if let Some((g, _)) = self.gamma.as_mut() {
                g[k] += step;
            }
        }
    }

    /// Positions of alpha, each period index and the estimated cohort effects
    /// in the joint parameter vector.
    fn layout(&self) -> (usize, Vec<Option<usize>>) {
        let (p, n) = (self.p(), self.n());
        let mut next = p + self.kappas.len() * n;
        let mut gamma_pos = Vec::new();
        if let Some((_, estimated)) = &self.gamma {
            gamma_pos = estimated
                .iter()
                .map(|&e| {
                    e.then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect();
        }
        (next, gamma_pos)
    }

    /// One Newton step on all parameters jointly, halved until the
    /// log-likelihood does not decrease. Loadings must be fixed.
    fn joint_step(&mut self) {
        let c = self.counts;
        let (p, n) = (self.p(), self.n());
        let (q, gamma_pos) = self.layout();
        let comps = self.kappas.len();
        let mut grad = DVector::<f64>::zeros(q);
        let mut hess = DMatrix::<f64>::zeros(q, q);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(comps + 2);
        for i in 0..p {
            for j in 0..n {
                if !c.observed[(i, j)] {
                    continue;
                }
                let mu = c.exposures[(i, j)] * self.eta[(i, j)].exp();
                let r = c.deaths[(i, j)] - mu;
                row.clear();
                row.push((i, 1.0));
                for (comp, b) in self.betas.iter().enumerate() {
                    if b[i] != 0.0 {
                        row.push((p + comp * n + j, b[i]));
                    }
                }
                if let Some(Some(pos)) = gamma_pos.get(self.cohort_index(i, j)) {
                    row.push((*pos, 1.0));
                }
                for &(a, xa) in &row {
                    grad[a] += xa * r;
                    for &(b, xb) in &row {
                        hess[(a, b)] += xa * xb * mu;
                    }
                }
            }
        }
        if !grad.iter().all(|g| g.is_finite()) {
            return;
        }
        let Some(mut delta) = solve_ridged(hess, &grad) else {
            return;
        };

        let before = self.loglik();
        let saved = (self.alpha.clone(), self.kappas.clone(), self.gamma.clone());
        for _ in 0..MAX_HALVINGS {
            self.alpha = saved
                .0
                .iter()
                .enumerate()
                .map(|(i, a)| a + delta[i])
                .collect();
            for (comp, k) in self.kappas.iter_mut().enumerate() {
                for (j, v) in k.iter_mut().enumerate() {
                    *v = saved.1[comp][j] + delta[p + comp * n + j];
                }
            }
            if let (Some((g, _)), Some((g0, _))) = (self.gamma.as_mut(), saved.2.as_ref()) {
                for (k, v) in g.iter_mut().enumerate() {
                    *v = g0[k] + gamma_pos[k].map_or(0.0, |pos| delta[pos]);
                }
            }
            self.recompute_eta();
            if self.loglik() >= before {
                return;
            }
            delta *= 0.5;
        }
        self.alpha = saved.0;
        self.kappas = saved.1;
        self.gamma = saved.2;
        self.recompute_eta();
    }

    fn cycle(&mut self) {
        if !self.free_loadings {
            self.joint_step();
            return;
        }
        self.update_alpha();
        for c in 0..self.kappas.len() {
            self.update_kappa(c);
            if self.free_loadings {
                self.update_beta(c);
            }
        }
        self.update_gamma();
    }

    /// Iterate to convergence. Returns the objective trace and the convergence flag.
    fn run(&mut self, spec: &ModelSpec) -> Result<(Vec<f64>, bool), FitError> {
        self.recompute_eta();
        let mut trace = vec![self.loglik()];
        if !trace[0].is_finite() {
            return Err(FitError::NonFiniteObjective(
                "initial log-likelihood".into(),
            ));
        }
        let mut converged = false;
        for _ in 0..spec.max_iter {
            self.cycle();
            let ll = self.loglik();
            if !ll.is_finite() {
                return Err(FitError::NonFiniteObjective(format!(
                    "log-likelihood became {ll} after {} iterations",
                    trace.len()
                )));
            }
            let prev = *trace.last().unwrap();
            trace.push(ll);
            if (ll - prev).abs() < spec.tol {
                converged = true;
                break;
            }
        }
        Ok((trace, converged))
    }
}

/// Solve `(H + lambda I) x = g` for a positive semi-definite `H`, raising the
/// ridge until the Cholesky factorisation succeeds.
fn solve_ridged(hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let mut lambda = 1e-10 * scale;
    for _ in 0..8 {
        let mut h = hess.clone();
        for d in 0..h.nrows() {
            h[(d, d)] += lambda;
        }
        if let Some(chol) = h.cholesky() {
            let x = chol.solve(grad);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        lambda *= 100.0;
    }
    None
}

fn estimated_cohorts(counts: &Counts, min_cells: usize) -> Vec<bool> {
    let (p, n) = counts.observed.shape();
    let mut cells = vec![0usize; p + n - 1];
    for i in 0..p {
        for j in 0..n {
            if counts.observed[(i, j)] {
                cells[j + p - 1 - i] += 1;
            }
        }
    }
    cells.into_iter().map(|c| c >= min_cells.max(1)).collect()
}

struct Structure {
    betas: Vec<Vec<f64>>,
    kappas: Vec<Vec<f64>>,
    free_loadings: bool,
    cohort: bool,
}

fn fit_structure(
    surface: &MortalitySurface,
    spec: &ModelSpec,
    alpha: Vec<f64>,
    structure: Structure,
) -> Result<FittedModel, FitError> {
    let counts = prepare_counts(surface, spec.kind)?;
    let (p, n) = (surface.n_ages(), surface.n_years());
    let gamma = structure.cohort.then(|| {
        (
            vec![0.0; p + n - 1],
            estimated_cohorts(&counts, spec.min_cohort_cells),
        )
    });
    let mut engine = Engine {
        counts: &counts,
        eta: DMatrix::zeros(p, n),
        alpha,
        betas: structure.betas,
        kappas: structure.kappas,
        free_loadings: structure.free_loadings,
        gamma,
        cells: Vec::with_capacity(p.max(n)),
    };
    let (trace, converged) = engine.run(spec)?;
    let first_cohort = surface.years()[0] - *surface.ages().last().unwrap() as i32;
    Ok(FittedModel {
        spec: *spec,
        ages: surface.ages().to_vec(),
        years: surface.years().to_vec(),
        alpha: engine.alpha,
        betas: engine.betas,
        kappas: engine.kappas,
        gamma: engine.gamma.map(|(values, estimated)| CohortEffect {
            first_cohort,
            values,
            estimated,
        }),
        sigma2: None,
        loglik_trace: trace,
        converged,
    })
}

fn row_means(logm: &DMatrix<f64>) -> Vec<f64> {
    (0..logm.nrows()).map(|i| logm.row(i).mean()).collect()
}

fn col_means_after(logm: &DMatrix<f64>, alpha: &[f64]) -> Vec<f64> {
    (0..logm.ncols())
        .map(|j| {
            (0..logm.nrows())
                .map(|i| logm[(i, j)] - alpha[i])
                .sum::<f64>()
                / logm.nrows() as f64
        })
        .collect()
}

/// Lee-Carter with Poisson deaths, started from the Gaussian SVD fit.
///
/// After convergence the loadings are scaled to sum to one and the period
/// index is centred.
pub fn fit_lc_poisson(
    surface: &MortalitySurface,
    spec: &ModelSpec,
) -> Result<FittedModel, FitError> {
    check_size(surface)?;
    let mut spec = *spec;
    spec.kind = ModelKind::LcPoisson;
    prepare_counts(surface, spec.kind)?;
    let start = fit_lc_gaussian(surface, 1)?;
    let mut model = fit_structure(
        surface,
        &spec,
        start.alpha,
        Structure {
            betas: start.betas,
            kappas: start.kappas,
            free_loadings: true,
            cohort: false,
        },
    )?;
    normalize_lc(&mut model);
    Ok(model)
}

/// Scale loadings to sum one (sign carried by the index) and centre the index.
pub(crate) fn normalize_lc(model: &mut FittedModel) {
    for (b, k) in model.betas.iter_mut().zip(model.kappas.iter_mut()) {
        let sum: f64 = b.iter().sum();
        let scale = if sum != 0.0 {
            sum
        } else {
            let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let sign = b.iter().find(|x| **x != 0.0).map_or(1.0, |x| x.signum());
            norm * sign
        };
        if scale != 0.0 && scale.is_finite() {
            b.iter_mut().for_each(|x| *x /= scale);
            k.iter_mut().for_each(|x| *x *= scale);
        }
    }
    centre_period_indices(model);
}

fn period_start(
    surface: &MortalitySurface,
    terms: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), FitError> {
    let logm = log_rates(surface)?;
    let alpha = row_means(&logm);
    let mut kappas = vec![col_means_after(&logm, &alpha)];
    kappas.extend((1..terms).map(|_| vec![0.0; surface.n_years()]));
    Ok((alpha, kappas))
}

/// Age-period-cohort model: `alpha[x] + kappa[t] + gamma[t - x]`.
///
/// Identified by `sum kappa = 0`, `sum gamma = 0` and `sum c gamma = 0` over
/// the estimated cohorts.
pub fn fit_apc(surface: &MortalitySurface, spec: &ModelSpec) -> Result<FittedModel, FitError> {
    check_size(surface)?;
    let mut spec = *spec;
    spec.kind = ModelKind::Apc;
    let (alpha, kappas) = period_start(surface, 1)?;
    let mut model = fit_structure(
        surface,
        &spec,
        alpha,
        Structure {
            betas: vec![vec![1.0; surface.n_ages()]],
            kappas,
            free_loadings: false,
            cohort: true,
        },
    )?;
    rotate_cohort_trends(&mut model);
    Ok(model)
}

/// Age-period model without cohort effects (`alpha[x] + kappa[t]`), the
/// restriction of APC to `gamma = 0`.
pub fn fit_age_period(
    surface: &MortalitySurface,
    spec: &ModelSpec,
) -> Result<FittedModel, FitError> {
    check_size(surface)?;
    let mut spec = *spec;
    spec.kind = ModelKind::Apc;
    let (alpha, kappas) = period_start(surface, 1)?;
    let mut model = fit_structure(
        surface,
        &spec,
        alpha,
        Structure {
            betas: vec![vec![1.0; surface.n_ages()]],
            kappas,
            free_loadings: false,
            cohort: false,
        },
    )?;
    centre_period_indices(&mut model);
    Ok(model)
}

/// Plat loadings for the training ages: `1`, `xbar - x` and, with three
/// terms, `(xbar - x)^+`.
pub(crate) fn plat_loadings(ages: &[u32], terms: usize) -> Vec<Vec<f64>> {
    let xbar = mean_age(ages);
    let mut betas = vec![
        vec![1.0; ages.len()],
        ages.iter().map(|&x| xbar - x as f64).collect(),
    ];
    if terms == 3 {
        betas.push(ages.iter().map(|&x| (xbar - x as f64).max(0.0)).collect());
    }
    betas
}

/// Plat model with two or three period indices plus a cohort effect.
///
/// Identified by centred period indices and cohort effects free of constant,
/// linear and quadratic trends over the estimated cohorts.
pub fn fit_plat(
    surface: &MortalitySurface,
    period_terms: usize,
    spec: &ModelSpec,
) -> Result<FittedModel, FitError> {
    check_size(surface)?;
    let mut spec = *spec;
    spec.kind = ModelKind::Plat;
    spec.plat_period_terms = period_terms;
    spec.validate()?;
    let (alpha, kappas) = period_start(surface, period_terms)?;
    let mut model = fit_structure(
        surface,
        &spec,
        alpha,
        Structure {
            betas: plat_loadings(surface.ages(), period_terms),
            kappas,
            free_loadings: false,
            cohort: true,
        },
    )?;
    rotate_cohort_trends(&mut model);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmd::Sex;

    fn lc_truth(p: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let a: Vec<f64> = (0..p).map(|i| -4.5 + 0.09 * i as f64).collect();
        let raw: Vec<f64> = (0..p).map(|i| 1.5 - 0.02 * i as f64).collect();
        let s: f64 = raw.iter().sum();
        let b = raw.iter().map(|x| x / s).collect();
        let k: Vec<f64> = (0..n)
            .map(|t| 12.0 - 1.2 * t as f64 + (t as f64 * 0.9).sin())
            .collect();
        let mean = k.iter().sum::<f64>() / n as f64;
        (a, b, k.iter().map(|x| x - mean).collect())
    }

    fn surface(
        logm: &DMatrix<f64>,
        exposure: f64,
        deaths: Option<DMatrix<f64>>,
    ) -> MortalitySurface {
        let (p, n) = logm.shape();
        let e = DMatrix::from_element(p, n, exposure);
        let d = deaths.unwrap_or_else(|| logm.map(f64::exp) * exposure);
        let rates = d.component_div(&e);
        MortalitySurface::new(
            "SYN",
            Sex::Male,
            (60..60 + p as u32).collect(),
            true,
            (1970..1970 + n as i32).collect(),
            rates,
            Some(d),
            Some(e),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_lc_is_a_fixed_point() {
        let (a, b, k) = lc_truth(10, 12);
        let logm = DMatrix::from_fn(10, 12, |i, j| a[i] + b[i] * k[j]);
        let s = surface(&logm, 1e6, None);
        let m = fit_lc_poisson(&s, &ModelSpec::new(ModelKind::LcPoisson)).unwrap();
        assert!(m.converged);
        for i in 0..10 {
            assert!((m.alpha[i] - a[i]).abs() < 1e-6);
            assert!((m.betas[0][i] - b[i]).abs() < 1e-6);
        }
        for j in 0..12 {
            assert!((m.kappas[0][j] - k[j]).abs() < 1e-5);
        }
        let dev = poisson_deviance(
            s.deaths().unwrap(),
            s.exposures().unwrap(),
            &m.fitted_log_rates(),
        );
        assert!(dev < 1e-6, "deviance {dev}");
    }

    #[test]
    fn score_equations_hold_after_perturbation() {
        let (a, b, k) = lc_truth(8, 10);
        let logm = DMatrix::from_fn(8, 10, |i, j| a[i] + b[i] * k[j]);
        let mut d = logm.map(f64::exp) * 1e5;
        d[(3, 4)] += 57.0;
        let s = surface(&logm, 1e5, Some(d.clone()));
        let m = fit_lc_poisson(&s, &ModelSpec::new(ModelKind::LcPoisson)).unwrap();
        let fitted = m.fitted_log_rates().map(f64::exp) * 1e5;
        // alpha score: deaths per age are matched.
        for i in 0..8 {
            let (obs, fit) = (d.row(i).sum(), fitted.row(i).sum());
            assert!(((obs - fit) / obs).abs() < 1e-6, "age {i}: {obs} vs {fit}");
        }
        // kappa score: loading-weighted deaths per year are matched.
        for j in 0..10 {
            let obs: f64 = (0..8).map(|i| m.betas[0][i] * d[(i, j)]).sum();
            let fit: f64 = (0..8).map(|i| m.betas[0][i] * fitted[(i, j)]).sum();
            assert!(((obs - fit) / obs).abs() < 1e-6, "year {j}: {obs} vs {fit}");
        }
    }

    #[test]
    fn trace_is_monotone_and_normalized() {
        let (a, b, k) = lc_truth(9, 11);
        let logm = DMatrix::from_fn(9, 11, |i, j| {
            a[i] + b[i] * k[j] + 0.05 * ((i * j) as f64).sin()
        });
        let s = surface(&logm, 2e4, None);
        let m = fit_lc_poisson(&s, &ModelSpec::new(ModelKind::LcPoisson)).unwrap();
        for w in m.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        assert!((m.betas[0].iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(m.kappas[0].iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn normalization_removes_the_scale_gauge() {
        let (a, b, k) = lc_truth(9, 11);
        let logm = DMatrix::from_fn(9, 11, |i, j| {
            a[i] + b[i] * k[j] + 0.02 * ((i + 2 * j) as f64).cos()
        });
        let s = surface(&logm, 5e4, None);
        let m = fit_lc_poisson(&s, &ModelSpec::new(ModelKind::LcPoisson)).unwrap();
        for c in [-3.0, 0.25, 7.0] {
            let mut scaled = m.clone();
            scaled.betas[0].iter_mut().for_each(|x| *x *= c);
            scaled.kappas[0].iter_mut().for_each(|x| *x /= c);
            assert!((scaled.fitted_log_rates() - m.fitted_log_rates()).amax() < 1e-13);
            normalize_lc(&mut scaled);
            for (x, y) in scaled.betas[0].iter().zip(&m.betas[0]) {
                assert!((x - y).abs() < 1e-14);
            }
            for (x, y) in scaled.kappas[0].iter().zip(&m.kappas[0]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        // Mortality falls in the truth, so the normalized index trends down.
        assert!(m.kappas[0].last().unwrap() < m.kappas[0].first().unwrap());
    }

    #[test]
    fn zero_exposure_with_deaths_is_an_error() {
        let (a, b, k) = lc_truth(5, 6);
        let logm = DMatrix::from_fn(5, 6, |i, j| a[i] + b[i] * k[j]);
        let s = surface(&logm, 1e4, None);
        let mut e = s.exposures().unwrap().clone();
        let mut d = s.deaths().unwrap().clone();
        e[(2, 2)] = 0.0;
        d[(2, 2)] = 3.0;
        let mut r = s.rates().clone();
        r[(2, 2)] = 0.01;
        let bad = MortalitySurface::new(
            "X",
            Sex::Male,
            s.ages().to_vec(),
            true,
            s.years().to_vec(),
            r,
            Some(d),
            Some(e),
        )
        .unwrap();
        assert!(matches!(
            fit_lc_poisson(&bad, &ModelSpec::new(ModelKind::LcPoisson)),
            Err(FitError::NonFiniteObjective(_))
        ));
    }

    #[test]
    fn missing_exposures_rejected() {
        let logm = DMatrix::from_fn(4, 4, |i, j| -3.0 - 0.1 * (i + j) as f64);
        let s = MortalitySurface::new(
            "X",
            Sex::Male,
            (60..64).collect(),
            false,
            (2000..2004).collect(),
            logm.map(f64::exp),
            None,
            None,
        )
        .unwrap();
        for kind in [ModelKind::LcPoisson, ModelKind::Apc, ModelKind::Plat] {
            assert!(matches!(
                crate::models::fit(&ModelSpec::new(kind), &s),
                Err(FitError::MissingCounts(_))
            ));
        }
    }

    #[test]
    fn plat_two_terms_has_no_hinge_loading() {
        let betas = plat_loadings(&(60..=100).collect::<Vec<_>>(), 2);
        assert_eq!(betas.len(), 2);
        assert!(betas[1].iter().any(|&b| b < 0.0));
        let three = plat_loadings(&(0..=100).collect::<Vec<_>>(), 3);
        assert_eq!(three.len(), 3);
        assert_eq!(three[2][100], 0.0);
        assert_eq!(three[2][0], 50.0);
    }
}
