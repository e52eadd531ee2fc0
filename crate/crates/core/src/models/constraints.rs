//! Identifiability rotations for models with a cohort term.
//!
//! A polynomial trend in the cohort effect can be traded against the age and
//! period terms without changing any fitted rate. For APC the invariant
//! directions are constant and linear in the cohort; for Plat (whose second
//! period index has a loading linear in age) a quadratic direction is added.
//! The rotation removes those trends from `gamma` over the estimated cohorts
//! and centres every period index, moving the difference into `alpha` and
//! the period indices.

use nalgebra::{DMatrix, DVector};

use super::{FittedModel, ModelKind};

fn trend_degree(kind: ModelKind) -> Option<usize> {
    match kind {
        ModelKind::Apc => Some(1),
        ModelKind::Plat => Some(2),
        _ => None,
    }
}

/// Least-squares polynomial in cohort, returned as coefficients on `1, c, c^2`.
fn cohort_trend(series: &[(f64, f64)], degree: usize) -> [f64; 3] {
    let n = series.len();
    let centre = series.iter().map(|s| s.0).sum::<f64>() / n as f64;
    let basis = DMatrix::from_fn(n, degree + 1, |r, k| (series[r].0 - centre).powi(k as i32));
    let y = DVector::from_iterator(n, series.iter().map(|s| s.1));
    let coef = basis
        .svd(true, true)
        .solve(&y, 1e-14)
        .expect("SVD solve with U and V^T");
    let b = |k: usize| if k <= degree { coef[k] } else { 0.0 };
    // Expand b0 + b1 (c - m) + b2 (c - m)^2 around zero.
    [
        b(0) - b(1) * centre + b(2) * centre * centre,
        b(1) - 2.0 * b(2) * centre,
        b(2),
    ]
}

/// Impose sum-to-zero period indices and trend-free cohort effects.
///
/// Cohorts are indexed relative to the first training year so the rotation is
/// well conditioned; the constraints themselves do not depend on that origin.
/// Fitted log-rates are unchanged up to rounding.
pub fn rotate_cohort_trends(model: &mut FittedModel) {
    let Some(degree) = trend_degree(model.spec.kind) else {
        return;
    };
    let year0 = model.years[0];
    let xbar = model.mean_age();
    if let Some(gamma) = model.gamma.as_mut() {
        let series: Vec<(f64, f64)> = gamma
            .estimated_series()
            .into_iter()
            .map(|(c, g)| ((c - year0) as f64, g))
            .collect();
        if series.len() > degree {
            let [phi0, phi1, phi2] = cohort_trend(&series, degree);
            for (k, g) in gamma.values.iter_mut().enumerate() {
                let c = (gamma.first_cohort + k as i32 - year0) as f64;
                *g -= phi0 + phi1 * c + phi2 * c * c;
            }
            for (a, &age) in model.alpha.iter_mut().zip(&model.ages) {
                let x = age as f64;
                *a += phi0 - phi1 * x + phi2 * x * x;
            }
            for (t, k) in model.kappas[0].iter_mut().enumerate() {
                let t = t as f64;
                *k += phi1 * t + phi2 * t * t - 2.0 * phi2 * t * xbar;
            }
            if phi2 != 0.0 {
                for (t, k) in model.kappas[1].iter_mut().enumerate() {
                    *k += 2.0 * phi2 * t as f64;
                }
            }
        }
    }
    centre_period_indices(model);
}

/// Shift each period index to mean zero, absorbing the mean into `alpha`.
pub(crate) fn centre_period_indices(model: &mut FittedModel) {
    let n = model.n_years() as f64;
    for (b, k) in model.betas.iter().zip(model.kappas.iter_mut()) {
        let mean = k.iter().sum::<f64>() / n;
        for kt in k.iter_mut() {
            *kt -= mean;
        }
        for (a, bx) in model.alpha.iter_mut().zip(b) {
            *a += bx * mean;
        }
    }
}

/// `(sum gamma, sum c*gamma, sum c^2*gamma)` over the estimated cohorts, with
/// `c` counted from the first training year.
pub fn cohort_constraint_residuals(model: &FittedModel) -> Option<[f64; 3]> {
    let gamma = model.gamma.as_ref()?;
    let year0 = model.years[0];
    let mut out = [0.0; 3];
    for (c, g) in gamma.estimated_series() {
        let c = (c - year0) as f64;
        out[0] += g;
        out[1] += c * g;
        out[2] += c * c * g;
    }
    Some(out)
}
