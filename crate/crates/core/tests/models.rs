mod common;

use common::*;
use mortcast_core::models::{
    cohort_constraint_residuals, fit, fit_age_period, fit_lc_gaussian, jacobi_svd,
    poisson_deviance, read_fitted_csv, write_fitted_csv, FittedModel, ModelKind, ModelSpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn retiree_grid() -> (Vec<u32>, Vec<i32>) {
    ((60..=100).collect(), (1970..2010).collect())
}

fn assert_monotone(m: &FittedModel) {
    for w in m.loglik_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "trace decreased: {} -> {}", w[0], w[1]);
    }
}

/// Relative error of the estimated cohort effects against the truth.
fn gamma_err(m: &FittedModel, truth: &Truth) -> f64 {
    let g = m.gamma.as_ref().unwrap();
    let (first, values) = truth.gamma.as_ref().unwrap();
    assert_eq!(g.first_cohort, *first);
    let (est, tru): (Vec<f64>, Vec<f64>) = g
        .estimated_series()
        .into_iter()
        .map(|(c, v)| (v, values[(c - first) as usize]))
        .unzip();
    rel_err(&est, &tru)
}

fn check_recovery(m: &FittedModel, truth: &Truth, tol: f64) {
    assert!(m.converged, "{} did not converge", m.spec.kind);
    assert_monotone(m);
    let e = rel_err(&m.alpha, &truth.alpha);
    assert!(e < tol, "alpha error {e}");
    for (c, (k, tk)) in m.kappas.iter().zip(&truth.kappas).enumerate() {
        let e = rel_err(k, tk);
        assert!(e < tol, "kappa{} error {e}", c + 1);
    }
    if truth.gamma.is_some() {
        let e = gamma_err(m, truth);
        assert!(e < tol, "gamma error {e}");
    }
}

#[test]
fn lc_poisson_recovers_simulated_parameters() {
    let (ages, years) = retiree_grid();
    let truth = lc_truth(ages, years, 11);
    let s = simulate(&truth, 1e7, 12);
    let m = fit(&ModelSpec::new(ModelKind::LcPoisson), &s).unwrap();
    check_recovery(&m, &truth, 0.01);
    let e = rel_err(&m.betas[0], &truth.betas[0]);
    assert!(e < 0.01, "beta error {e}");
}

#[test]
fn apc_recovers_simulated_parameters() {
    let (ages, years) = retiree_grid();
    let truth = apc_truth(ages, years, 21);
    let s = simulate(&truth, 1e8, 22);
    let m = fit(&ModelSpec::new(ModelKind::Apc), &s).unwrap();
    check_recovery(&m, &truth, 0.01);
    let r = cohort_constraint_residuals(&m).unwrap();
    assert!(r[0].abs() < 1e-8 && r[1].abs() < 1e-8, "{r:?}");
    assert!(m.kappas[0].iter().sum::<f64>().abs() < 1e-8);
}

#[test]
fn plat_two_terms_recovers_on_retiree_ages() {
    let (ages, years) = retiree_grid();
    let truth = plat_truth(ages, years, 2, 31);
    let s = simulate(&truth, 1e7, 32);
    let m = fit(&ModelSpec::new(ModelKind::Plat).with_plat_terms(2), &s).unwrap();
    assert_eq!(m.betas.len(), 2);
    check_recovery(&m, &truth, 0.02);
    let r = cohort_constraint_residuals(&m).unwrap();
    assert!(r.iter().all(|x| x.abs() < 1e-8), "{r:?}");
}

#[test]
fn plat_three_terms_recovers_on_full_ages() {
    // Young ages have rates near 1e-4, so the exposures are raised until the
    // youngest cohorts carry as much information as the retiree grid does.
    let truth = plat_truth((0..=100).collect(), (1970..2010).collect(), 3, 41);
    let s = simulate(&truth, 1e9, 42);
    let m = fit(&ModelSpec::new(ModelKind::Plat), &s).unwrap();
    assert_eq!(m.betas.len(), 3);
    check_recovery(&m, &truth, 0.02);
    let r = cohort_constraint_residuals(&m).unwrap();
    assert!(r.iter().all(|x| x.abs() < 1e-8), "{r:?}");
    for k in &m.kappas {
        assert!(k.iter().sum::<f64>().abs() < 1e-8);
    }
}

#[test]
fn plat_without_extra_terms_matches_apc() {
    let (ages, years) = retiree_grid();
    let mut truth = plat_truth(ages, years, 2, 51);
    truth.kappas[1].iter_mut().for_each(|k| *k = 0.0);
    truth
        .gamma
        .as_mut()
        .unwrap()
        .1
        .iter_mut()
        .for_each(|g| *g = 0.0);
    let s = simulate(&truth, 1e7, 52);
    let plat = fit(&ModelSpec::new(ModelKind::Plat).with_plat_terms(2), &s).unwrap();
    let apc = fit(&ModelSpec::new(ModelKind::Apc), &s).unwrap();
    assert!(rel_err(&plat.alpha, &apc.alpha) < 0.01);
    assert!(rel_err(&plat.kappas[0], &apc.kappas[0]) < 0.01);
    // Plat nests APC, so it cannot fit worse.
    assert!(plat.objective() >= apc.objective() - 1e-6);
}

#[test]
fn apc_without_cohort_effect_is_within_chi_square_of_age_period() {
    let (ages, years) = retiree_grid();
    let mut truth = apc_truth(ages, years, 61);
    truth
        .gamma
        .as_mut()
        .unwrap()
        .1
        .iter_mut()
        .for_each(|g| *g = 0.0);
    let s = simulate(&truth, 1e6, 62);
    let apc = fit(&ModelSpec::new(ModelKind::Apc), &s).unwrap();
    let ap = fit_age_period(&s, &ModelSpec::new(ModelKind::Apc)).unwrap();
    assert!(apc.converged && ap.converged);
    let g = apc.gamma.as_ref().unwrap();
    let estimated = g.estimated.iter().filter(|&&e| e).count();
    // Two cohort directions are absorbed by alpha and kappa.
    let df = (estimated - 2) as f64;
    let lr = 2.0 * (apc.objective() - ap.objective());
    assert!(lr >= -1e-6);
    let bound = ChiSquared::new(df).unwrap().inverse_cdf(0.999);
    assert!(
        lr < bound,
        "LR {lr} exceeds chi2({df}) 0.999 quantile {bound}"
    );
    // Pure noise: about 1/sqrt(deaths per cohort) in size.
    let max_g = g
        .estimated_series()
        .iter()
        .fold(0.0f64, |m, &(_, v)| m.max(v.abs()));
    assert!(max_g < 0.05, "max |gamma| {max_g}");
}

#[test]
fn deviance_matches_trace_objective() {
    let (ages, years) = retiree_grid();
    let truth = apc_truth(ages, years, 71);
    let s = simulate(&truth, 1e6, 72);
    let m = fit(&ModelSpec::new(ModelKind::Apc), &s).unwrap();
    let dev = poisson_deviance(
        s.deaths().unwrap(),
        s.exposures().unwrap(),
        &m.fitted_log_rates(),
    );
    assert!(
        (dev + 2.0 * m.objective()).abs() < 1e-6 * dev.max(1.0),
        "{dev} vs {}",
        m.objective()
    );
}

#[test]
fn fitted_models_round_trip_through_csv() {
    let (ages, years) = retiree_grid();
    let truth = plat_truth(ages, years, 2, 81);
    let s = simulate(&truth, 1e7, 82);
    for spec in [
        ModelSpec::new(ModelKind::Plat).with_plat_terms(2),
        ModelSpec::new(ModelKind::LcGaussian2),
        ModelSpec::new(ModelKind::LcPoisson),
        ModelSpec::new(ModelKind::Apc),
    ] {
        let m = fit(&spec, &s).unwrap();
        let mut buf = Vec::new();
        write_fitted_csv(&m, &mut buf).unwrap();
        let back = read_fitted_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.spec, m.spec);
        assert_eq!(back.alpha, m.alpha);
        assert_eq!(back.betas, m.betas);
        assert_eq!(back.kappas, m.kappas);
        assert_eq!(back.gamma, m.gamma);
        assert_eq!(back.sigma2, m.sigma2);
        assert_eq!(back.converged, m.converged);
        assert_eq!(back.objective(), m.objective());
    }
}

#[test]
fn degenerate_surfaces_are_rejected() {
    let (ages, _) = retiree_grid();
    let truth = lc_truth(ages, vec![2000, 2001], 1);
    let s = simulate(&truth, 1e5, 2);
    for kind in ModelKind::ALL {
        assert!(fit(&ModelSpec::new(kind), &s).is_err());
    }
}

/// Rank-1 truncation of the centred log-rates via the symmetric eigenproblem
/// of `Z Z^T`, independent of the Jacobi SVD.
fn rank_one_oracle(logm: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, n) = logm.shape();
    let means: Vec<f64> = (0..p).map(|i| logm.row(i).mean()).collect();
    let z = DMatrix::from_fn(p, n, |i, j| logm[(i, j)] - means[i]);
    let eig = (&z * z.transpose()).symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let u = eig.eigenvectors.column(top).into_owned();
    let proj = &u * (u.transpose() * &z);
    DMatrix::from_fn(p, n, |i, j| means[i] + proj[(i, j)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lc_gaussian_is_the_rank_one_truncation(
        seed in any::<u64>(),
        p in 3usize..9,
        n in 3usize..12,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let logm = DMatrix::from_fn(p, n, |i, j| -6.0 + 0.3 * i as f64 - 0.05 * j as f64 + 0.2 * rng.random::<f64>());
        let s = mortcast_core::hmd::MortalitySurface::new(
            "P", mortcast_core::hmd::Sex::Male, (60..60 + p as u32).collect(), false,
            (1990..1990 + n as i32).collect(), logm.map(f64::exp), None, None,
        ).unwrap();
        let m = fit_lc_gaussian(&s, 1).unwrap();
        let oracle = rank_one_oracle(&s.rates().map(f64::ln));
        prop_assert!((m.fitted_log_rates() - oracle).amax() < 1e-10);
        prop_assert!((m.betas[0].iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(m.kappas[0].iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn singular_values_match_eigenvalues(seed in any::<u64>(), p in 2usize..8, n in 2usize..8) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(p, n, |_, _| rng.random::<f64>() - 0.5);
        let mut sv: Vec<f64> = jacobi_svd(&a).iter().map(|t| t.value * t.value).collect();
        let mut ev: Vec<f64> = (a.transpose() * &a).symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0)).collect();
        sv.sort_by(f64::total_cmp);
        ev.sort_by(f64::total_cmp);
        // Jacobi returns min(p, n) values; the extra eigenvalues are zero.
        let extra = ev.len() - sv.len();
        for (x, y) in sv.iter().zip(&ev[extra..]) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
