//! Lee-Carter with Gaussian errors: row means plus leading singular triplets
//! of the centred log-rate matrix.

use nalgebra::DMatrix;

use super::svd::jacobi_svd;
use super::{check_size, log_rates, FitError, FittedModel, ModelKind, ModelSpec};
use crate::hmd::MortalitySurface;

/// Fit one- or two-component Lee-Carter by singular value decomposition.
///
/// Each component is rescaled so its loadings sum to one; its period index is
/// de-meaned with the mean folded into `alpha`.
pub fn fit_lc_gaussian(
    surface: &MortalitySurface,
    n_components: usize,
) -> Result<FittedModel, FitError> {
    if !(1..=2).contains(&n_components) {
        return Err(FitError::InvalidSpec(format!(
            "Gaussian Lee-Carter takes 1 or 2 components, got {n_components}"
        )));
    }
    check_size(surface)?;
    let logm = log_rates(surface)?;
    let (p, n) = logm.shape();

    let mut alpha: Vec<f64> = (0..p).map(|i| logm.row(i).mean()).collect();
    let centred = DMatrix::from_fn(p, n, |i, j| logm[(i, j)] - alpha[i]);
    let triplets = jacobi_svd(&centred);
    // Singular values at rounding level of the log-rates count as zero.
    let floor = 1e-13 * logm.norm();

    let mut betas = Vec::with_capacity(n_components);
    let mut kappas = Vec::with_capacity(n_components);
    for c in 0..n_components {
        let (b, k) = match triplets.get(c) {
            Some(t) if t.value > floor => normalize_component(&t.left, &t.right, t.value),
            // Zero-variance direction: flat loadings and a null index.
            _ => (vec![1.0 / p as f64; p], vec![0.0; n]),
        };
        betas.push(b);
        kappas.push(k);
    }
    for (b, k) in betas.iter().zip(kappas.iter_mut()) {
        let mean = k.iter().sum::<f64>() / n as f64;
        for kt in k.iter_mut() {
            *kt -= mean;
        }
        for (a, bx) in alpha.iter_mut().zip(b) {
            *a += bx * mean;
        }
    }

    let mut model = FittedModel {
        spec: ModelSpec::new(if n_components == 1 {
            ModelKind::LcGaussian
        } else {
            ModelKind::LcGaussian2
        }),
        ages: surface.ages().to_vec(),
        years: surface.years().to_vec(),
        alpha,
        betas,
        kappas,
        gamma: None,
        sigma2: None,
        loglik_trace: Vec::new(),
        converged: true,
    };
    let fitted = model.fitted_log_rates();
    let sse: f64 = logm
        .iter()
        .zip(fitted.iter())
        .map(|(o, f)| (o - f).powi(2))
        .sum();
    model.sigma2 = Some(sse / (p * n) as f64);
    model.loglik_trace.push(-0.5 * sse);
    Ok(model)
}

/// Scale a singular triplet so that the loadings sum to one.
fn normalize_component(u: &[f64], v: &[f64], s: f64) -> (Vec<f64>, Vec<f64>) {
    let sum: f64 = u.iter().sum();
    let l1: f64 = u.iter().map(|x| x.abs()).sum();
    if sum.abs() > 1e-12 * l1 {
        let b = u.iter().map(|x| x / sum).collect();
        let k = v.iter().map(|y| y * s * sum).collect();
        (b, k)
    } else {
        // Loadings summing to zero cannot be scaled to sum one; keep unit
        // length with the first non-zero loading positive.
        let sign = u.iter().find(|x| **x != 0.0).map_or(1.0, |x| x.signum());
        (
            u.iter().map(|x| x * sign).collect(),
            v.iter().map(|y| y * s * sign).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmd::Sex;

    fn surface_from_log(logm: &DMatrix<f64>) -> MortalitySurface {
        let (p, n) = logm.shape();
        MortalitySurface::new(
            "SYN",
            Sex::Female,
            (60..60 + p as u32).collect(),
            false,
            (1950..1950 + n as i32).collect(),
            logm.map(f64::exp),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_surface_has_null_index() {
        let logm = DMatrix::from_fn(4, 6, |i, _| -5.0 + 0.3 * i as f64);
        let m = fit_lc_gaussian(&surface_from_log(&logm), 1).unwrap();
        for (i, a) in m.alpha.iter().enumerate() {
            assert!((a - logm[(i, 0)]).abs() < 1e-12);
        }
        assert!(m.kappas[0].iter().all(|&k| k == 0.0));
        assert!(m.betas[0].iter().all(|&b| b == 0.25));
    }

    #[test]
    fn rank_one_surface_is_recovered() {
        let a: Vec<f64> = (0..5).map(|i| -6.0 + 0.5 * i as f64).collect();
        let b = [0.3, 0.25, 0.2, 0.15, 0.1];
        let k: Vec<f64> = (0..8).map(|t| 3.5 - t as f64).collect();
        let logm = DMatrix::from_fn(5, 8, |i, j| a[i] + b[i] * k[j]);
        let m = fit_lc_gaussian(&surface_from_log(&logm), 1).unwrap();
        for i in 0..5 {
            assert!((m.betas[0][i] - b[i]).abs() < 1e-10);
            assert!((m.alpha[i] - a[i]).abs() < 1e-10, "{} {}", m.alpha[i], a[i]);
        }
        for j in 0..8 {
            assert!((m.kappas[0][j] - k[j]).abs() < 1e-10);
        }
        assert!(m.sigma2.unwrap() * 40.0 < 1e-18);
    }

    #[test]
    fn rank_two_reconstruction_and_one_component_residual() {
        let a: Vec<f64> = (0..6).map(|i| -7.0 + 0.6 * i as f64).collect();
        let b1 = [0.25, 0.2, 0.2, 0.15, 0.1, 0.1];
        let b2 = [0.5, 0.3, 0.1, -0.1, 0.1, 0.1];
        let k1: Vec<f64> = (0..9).map(|t| 4.0 - t as f64).collect();
        let k2: Vec<f64> = (0..9).map(|t| ((t as f64) * 1.3).sin() * 0.4).collect();
        let logm = DMatrix::from_fn(6, 9, |i, j| a[i] + b1[i] * k1[j] + b2[i] * k2[j]);
        let s = surface_from_log(&logm);

        let two = fit_lc_gaussian(&s, 2).unwrap();
        let sse2: f64 = (two.fitted_log_rates() - &logm).iter().map(|e| e * e).sum();
        assert!(sse2 < 1e-18, "sse {sse2}");
        for k in &two.kappas {
            assert!(k.iter().sum::<f64>().abs() < 1e-10);
        }

        // One component leaves exactly the second singular value squared.
        let means: Vec<f64> = (0..6).map(|i| logm.row(i).mean()).collect();
        let centred = DMatrix::from_fn(6, 9, |i, j| logm[(i, j)] - means[i]);
        // Squared singular values are the eigenvalues of Z Z^T.
        let mut sv: Vec<f64> = (&centred * centred.transpose())
            .symmetric_eigenvalues()
            .iter()
            .map(|l| l.max(0.0).sqrt())
            .collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        let one = fit_lc_gaussian(&s, 1).unwrap();
        let sse1: f64 = (one.fitted_log_rates() - &logm).iter().map(|e| e * e).sum();
        assert!((sse1 - sv[1] * sv[1]).abs() < 1e-10 * sv[1] * sv[1].max(1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let logm = DMatrix::from_fn(4, 2, |i, j| -((i + j) as f64));
        assert!(matches!(
            fit_lc_gaussian(&surface_from_log(&logm), 1),
            Err(FitError::DegenerateSurface { .. })
        ));
        let logm = DMatrix::from_fn(4, 4, |i, j| -((i + j) as f64) - 1.0);
        assert!(fit_lc_gaussian(&surface_from_log(&logm), 3).is_err());
    }
}
