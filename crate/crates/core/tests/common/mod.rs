//! Simulation helpers shared by the integration tests.

#![allow(dead_code)]

use mortcast_core::hmd::{MortalitySurface, Sex};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

pub struct Truth {
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    pub alpha: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    pub kappas: Vec<Vec<f64>>,
    /// Indexed by `year - age - first_cohort`, zero on thin cohorts.
    pub gamma: Option<(i32, Vec<f64>)>,
}

impl Truth {
    pub fn log_rate(&self, i: usize, j: usize) -> f64 {
        let mut eta = self.alpha[i];
        for (b, k) in self.betas.iter().zip(&self.kappas) {
            eta += b[i] * k[j];
        }
        if let Some((first, g)) = &self.gamma {
            eta += g[(self.years[j] - self.ages[i] as i32 - first) as usize];
        }
        eta
    }

    pub fn log_rates(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ages.len(), self.years.len(), |i, j| {
            self.log_rate(i, j)
        })
    }
}

pub fn gompertz_alpha(ages: &[u32]) -> Vec<f64> {
    ages.iter()
        .map(|&x| {
            let x = x as f64;
            // Infant mortality, a background level and a Gompertz slope.
            (1e-4 + 0.02 * (-x / 1.5).exp() + 5e-5 * (0.09 * x).exp()).ln()
        })
        .collect()
}

fn centred(v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - m).collect()
}

pub fn lc_truth(ages: Vec<u32>, years: Vec<i32>, seed: u64) -> Truth {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = ages.len();
    let raw: Vec<f64> = (0..p)
        .map(|i| 1.5 - i as f64 / p as f64 + 0.1 * rng.random::<f64>())
        .collect();
    let s: f64 = raw.iter().sum();
    let betas = vec![raw.iter().map(|x| x / s).collect()];
    let kappas = vec![centred(
        (0..years.len())
            .map(|t| -1.1 * t as f64 + 0.8 * (t as f64 * 0.7).sin())
            .collect(),
    )];
    Truth {
        alpha: gompertz_alpha(&ages),
        ages,
        years,
        betas,
        kappas,
        gamma: None,
    }
}

/// Cohort effects free of polynomial trends up to `degree` over cohorts with
/// at least `min_cells` cells, and zero elsewhere.
pub fn cohort_truth(
    ages: &[u32],
    years: &[i32],
    degree: usize,
    min_cells: usize,
    seed: u64,
) -> (i32, Vec<f64>) {
    let (p, n) = (ages.len(), years.len());
    let first = years[0] - *ages.last().unwrap() as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.03).unwrap();
    let mut g = vec![0.0; p + n - 1];
    let mut level = 0.0;
    for (k, v) in g.iter_mut().enumerate() {
        level += noise.sample(&mut rng) + 0.012 * (k as f64 / 6.0).cos();
        *v = level + 0.01 * rng.random::<f64>();
    }
    let est: Vec<usize> = (0..p + n - 1)
        .filter(|&k| k.min(p - 1).min(n - 1).min(p + n - 2 - k) + 1 >= min_cells)
        .collect();
    let basis = DMatrix::from_fn(est.len(), degree + 1, |r, c| {
        (est[r] as f64 / 10.0).powi(c as i32)
    });
    let y = DVector::from_iterator(est.len(), est.iter().map(|&k| g[k]));
    let coef = (basis.transpose() * &basis)
        .cholesky()
        .unwrap()
        .solve(&(basis.transpose() * &y));
    let resid = y - basis * coef;
    let mut out = vec![0.0; p + n - 1];
    for (r, &k) in est.iter().enumerate() {
        out[k] = resid[r];
    }
    (first, out)
}

pub fn apc_truth(ages: Vec<u32>, years: Vec<i32>, seed: u64) -> Truth {
    let gamma = cohort_truth(&ages, &years, 1, 5, seed);
    let kappas = vec![centred(
        (0..years.len())
            .map(|t| -0.02 * t as f64 + 0.03 * (t as f64 * 0.9).sin())
            .collect(),
    )];
    Truth {
        alpha: gompertz_alpha(&ages),
        betas: vec![vec![1.0; ages.len()]],
        kappas,
        gamma: Some(gamma),
        ages,
        years,
    }
}

pub fn plat_truth(ages: Vec<u32>, years: Vec<i32>, terms: usize, seed: u64) -> Truth {
    let xbar = ages.iter().map(|&a| a as f64).sum::<f64>() / ages.len() as f64;
    let gamma = cohort_truth(&ages, &years, 2, 5, seed);
    let n = years.len();
    let mut betas = vec![
        vec![1.0; ages.len()],
        ages.iter().map(|&x| xbar - x as f64).collect(),
    ];
    let mut kappas = vec![
        centred(
            (0..n)
                .map(|t| -0.02 * t as f64 + 0.02 * (t as f64 * 0.9).sin())
                .collect(),
        ),
        centred(
            (0..n)
                .map(|t| 0.0006 * t as f64 + 0.002 * (t as f64 * 0.5).cos())
                .collect(),
        ),
    ];
    if terms == 3 {
        betas.push(ages.iter().map(|&x| (xbar - x as f64).max(0.0)).collect());
        kappas.push(centred(
            (0..n)
                .map(|t| -0.0015 * t as f64 + 0.003 * (t as f64 * 0.3).sin())
                .collect(),
        ));
    }
    Truth {
        alpha: gompertz_alpha(&ages),
        ages,
        years,
        betas,
        kappas,
        gamma: Some(gamma),
    }
}

/// Poisson deaths on constant exposures.
pub fn simulate(truth: &Truth, exposure: f64, seed: u64) -> MortalitySurface {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logm = truth.log_rates();
    let e = DMatrix::from_element(logm.nrows(), logm.ncols(), exposure);
    let d = DMatrix::from_fn(logm.nrows(), logm.ncols(), |i, j| {
        let lambda = exposure * logm[(i, j)].exp();
        Poisson::new(lambda).unwrap().sample(&mut rng)
    });
    let rates = d.component_div(&e).map(|r| if r > 0.0 { r } else { 1e-8 });
    MortalitySurface::new(
        "SYN",
        Sex::Female,
        truth.ages.clone(),
        true,
        truth.years.clone(),
        rates,
        Some(d),
        Some(e),
    )
    .unwrap()
}

/// `max |est - truth| / max |truth|`.
pub fn rel_err(est: &[f64], truth: &[f64]) -> f64 {
    let scale = truth.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    est.iter()
        .zip(truth)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}
