//! One-sided Jacobi singular value decomposition.
//!
//! Small dense matrices only (ages x years). Accurate to a few ulps even when
//! the matrix is numerically rank deficient, which the Lee-Carter fits rely on.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 80;

/// One singular triplet: `A ~ sum s * u v^T`.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub value: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Singular triplets of `a`, largest first. Zero singular values come with
/// empty singular vectors.
pub fn jacobi_svd(a: &DMatrix<f64>) -> Vec<Triplet> {
    let transpose = a.nrows() < a.ncols();
    let work = if transpose { a.transpose() } else { a.clone() };
    let (m, n) = work.shape();
    // Columns stored contiguously for the rotations.
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| work.column(j).iter().copied().collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (alpha, beta, gamma) = cols[i]
                    .iter()
                    .zip(&cols[j])
                    .fold((0.0, 0.0, 0.0), |(a, b, g), (x, y)| {
                        (a + x * x, b + y * y, g + x * y)
                    });
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut out: Vec<Triplet> = (0..n)
        .map(|k| {
            let value = cols[k].iter().map(|x| x * x).sum::<f64>().sqrt();
            let left = if value > 0.0 {
                cols[k].iter().map(|x| x / value).collect()
            } else {
                Vec::new()
            };
            Triplet {
                value,
                left,
                right: v[k].clone(),
            }
        })
        .collect();
    debug_assert!(out.iter().all(|t| t.left.is_empty() || t.left.len() == m));
    out.sort_by(|x, y| y.value.total_cmp(&x.value));
    for t in &mut out {
        if transpose {
            std::mem::swap(&mut t.left, &mut t.right);
        }
        if t.value == 0.0 {
            t.left.clear();
            t.right.clear();
        }
    }
    out
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recompose(t: &[Triplet], m: usize, n: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m, n);
        for tr in t.iter().filter(|t| t.value > 0.0) {
            for i in 0..m {
                for j in 0..n {
                    out[(i, j)] += tr.value * tr.left[i] * tr.right[j];
                }
            }
        }
        out
    }

    #[test]
    fn near_rank_one_wide_matrix() {
        let b = [0.3, 0.25, 0.2, 0.15, 0.1];
        let a: Vec<f64> = (0..5).map(|i| -6.0 + 0.5 * i as f64).collect();
        let logm = DMatrix::from_fn(5, 8, |i, j| a[i] + b[i] * (3.5 - j as f64))
            .map(f64::exp)
            .map(f64::ln);
        let means: Vec<f64> = (0..5).map(|i| logm.row(i).mean()).collect();
        let z = DMatrix::from_fn(5, 8, |i, j| logm[(i, j)] - means[i]);
        let t = jacobi_svd(&z);
        assert!((recompose(&t, 5, 8) - &z).amax() < 1e-14);
        assert!(t[1].value < 1e-14 * t[0].value);
    }

    #[test]
    fn orthonormal_factors_tall_and_wide() {
        for (m, n) in [(7, 4), (4, 7), (6, 6)] {
            let z = DMatrix::from_fn(m, n, |i, j| {
                ((i * 7 + j * 3) as f64).sin() + 0.1 * (i as f64)
            });
            let t = jacobi_svd(&z);
            assert!((recompose(&t, m, n) - &z).amax() < 1e-13);
            for w in t.windows(2) {
                assert!(w[0].value >= w[1].value);
            }
            let r = m.min(n);
            for a in 0..r {
                for b in 0..r {
                    let dot: f64 = t[a].left.iter().zip(&t[b].left).map(|(x, y)| x * y).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_matrix() {
        let t = jacobi_svd(&DMatrix::zeros(3, 4));
        assert!(t
            .iter()
            .all(|t| t.value == 0.0 && t.left.is_empty() && t.right.is_empty()));
    }
}
