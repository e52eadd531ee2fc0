//! Point and interval forecast error criteria over an `[age][origin]` grid.

use nalgebra::DMatrix;

use super::EvalError;

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), EvalError> {
    if a.shape() != b.shape() {
        return Err(EvalError::DimMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::DimMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Relative errors `(m - mhat) / m`, checking that every actual is positive.
fn relative_errors<'a>(
    actual: &'a DMatrix<f64>,
    predicted: &'a DMatrix<f64>,
) -> Result<impl Iterator<Item = f64> + 'a, EvalError> {
    check_dims(actual, predicted)?;
    for i in 0..actual.nrows() {
        for j in 0..actual.ncols() {
            let m = actual[(i, j)];
            if !(m > 0.0) || !m.is_finite() {
                return Err(EvalError::ZeroActual {
                    row: i,
                    col: j,
                    value: m,
                });
            }
        }
    }
    Ok(actual
        .iter()
        .zip(predicted.iter())
        .map(|(m, f)| (m - f) / m))
}

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &DMatrix<f64>, predicted: &DMatrix<f64>) -> Result<f64, EvalError> {
    let n = actual.len() as f64;
    Ok(relative_errors(actual, predicted)?
        .map(f64::abs)
        .sum::<f64>()
        / n
        * 100.0)
}

/// Root mean squared percentage error.
///
/// By default the factor 100 multiplies the mean square inside the root;
/// `outside_root` gives the conventional `100 * sqrt(mean square)`.
pub fn rmspe(
    actual: &DMatrix<f64>,
    predicted: &DMatrix<f64>,
    outside_root: bool,
) -> Result<f64, EvalError> {
    let n = actual.len() as f64;
    let ms = relative_errors(actual, predicted)?
        .map(|e| e * e)
        .sum::<f64>()
        / n;
    Ok(if outside_root {
        100.0 * ms.sqrt()
    } else {
        (ms * 100.0).sqrt()
    })
}

fn check_alpha(alpha: f64) -> Result<(), EvalError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(EvalError::BadAlpha(alpha))
    }
}

/// Interval score of the central `1 - alpha` interval `[lb, ub]` for outcome `y`:
/// the width plus `2 / alpha` times the distance by which `y` falls outside.
pub fn interval_score(lb: f64, ub: f64, y: f64, alpha: f64) -> Result<f64, EvalError> {
    check_alpha(alpha)?;
    if lb > ub || lb.is_nan() || ub.is_nan() {
        return Err(EvalError::InvertedBounds { lb, ub });
    }
    let mut s = ub - lb;
    if y < lb {
        s += 2.0 / alpha * (lb - y);
    }
    if y > ub {
        s += 2.0 / alpha * (y - ub);
    }
    Ok(s)
}

/// Interval score averaged over every cell of the grid.
pub fn mean_interval_score(
    lb: &DMatrix<f64>,
    ub: &DMatrix<f64>,
    y: &DMatrix<f64>,
    alpha: f64,
) -> Result<f64, EvalError> {
    check_dims(lb, ub)?;
    check_dims(lb, y)?;
    let mut total = 0.0;
    for ((&l, &u), &v) in lb.iter().zip(ub.iter()).zip(y.iter()) {
        total += interval_score(l, u, v, alpha)?;
    }
    Ok(total / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn mape_examples() {
        let a = col(&[0.01, 0.02]);
        assert_eq!(mape(&a, &a).unwrap(), 0.0);
        assert!((mape(&a, &col(&[0.011, 0.018])).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rmspe_examples() {
        let a = col(&[0.02]);
        assert_eq!(rmspe(&a, &a, false).unwrap(), 0.0);
        assert!((rmspe(&a, &col(&[0.018]), false).unwrap() - 1.0).abs() < 1e-12);
        assert!((rmspe(&a, &col(&[0.018]), true).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn interval_score_examples() {
        assert_eq!(interval_score(1.0, 2.0, 1.5, 0.2).unwrap(), 1.0);
        assert!((interval_score(1.0, 2.0, 0.9, 0.2).unwrap() - 2.0).abs() < 1e-12);
        assert!((interval_score(1.0, 2.0, 2.3, 0.2).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(
            interval_score(2.0, 1.0, 1.5, 0.2),
            Err(EvalError::InvertedBounds { .. })
        ));
        assert!(matches!(
            interval_score(1.0, 2.0, 1.5, 0.0),
            Err(EvalError::BadAlpha(_))
        ));
    }

    #[test]
    fn mean_interval_score_examples() {
        let lb = DMatrix::from_element(3, 4, 1.0);
        let ub = DMatrix::from_element(3, 4, 1.5);
        let y = DMatrix::from_element(3, 4, 1.2);
        assert_eq!(mean_interval_score(&lb, &ub, &y, 0.2).unwrap(), 0.5);
        let s = mean_interval_score(&col(&[1.0, 1.0]), &col(&[2.0, 2.0]), &col(&[1.5, 0.9]), 0.2)
            .unwrap();
        assert!((s - 1.5).abs() < 1e-12);
        assert!(matches!(
            mean_interval_score(&col(&[1.0]), &col(&[2.0, 2.0]), &col(&[1.5, 0.9]), 0.2),
            Err(EvalError::DimMismatch { .. })
        ));
    }

    #[test]
    fn bad_actuals() {
        let a = col(&[0.01, 0.0]);
        assert!(matches!(
            mape(&a, &a),
            Err(EvalError::ZeroActual { row: 1, col: 0, .. })
        ));
        assert!(matches!(
            mape(&a, &col(&[0.01])),
            Err(EvalError::DimMismatch { .. })
        ));
    }
}
