use super::{DataError, MortalitySurface};

/// One cell changed by [`clean_rates`].
#[derive(Debug, Clone)]
pub struct Repair {
    pub age: u32,
    pub year: i32,
    /// NaN when the cell was missing.
    pub old: f64,
    pub new: f64,
}

// Missing cells are logged as NaN, so compare values by bit pattern order.
impl PartialEq for Repair {
    fn eq(&self, other: &Self) -> bool {
        self.age == other.age
            && self.year == other.year
            && self.old.total_cmp(&other.old).is_eq()
            && self.new.total_cmp(&other.new).is_eq()
    }
}

/// Make every rate strictly positive and at most one.
///
/// Per year: rates above 1 are clamped to 1; zero or missing rates are filled
/// by log-linear interpolation between the nearest valid ages above and
/// below, or copied from the nearest valid age at the edges.
pub fn clean_rates(surface: &MortalitySurface) -> Result<MortalitySurface, DataError> {
    let mut rates = surface.rates().clone();
    let mut log = Vec::new();
    let (n_ages, n_years) = rates.shape();

    for j in 0..n_years {
        let year = surface.years()[j];
        for i in 0..n_ages {
            let r = rates[(i, j)];
            if r > 1.0 {
                rates[(i, j)] = 1.0;
                log.push(Repair {
                    age: surface.ages()[i],
                    year,
                    old: r,
                    new: 1.0,
                });
            }
        }
        let valid: Vec<usize> = (0..n_ages).filter(|&i| rates[(i, j)] > 0.0).collect();
        if valid.is_empty() {
            return Err(DataError::UnrepairableColumn { year });
        }
        if valid.len() == n_ages {
            continue;
        }
        for i in 0..n_ages {
            let r = rates[(i, j)];
            if r > 0.0 {
                continue;
            }
            let below = valid.iter().rev().find(|&&v| v < i).copied();
            let above = valid.iter().find(|&&v| v > i).copied();
            let new = match (below, above) {
                (Some(lo), Some(hi)) => {
                    let w = (i - lo) as f64 / (hi - lo) as f64;
                    let (l0, l1) = (rates[(lo, j)].ln(), rates[(hi, j)].ln());
                    (l0 + w * (l1 - l0)).exp()
                }
                (Some(lo), None) => rates[(lo, j)],
                (None, Some(hi)) => rates[(hi, j)],
                (None, None) => unreachable!("column has at least one valid rate"),
            };
            log.push(Repair {
                age: surface.ages()[i],
                year,
                old: r,
                new,
            });
        }
        // Fill after the scan so interpolation only ever reads original valid cells.
        for rep in log.iter().rev().take_while(|r| r.year == year) {
            let i = surface.age_index(rep.age).unwrap();
            rates[(i, j)] = rep.new;
        }
    }
    Ok(surface.with_rates(rates, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmd::Sex;
    use nalgebra::DMatrix;

    fn column(values: &[f64]) -> MortalitySurface {
        let ages: Vec<u32> = (94..94 + values.len() as u32).collect();
        MortalitySurface::new(
            "X",
            Sex::Female,
            ages,
            false,
            vec![1972],
            DMatrix::from_column_slice(values.len(), 1, values),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn interior_zero_takes_geometric_mean() {
        let s = clean_rates(&column(&[0.2, 0.0, 0.45])).unwrap();
        // exp((ln 0.2 + ln 0.45) / 2) = sqrt(0.09) = 0.3
        assert!((s.rate(95, 1972).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(s.repairs().len(), 1);
        assert_eq!(s.repairs()[0].age, 95);
        assert_eq!(s.repairs()[0].old, 0.0);
    }

    #[test]
    fn wider_gap_is_log_linear() {
        let s = clean_rates(&column(&[0.1, f64::NAN, 0.0, 0.8])).unwrap();
        assert!((s.rate(95, 1972).unwrap() - 0.2).abs() < 1e-15);
        assert!((s.rate(96, 1972).unwrap() - 0.4).abs() < 1e-15);
        assert!(s.repairs()[0].old.is_nan());
    }

    #[test]
    fn clamps_and_copies_at_edges() {
        let s = clean_rates(&column(&[0.0, 0.3, 0.5, 1.2])).unwrap();
        assert_eq!(s.rate(97, 1972), Some(1.0));
        assert_eq!(s.rate(94, 1972), Some(0.3));
        assert_eq!(s.repairs().len(), 2);
    }

    #[test]
    fn positive_surface_is_untouched_and_cleaning_is_idempotent() {
        let s = column(&[0.1, 0.2, 0.3]);
        let c = clean_rates(&s).unwrap();
        assert_eq!(c, s);
        assert!(c.repairs().is_empty());

        let dirty = column(&[0.0, 0.2, f64::NAN, 1.5, 0.0]);
        let once = clean_rates(&dirty).unwrap();
        let twice = clean_rates(&once).unwrap();
        assert_eq!(once, twice);
        assert!(once.min_rate() > 0.0);
    }

    #[test]
    fn all_zero_year_is_unrepairable() {
        assert!(matches!(
            clean_rates(&column(&[0.0, f64::NAN])),
            Err(DataError::UnrepairableColumn { year: 1972 })
        ));
    }
}
