//! Individual ridership as an affine function of distance to school.
//!
//! Given the school-wide average ridership `r̄`, the fit picks the steepest
//! nonnegative slope such that the per-student probabilities average to `r̄`
//! and all stay inside `[0, 1]`. With `m = mean g(d)` the two binding bounds
//! are `slope * (m - min g) <= r̄` and `slope * (max g - m) <= 1 - r̄`; the
//! intercept follows from the mean constraint as `r̄ - slope * m`.

use core::fmt;

use crate::math;

/// Increasing transform applied to the distance before the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceTransform {
    #[default]
    Identity,
    Log1p,
}

impl DistanceTransform {
    pub fn apply(self, d: f64) -> f64 {
        match self {
            Self::Identity => d,
            Self::Log1p => math::ln_1p(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidershipModel {
    pub rho0: f64,
    pub rho1: f64,
    pub transform: DistanceTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RidershipError {
    InvalidMeanRidership(f64),
    NoDistances,
    NegativeDistance(f64),
}

impl fmt::Display for RidershipError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidMeanRidership(r) => {
                write!(f, "mean ridership must lie strictly inside (0, 1), got {r}")
            }
            Self::NoDistances => f.write_str("cannot fit ridership without distances"),
            Self::NegativeDistance(d) => write!(f, "distance must be nonnegative, got {d}"),
        }
    }
}

impl RidershipModel {
    /// Constant model, every student rides with probability `mean`.
    pub fn constant(mean: f64) -> Self {
        Self { rho0: mean, rho1: 0.0, transform: DistanceTransform::Identity }
    }

    /// Ridership probability for a student living `d` miles from school.
    pub fn individual_ridership(&self, d: f64) -> f64 {
        (self.rho0 + self.rho1 * self.transform.apply(d)).clamp(0.0, 1.0)
    }
}

/// Closed-form maximizer of the slope under the mean and box constraints.
pub fn fit_ridership(
    distances: &[f64],
    mean_ridership: f64,
    transform: DistanceTransform,
) -> Result<RidershipModel, RidershipError> {
    if !(mean_ridership > 0.0 && mean_ridership < 1.0) {
        return Err(RidershipError::InvalidMeanRidership(mean_ridership));
    }
    if distances.is_empty() {
        return Err(RidershipError::NoDistances);
    }
    if let Some(&d) = distances.iter().find(|d| !(**d >= 0.0)) {
        return Err(RidershipError::NegativeDistance(d));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &d in distances {
        let g = transform.apply(d);
        lo = lo.min(g);
        hi = hi.max(g);
        sum += g;
    }
    let mean_g = (sum / distances.len() as f64).clamp(lo, hi);
    if hi - lo <= 0.0 {
        return Ok(RidershipModel { rho0: mean_ridership, rho1: 0.0, transform });
    }
    let below = mean_g - lo;
    let above = hi - mean_g;
    let mut slope = f64::INFINITY;
    if below > 0.0 {
        slope = slope.min(mean_ridership / below);
    }
    if above > 0.0 {
        slope = slope.min((1.0 - mean_ridership) / above);
    }
    Ok(RidershipModel { rho0: mean_ridership - slope * mean_g, rho1: slope, transform })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    #[test]
    fn equal_distances_give_constant_model() {
        let m = fit_ridership(&[1.2, 1.2, 1.2], 0.8, DistanceTransform::Identity).unwrap();
        assert_eq!(m.rho1, 0.0);
        assert_eq!(m.individual_ridership(1.2), 0.8);
        assert_eq!(m.individual_ridership(5.0), 0.8);
    }

    #[test]
    fn three_point_fit() {
        let m = fit_ridership(&[1.0, 2.0, 3.0], 0.5, DistanceTransform::Identity).unwrap();
        assert!((m.rho1 - 0.5).abs() < 1e-15);
        assert!((m.rho0 + 0.5).abs() < 1e-15);
        let rho: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&d| m.individual_ridership(d)).collect();
        assert_eq!(rho, [0.0, 0.5, 1.0]);
    }

    #[test]
    fn evaluation_of_known_model() {
        let m = RidershipModel { rho0: -0.5, rho1: 0.5, transform: DistanceTransform::Identity };
        assert_eq!(m.individual_ridership(2.0), 0.5);
        assert_eq!(m.individual_ridership(10.0), 1.0);
        assert_eq!(m.individual_ridership(0.0), 0.0);
    }

    #[test]
    fn rejects_bad_mean() {
        for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                fit_ridership(&[1.0, 2.0], r, DistanceTransform::Identity),
                Err(RidershipError::InvalidMeanRidership(_))
            ));
        }
        assert_eq!(
            fit_ridership(&[], 0.5, DistanceTransform::Identity),
            Err(RidershipError::NoDistances)
        );
    }

    proptest! {
        #[test]
        fn fit_preserves_mean_and_box(
            ds in proptest::collection::vec(0.0..5.0f64, 1..60),
            r in 0.01..0.99f64,
            log in any::<bool>(),
        ) {
            let t = if log { DistanceTransform::Log1p } else { DistanceTransform::Identity };
            let m = fit_ridership(&ds, r, t).unwrap();
            prop_assert!(m.rho1 >= 0.0);
            let raw: Vec<f64> = ds.iter().map(|&d| m.rho0 + m.rho1 * t.apply(d)).collect();
            for &p in &raw {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
            }
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            prop_assert!((mean - r).abs() < 1e-9);
        }

        #[test]
        fn ridership_is_monotone(d1 in 0.0..5.0f64, d2 in 0.0..5.0f64) {
            let m = fit_ridership(&[0.1, 0.7, 2.5, 3.0], 0.3, DistanceTransform::Identity).unwrap();
            let (a, b) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(m.individual_ridership(a) <= m.individual_ridership(b));
        }
    }
}
