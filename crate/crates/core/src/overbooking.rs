//! Chance-constrained bus capacity.
//!
//! The number of students actually on a bus is a sum of independent
//! Bernoulli(ρ_i) variables. The capacity check replaces that
//! Poisson-binomial load with a normal variable of equal mean and variance
//! and requires `mu + Φ⁻¹(1 - α) σ <= Q + 1/2`. For integer programs the
//! standard deviation is rounded up to an integer level `σ̃ ∈ {0..v⁺}`
//! selected by binary indicators, which only ever tightens the check.
//!
//! The exact Poisson-binomial tail is kept here as a reference for
//! measuring how good the normal approximation is.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadMoments {
    pub mu: f64,
    pub var: f64,
}

impl LoadMoments {
    pub const ZERO: Self = Self { mu: 0.0, var: 0.0 };

    pub fn of_rider(rho: f64) -> Self {
        Self { mu: rho, var: rho * (1.0 - rho) }
    }
}

impl core::ops::Add for LoadMoments {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self { mu: self.mu + rhs.mu, var: self.var + rhs.var }
    }
}

impl core::ops::AddAssign for LoadMoments {
    fn add_assign(&mut self, rhs: Self) {
        self.mu += rhs.mu;
        self.var += rhs.var;
    }
}

impl core::iter::Sum for LoadMoments {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

/// Mean and variance of the number of riders in a group.
pub fn group_moments(riderships: &[f64]) -> LoadMoments {
    riderships.iter().map(|&r| LoadMoments::of_rider(r)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum OverbookingError {
    Domain(f64),
    InvalidAlpha(f64),
    ZeroCapacity,
    VPlusTooSmall { needed: u32, v_plus: u32 },
}

impl fmt::Display for OverbookingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Domain(p) => write!(f, "quantile argument must lie in (0, 1), got {p}"),
            Self::InvalidAlpha(a) => write!(f, "alpha must lie in (0, 0.5], got {a}"),
            Self::ZeroCapacity => f.write_str("bus capacity must be at least 1"),
            Self::VPlusTooSmall { needed, v_plus } => {
                write!(f, "standard deviation level {needed} exceeds v_plus = {v_plus}")
            }
        }
    }
}

/// Bus capacity and the tolerated overcrowding probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanceParams {
    pub capacity: u32,
    pub alpha: f64,
    /// Largest integer standard-deviation level available to the MILP.
    pub v_plus: u32,
    z: f64,
}

impl ChanceParams {
    /// `v_plus` defaults to `ceil(sqrt(Q)) + 1`.
    pub fn new(capacity: u32, alpha: f64, v_plus: Option<u32>) -> Result<Self, OverbookingError> {
        if capacity == 0 {
            return Err(OverbookingError::ZeroCapacity);
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(OverbookingError::InvalidAlpha(alpha));
        }
        let min_v = math::ceil(math::sqrt(capacity as f64)) as u32;
        let v_plus = v_plus.unwrap_or(min_v + 1);
        if v_plus < min_v {
            return Err(OverbookingError::VPlusTooSmall { needed: min_v, v_plus });
        }
        let z = inv_norm_cdf(1.0 - alpha)?;
        Ok(Self { capacity, alpha, v_plus, z })
    }

    /// `Φ⁻¹(1 - α)`.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Largest expected load a zero-variance group may carry.
    pub fn effective_capacity(&self) -> f64 {
        self.capacity as f64 + 0.5
    }
}

/// Continuous normal-approximation capacity check.
pub fn normal_feasible(load: LoadMoments, params: &ChanceParams) -> bool {
    load.mu + params.z * math::sqrt(load.var.max(0.0)) <= params.effective_capacity()
}

/// Same check with the standard deviation rounded up to its integer level.
pub fn linearized_feasible(load: LoadMoments, params: &ChanceParams) -> Result<bool, OverbookingError> {
    let v = sigma_tilde(load.var, params)?;
    Ok(load.mu + params.z * v as f64 <= params.effective_capacity())
}

/// Smallest integer level `v` with `v² >= var`.
pub fn sigma_tilde(var: f64, params: &ChanceParams) -> Result<u32, OverbookingError> {
    let var = var.max(0.0);
    let mut v = math::ceil(math::sqrt(var)) as u64;
    while ((v * v) as f64) < var {
        v += 1;
    }
    while v > 0 && ((v - 1) * (v - 1)) as f64 >= var {
        v -= 1;
    }
    if v > params.v_plus as u64 {
        return Err(OverbookingError::VPlusTooSmall { needed: v as u32, v_plus: params.v_plus });
    }
    Ok(v as u32)
}

// Rational approximation coefficients for the central and tail regions.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

/// Standard normal quantile.
///
/// A rational approximation accurate to about 1e-9 relative, followed by
/// one Halley step against `erfc`.
pub fn inv_norm_cdf(p: f64) -> Result<f64, OverbookingError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(OverbookingError::Domain(p));
    }
    let x = if p < P_LOW {
        let q = math::sqrt(-2.0 * math::ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = math::sqrt(-2.0 * math::ln(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Refine on whichever tail keeps the residual well conditioned.
    let (e, sign) = if x <= 0.0 {
        (0.5 * math::erfc(-x / core::f64::consts::SQRT_2) - p, 1.0)
    } else {
        (0.5 * math::erfc(x / core::f64::consts::SQRT_2) - (1.0 - p), -1.0)
    };
    let u = sign * e * math::sqrt(2.0 * core::f64::consts::PI) * math::exp(x * x / 2.0);
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Exact distribution of the number of successes, `pmf[k] = P(S = k)`.
pub fn poisson_binomial_pmf(riderships: &[f64]) -> Vec<f64> {
    let mut pmf = vec![0.0; riderships.len() + 1];
    pmf[0] = 1.0;
    for (n, &r) in riderships.iter().enumerate() {
        for k in (1..=n + 1).rev() {
            pmf[k] = pmf[k] * (1.0 - r) + pmf[k - 1] * r;
        }
        pmf[0] *= 1.0 - r;
    }
    pmf
}

/// Exact `P(S > threshold)` by an O(n·Q) convolution truncated at the
/// threshold.
pub fn poisson_binomial_tail(riderships: &[f64], threshold: u32) -> f64 {
    let q = threshold as usize;
    if riderships.len() <= q {
        return 0.0;
    }
    // head[k] = P(S = k) for k <= q; mass that climbs above q is dropped.
    let mut head = vec![0.0; q + 1];
    head[0] = 1.0;
    for (n, &r) in riderships.iter().enumerate() {
        let top = (n + 1).min(q);
        for k in (1..=top).rev() {
            head[k] = head[k] * (1.0 - r) + head[k - 1] * r;
        }
        head[0] *= 1.0 - r;
    }
    (1.0 - head.iter().sum::<f64>()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(q: u32, alpha: f64) -> ChanceParams {
        ChanceParams::new(q, alpha, None).unwrap()
    }

    #[test]
    fn moments_of_simple_groups() {
        assert_eq!(group_moments(&[1.0; 5]), LoadMoments { mu: 5.0, var: 0.0 });
        assert_eq!(group_moments(&[0.5, 0.5]), LoadMoments { mu: 1.0, var: 0.5 });
    }

    #[test]
    fn quantile_known_values() {
        assert_eq!(inv_norm_cdf(0.5).unwrap(), 0.0);
        assert!((inv_norm_cdf(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((inv_norm_cdf(0.95).unwrap() - 1.644_853_626_951_472_2).abs() < 1e-9);
        assert!((inv_norm_cdf(1e-10).unwrap() + 6.361_340_902_404_056).abs() < 1e-8);
        assert!(matches!(inv_norm_cdf(0.0), Err(OverbookingError::Domain(_))));
        assert!(matches!(inv_norm_cdf(1.0), Err(OverbookingError::Domain(_))));
    }

    proptest! {
        #[test]
        fn quantile_is_antisymmetric(p in 1e-12..0.999_999f64) {
            let a = inv_norm_cdf(p).unwrap();
            let b = inv_norm_cdf(1.0 - p).unwrap();
            prop_assert!((a + b).abs() < 1e-8 * (1.0 + a.abs()));
        }

        #[test]
        fn quantile_inverts_erfc(p in 1e-9..0.999_999_999f64) {
            let x = inv_norm_cdf(p).unwrap();
            let back = 0.5 * math::erfc(-x / core::f64::consts::SQRT_2);
            prop_assert!((back - p).abs() <= 1e-12 + 1e-9 * p);
        }
    }

    #[test]
    fn alpha_one_half_is_a_mean_check() {
        let p = params(10, 0.5);
        assert!(normal_feasible(LoadMoments { mu: 10.5, var: 9.0 }, &p));
        assert!(!normal_feasible(LoadMoments { mu: 10.51, var: 0.0 }, &p));
    }

    #[test]
    fn deterministic_loads() {
        let p = params(20, 0.05);
        assert!(normal_feasible(LoadMoments { mu: 20.0, var: 0.0 }, &p));
        assert!(!normal_feasible(LoadMoments { mu: 21.0, var: 0.0 }, &p));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(ChanceParams::new(10, 0.6, None), Err(OverbookingError::InvalidAlpha(_))));
        assert!(matches!(ChanceParams::new(10, 0.0, None), Err(OverbookingError::InvalidAlpha(_))));
        assert_eq!(ChanceParams::new(0, 0.05, None), Err(OverbookingError::ZeroCapacity));
        assert!(ChanceParams::new(48, 0.05, Some(3)).is_err());
        assert_eq!(params(48, 0.05).v_plus, 8);
    }

    #[test]
    fn sigma_levels() {
        let p = params(48, 0.05);
        assert_eq!(sigma_tilde(0.0, &p).unwrap(), 0);
        assert_eq!(sigma_tilde(2.25, &p).unwrap(), 2);
        assert_eq!(sigma_tilde(4.0, &p).unwrap(), 2);
        assert_eq!(sigma_tilde(4.000_001, &p).unwrap(), 3);
        assert!(matches!(
            sigma_tilde(100.0, &p),
            Err(OverbookingError::VPlusTooSmall { needed: 10, v_plus: 8 })
        ));
    }

    proptest! {
        #[test]
        fn linearization_is_conservative(
            rs in proptest::collection::vec(0.0..1.0f64, 0..60),
            q in 5u32..60,
            alpha in 0.01..0.5f64,
        ) {
            let p = ChanceParams::new(q, alpha, Some(20)).unwrap();
            let load = group_moments(&rs);
            if linearized_feasible(load, &p).unwrap() {
                prop_assert!(normal_feasible(load, &p));
            }
            prop_assert!(sigma_tilde(load.var, &p).unwrap() as f64 >= math::sqrt(load.var));
        }

        #[test]
        fn tail_is_monotone(rs in proptest::collection::vec(0.0..1.0f64, 0..40), extra in 0.0..1.0f64) {
            let mut prev = 1.0;
            for q in 0..=rs.len() as u32 + 1 {
                let t = poisson_binomial_tail(&rs, q);
                prop_assert!(t <= prev + 1e-12);
                prop_assert!((0.0..=1.0).contains(&t));
                prev = t;
            }
            let mut more = rs.clone();
            more.push(extra);
            for q in 0..=rs.len() as u32 {
                prop_assert!(poisson_binomial_tail(&more, q) + 1e-12 >= poisson_binomial_tail(&rs, q));
            }
        }

        #[test]
        fn dp_moments_match_group_moments(rs in proptest::collection::vec(0.0..1.0f64, 0..50)) {
            let pmf = poisson_binomial_pmf(&rs);
            let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
            let second: f64 = pmf.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
            let m = group_moments(&rs);
            prop_assert!((mean - m.mu).abs() < 1e-10);
            prop_assert!((second - mean * mean - m.var).abs() < 1e-9);
        }
    }

    #[test]
    fn tail_small_cases() {
        assert_eq!(poisson_binomial_tail(&[1.0, 1.0, 1.0], 2), 1.0);
        assert!((poisson_binomial_tail(&[0.5, 0.5], 1) - 0.25).abs() < 1e-15);
        assert_eq!(poisson_binomial_tail(&[0.9; 3], 3), 0.0);
        let pmf = poisson_binomial_pmf(&[0.2, 0.7, 0.4]);
        let tail: f64 = pmf[2..].iter().sum();
        assert!((poisson_binomial_tail(&[0.2, 0.7, 0.4], 1) - tail).abs() < 1e-15);
    }
}
