//! Logistic opt-out model.
//!
//! A student living `d` miles from school accepts an incentive `tau` with
//! probability `1 / (1 + exp(a d + b tau + c))`. Far students are less
//! likely to accept (`a > 0`), larger incentives attract more students
//! (`b < 0`), and without an incentive almost nobody opts out (`c > 0`).

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::instance::Instance;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOutModel {
    /// Per-mile coefficient.
    pub a: f64,
    /// Per-USD coefficient.
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptOutError {
    SignConstraint { a: f64, b: f64, c: f64 },
    InvalidAnchors(&'static str),
    InfeasibleCalibration { a: f64, b: f64 },
}

impl fmt::Display for OptOutError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SignConstraint { a, b, c } => {
                write!(f, "opt-out model needs a > 0, b < 0, c > 0 (got a={a}, b={b}, c={c})")
            }
            Self::InvalidAnchors(why) => write!(f, "invalid calibration anchors: {why}"),
            Self::InfeasibleCalibration { a, b } => {
                write!(f, "calibration anchors imply a={a}, b={b}; need a > 0 and b < 0")
            }
        }
    }
}

/// Behavioral anchors used to pin the three coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationAnchors {
    pub d_close: f64,
    pub p_high: f64,
    pub tau_high: f64,
    pub d_far: f64,
    pub p_low: f64,
    pub tau_low: f64,
    /// Opt-out probability at zero distance and zero incentive.
    pub epsilon0: f64,
}

#[inline]
fn logit_complement(p: f64) -> f64 {
    math::ln(1.0 / p - 1.0)
}

impl Default for OptOutModel {
    fn default() -> Self {
        Self { a: 2.0, b: -0.004, c: 6.0 }
    }
}

impl OptOutModel {
    /// Model with the documented sign constraints enforced.
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, OptOutError> {
        if a > 0.0 && b < 0.0 && c > 0.0 {
            Ok(Self { a, b, c })
        } else {
            Err(OptOutError::SignConstraint { a, b, c })
        }
    }

    /// Opt-out probability of a student at distance `d` offered `tau`.
    pub fn probability(&self, d: f64, tau: f64) -> f64 {
        let z = self.a * d + self.b * tau + self.c;
        if z > 700.0 {
            0.0
        } else if z < -700.0 {
            1.0
        } else if z >= 0.0 {
            let e = math::exp(-z);
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + math::exp(z))
        }
    }

    /// Solves the coefficients from two behavioral anchors and the
    /// zero-incentive floor.
    pub fn calibrate(anchors: &CalibrationAnchors) -> Result<Self, OptOutError> {
        let CalibrationAnchors { d_close, p_high, tau_high, d_far, p_low, tau_low, epsilon0 } =
            *anchors;
        if !(d_close < d_far) {
            return Err(OptOutError::InvalidAnchors("d_close must be below d_far"));
        }
        if !(tau_low < tau_high) {
            return Err(OptOutError::InvalidAnchors("tau_low must be below tau_high"));
        }
        if !(p_low < p_high && p_high < 1.0) {
            return Err(OptOutError::InvalidAnchors("need p_low < p_high < 1"));
        }
        if !(epsilon0 > 0.0 && epsilon0 < p_low) {
            return Err(OptOutError::InvalidAnchors("need 0 < epsilon0 < p_low"));
        }
        let c = logit_complement(epsilon0);
        let r1 = logit_complement(p_high) - c;
        let r2 = logit_complement(p_low) - c;
        // [d_close tau_high; d_far tau_low] [a b]^T = [r1 r2]^T
        let det = d_close * tau_low - tau_high * d_far;
        if det == 0.0 {
            return Err(OptOutError::InvalidAnchors("anchors are collinear"));
        }
        let a = (r1 * tau_low - tau_high * r2) / det;
        let b = (d_close * r2 - d_far * r1) / det;
        if !(a > 0.0 && b < 0.0) {
            return Err(OptOutError::InfeasibleCalibration { a, b });
        }
        Ok(Self { a, b, c })
    }

    /// Draws opt-out decisions for every student of `instance`.
    ///
    /// Exactly one uniform is consumed per student, in ascending id order, so
    /// two calls sharing an rng state see the same uniforms whatever `tau` is.
    pub fn sample_optouts<R: Rng + ?Sized>(
        &self,
        instance: &Instance,
        tau: f64,
        rng: &mut R,
    ) -> BTreeSet<u32> {
        let mut order: Vec<usize> = (0..instance.students.len()).collect();
        order.sort_by_key(|&i| instance.students[i].id);
        let mut out = BTreeSet::new();
        for i in order {
            let s = &instance.students[i];
            let u: f64 = rng.random();
            if u < self.probability(s.dist_school, tau) {
                out.insert(s.id);
            }
        }
        out
    }
}
