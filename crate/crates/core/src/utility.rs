//! Per-service valuation `u` and its inverses.
//!
//! Only the scaled-power family `u(q) = a q^alpha` is provided. It is strictly
//! increasing and strictly concave, `u(0) = 0`, and its derivative diverges at
//! zero and vanishes at infinity, so every inverse below is well defined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, BISECTION_MAX_ITER, BISECTION_REL_TOL};

/// Tolerance on the total mass of a lottery.
pub const LOTTERY_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    ScaledPower { a: f64, alpha: f64 },
}

/// A validated utility function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityFunction {
    family: Family,
}

impl UtilityFunction {
    /// `u(q) = a q^alpha` with `a > 0` and `0 < alpha < 1`.
    pub fn scaled_power(a: f64, alpha: f64) -> Result<Self> {
        Self::from_family(Family::ScaledPower { a, alpha })
    }

    pub fn from_family(family: Family) -> Result<Self> {
        match family {
            Family::ScaledPower { a, alpha } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::Validation(format!(
                        "utility.a must be positive and finite, got {a}"
                    )));
                }
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::Validation(format!(
                        "utility.alpha must lie in (0, 1), got {alpha}"
                    )));
                }
            }
        }
        Ok(Self { family })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale(&self) -> f64 {
        match self.family {
            Family::ScaledPower { a, .. } => a,
        }
    }

    pub fn exponent(&self) -> f64 {
        match self.family {
            Family::ScaledPower { alpha, .. } => alpha,
        }
    }

    /// `u(q)`.
    pub fn value(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(Error::Domain(format!("u(q) requires q >= 0, got {q}")));
        }
        Ok(self.value_unchecked(q))
    }

    /// `u(q)` for callers that already guarantee `q >= 0`.
    pub(crate) fn value_unchecked(&self, q: f64) -> f64 {
        match self.family {
            Family::ScaledPower { a, alpha } => a * q.powf(alpha),
        }
    }

    /// `u'(q)`, strictly decreasing on `q > 0`.
    pub fn marginal(&self, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("u'(q) requires q > 0, got {q}")));
        }
        Ok(self.marginal_unchecked(q))
    }

    pub(crate) fn marginal_unchecked(&self, q: f64) -> f64 {
        match self.family {
            Family::ScaledPower { a, alpha } => a * alpha * q.powf(alpha - 1.0),
        }
    }

    /// The unique `q > 0` with `u'(q) = x`.
    pub fn marginal_inverse(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("u'^-1(x) requires x > 0, got {x}")));
        }
        Ok(self.marginal_inverse_unchecked(x))
    }

    pub(crate) fn marginal_inverse_unchecked(&self, x: f64) -> f64 {
        match self.family {
            Family::ScaledPower { a, alpha } => (x / (a * alpha)).powf(1.0 / (alpha - 1.0)),
        }
    }

    /// Family-agnostic `u'^-1` by bracket expansion and bisection on `u'`.
    pub fn marginal_inverse_bisect(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("u'^-1(x) requires x > 0, got {x}")));
        }
        numeric::solve_decreasing(
            |q| self.marginal_unchecked(q),
            x,
            1.0,
            BISECTION_REL_TOL,
            BISECTION_MAX_ITER,
        )
    }

    /// The unique `q >= 0` with `u(q) = v`.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(Error::Domain(format!("u^-1(v) requires v >= 0, got {v}")));
        }
        Ok(self.inverse_unchecked(v))
    }

    pub(crate) fn inverse_unchecked(&self, v: f64) -> f64 {
        match self.family {
            Family::ScaledPower { a, alpha } => (v / a).powf(1.0 / alpha),
        }
    }

    /// Deterministic quantity whose utility equals the lottery's expected utility.
    ///
    /// `lottery` holds `(quantity, probability)` pairs.
    pub fn certainty_equivalent(&self, lottery: &[(f64, f64)]) -> Result<f64> {
        if lottery.is_empty() {
            return Err(Error::Validation("empty lottery".into()));
        }
        for &(q, w) in lottery {
            if !(w >= 0.0) {
                return Err(Error::Validation(format!("negative lottery weight {w}")));
            }
            if !(q >= 0.0) {
                return Err(Error::Validation(format!("negative lottery quantity {q}")));
            }
        }
        let total = numeric::neumaier_sum(lottery.iter().map(|&(_, w)| w));
        if (total - 1.0).abs() > LOTTERY_WEIGHT_TOL {
            return Err(Error::Validation(format!(
                "lottery weights sum to {total}, expected 1"
            )));
        }
        if let Some(&(q, _)) = lottery.iter().find(|&&(_, w)| w == 1.0) {
            return Ok(q);
        }
        let expected = numeric::neumaier_sum(lottery.iter().map(|&(q, w)| w * self.value_unchecked(q)));
        Ok(self.inverse_unchecked(expected.max(0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sqrt2() -> UtilityFunction {
        UtilityFunction::scaled_power(2.0, 0.5).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(UtilityFunction::scaled_power(0.0, 0.5).is_err());
        assert!(UtilityFunction::scaled_power(-1.0, 0.5).is_err());
        assert!(UtilityFunction::scaled_power(1.0, 1.0).is_err());
        assert!(UtilityFunction::scaled_power(1.0, 0.0).is_err());
        assert!(UtilityFunction::scaled_power(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn value_examples() {
        let u = sqrt2();
        assert_relative_eq!(u.value(0.25).unwrap(), 1.0);
        assert_eq!(u.value(0.0).unwrap(), 0.0);
        let v = UtilityFunction::scaled_power(1.0, 0.5).unwrap();
        assert_relative_eq!(v.value(4.0).unwrap(), 2.0);
        assert!(matches!(u.value(-1e-3), Err(Error::Domain(_))));
    }

    #[test]
    fn marginal_examples() {
        let u = sqrt2();
        assert_relative_eq!(u.marginal(0.25).unwrap(), 2.0);
        assert_relative_eq!(u.marginal(1.0).unwrap(), 1.0);
        let v = UtilityFunction::scaled_power(1.0, 0.5).unwrap();
        assert_relative_eq!(v.marginal(1.0).unwrap(), 0.5);
        assert!(matches!(u.marginal(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn marginal_inverse_examples() {
        let u = sqrt2();
        assert_relative_eq!(u.marginal_inverse(2.0).unwrap(), 0.25, max_relative = 1e-14);
        assert_relative_eq!(u.marginal_inverse(1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert!(u.marginal_inverse(0.0).is_err());
        assert!(u.marginal_inverse(-2.0).is_err());
        for x in [1e-3, 0.3, 2.0, 17.0, 1e3] {
            let q = u.marginal_inverse(x).unwrap();
            assert_relative_eq!(u.marginal(q).unwrap(), x, max_relative = 1e-10);
        }
    }

    #[test]
    fn bisection_agrees_with_closed_form() {
        for (a, alpha) in [(2.0, 0.5), (1.0, 0.3), (0.7, 0.85), (5.0, 0.1)] {
            let u = UtilityFunction::scaled_power(a, alpha).unwrap();
            for x in [1e-2, 0.5, 1.0, 3.0, 40.0] {
                let closed = u.marginal_inverse(x).unwrap();
                let bis = u.marginal_inverse_bisect(x).unwrap();
                assert_relative_eq!(bis, closed, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn inverse_examples() {
        let u = sqrt2();
        assert_relative_eq!(u.inverse(1.0).unwrap(), 0.25);
        assert_eq!(u.inverse(0.0).unwrap(), 0.0);
        assert!(u.inverse(-0.1).is_err());
        for q in [0.0, 1e-4, 0.5, 3.0, 100.0] {
            assert_relative_eq!(u.inverse(u.value(q).unwrap()).unwrap(), q, max_relative = 1e-10);
        }
    }

    #[test]
    fn certainty_equivalent_examples() {
        let u = sqrt2();
        let ce = u.certainty_equivalent(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_relative_eq!(ce, 0.25, max_relative = 1e-14);
        assert_eq!(u.certainty_equivalent(&[(0.7, 1.0)]).unwrap(), 0.7);
        let v = UtilityFunction::scaled_power(1.0, 0.5).unwrap();
        assert_eq!(v.certainty_equivalent(&[(1.0, 1.0)]).unwrap(), 1.0);
    }

    #[test]
    fn certainty_equivalent_rejects_bad_weights() {
        let u = sqrt2();
        assert!(u.certainty_equivalent(&[(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(u.certainty_equivalent(&[(0.0, -0.5), (1.0, 1.5)]).is_err());
        assert!(u.certainty_equivalent(&[]).is_err());
    }
}
