//! Small numeric helpers shared across modules.

use crate::error::{Error, Result};

/// Relative tolerance used by the generic bisection solver.
pub const BISECTION_REL_TOL: f64 = 1e-12;
/// Iteration cap for bisection (bracket shrinking is counted separately).
pub const BISECTION_MAX_ITER: usize = 200;
/// Cap on bracket doublings/halvings before giving up.
const BRACKET_MAX_STEPS: usize = 2000;

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Finds `x > 0` with `f(x) = target` for a strictly decreasing positive-domain `f`.
///
/// The bracket is grown geometrically from `start`, then bisected until the
/// bracket width falls below `rel_tol * hi`.
pub fn solve_decreasing<F>(f: F, target: f64, start: f64, rel_tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(start > 0.0) || !target.is_finite() {
        return Err(Error::Domain(format!(
            "solve_decreasing: start={start} target={target}"
        )));
    }
    let mut lo = start;
    let mut hi = start;
    let mut steps = 0;
    // f(lo) >= target >= f(hi)
    while f(lo) < target {
        lo *= 0.5;
        steps += 1;
        if steps > BRACKET_MAX_STEPS || lo == 0.0 {
            return Err(Error::Numeric(format!(
                "solve_decreasing: could not bracket target {target} from below (lo={lo})"
            )));
        }
    }
    while f(hi) > target {
        hi *= 2.0;
        steps += 1;
        if steps > BRACKET_MAX_STEPS || !hi.is_finite() {
            return Err(Error::Numeric(format!(
                "solve_decreasing: could not bracket target {target} from above (hi={hi})"
            )));
        }
    }
    if lo == hi {
        return Ok(lo);
    }
    for _ in 0..max_iter {
        if hi - lo <= rel_tol * hi {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v == target {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numeric(format!(
        "solve_decreasing: no convergence after {max_iter} iterations, bracket [{lo}, {hi}]"
    )))
}

/// Formats a real with 12 significant digits, trimming trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-6..=11).contains(&mag) {
        let s = format!("{:.11e}", x);
        let (mant, exp) = s.split_once('e').unwrap_or((&s, "0"));
        return format!("{}e{}", trim_zeros(mant), exp);
    }
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    // rounding can carry into a new digit (9.99.. -> 10.0); re-trim either way
    let out = trim_zeros(&s);
    if out == "-0" {
        "0".to_string()
    } else {
        out
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_finds_sqrt_inverse() {
        // f(x) = 1/x^2 is decreasing; f(x) = 4 at x = 0.5
        let x = solve_decreasing(|x| 1.0 / (x * x), 4.0, 1.0, 1e-12, 200).unwrap();
        assert!((x - 0.5).abs() < 1e-11);
        let y = solve_decreasing(|x| 1.0 / (x * x), 1e-6, 1.0, 1e-12, 200).unwrap();
        assert!((y - 1000.0).abs() / 1000.0 < 1e-11);
    }

    #[test]
    fn bisection_reports_unbracketable_target() {
        // f is bounded below by 1, target 0.5 unreachable
        let err = solve_decreasing(|x| 1.0 + 1.0 / x, 0.5, 1.0, 1e-12, 200).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn neumaier_beats_naive_on_cancellation() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(neumaier_sum(v), 1.0);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.25), "0.25");
        assert_eq!(fmt_sig(0.0625), "0.0625");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(2.0 / 3.0 * 100.0), "66.6666666667");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(0.5000000000000001), "0.5");
        assert_eq!(fmt_sig(-1e-17), "-1e-17");
        assert_eq!(fmt_sig(123456789012345.0), "1.23456789012e14");
    }
}
