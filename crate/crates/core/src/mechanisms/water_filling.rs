//! Buyer best response to a committed spend contract.
//!
//! The buyer maximizes `sum_i theta_i u(q_i) - t_bar - p (sum_i q_i - q_bar)`
//! subject to `sum_i q_i >= q_bar`. Above the floor each service is consumed
//! until `theta_i u'(q_i) = p`; when that total falls short of `q_bar`, the
//! floor binds and the committed quantity is spread so that weighted marginal
//! utilities equal a common shadow price `mu < p`.

use super::{BuyerResponse, CommittedSpendContract};
use crate::distributions::TypeVector;
use crate::error::{Error, Result};
use crate::numeric::{neumaier_sum, BISECTION_MAX_ITER};
use crate::utility::UtilityFunction;

/// Allowed shortfall of `sum q` below `q_bar`.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

const SHADOW_REL_TOL: f64 = 4.0 * f64::EPSILON;

fn demand(u: &UtilityFunction, theta: &[f64], mu: f64) -> Vec<f64> {
    theta
        .iter()
        .map(|&th| {
            if th > 0.0 {
                u.marginal_inverse_unchecked(mu / th)
            } else {
                0.0
            }
        })
        .collect()
}

fn total_demand(u: &UtilityFunction, theta: &[f64], mu: f64) -> f64 {
    neumaier_sum(demand(u, theta, mu))
}

pub fn buyer_response_committed(
    contract: &CommittedSpendContract,
    theta: &TypeVector,
    u: &UtilityFunction,
) -> Result<BuyerResponse> {
    let k = theta.dim();
    let q_bar = contract.commit_quantity();
    let t_bar = contract.commit_payment();
    let p = contract.price();
    let th = theta.components();

    if theta.is_zero() {
        // indifferent among all splits of q_bar; pick the symmetric one
        return Ok(BuyerResponse {
            allocation: vec![q_bar / k as f64; k],
            transfer: t_bar,
            shadow_price: Some(p),
            floor_binding: true,
            option: None,
        });
    }

    let free = demand(u, th, p);
    let free_total = neumaier_sum(free.iter().copied());
    if free_total >= q_bar {
        return Ok(BuyerResponse {
            allocation: free,
            transfer: t_bar + p * (free_total - q_bar),
            shadow_price: Some(p),
            floor_binding: false,
            option: None,
        });
    }

    let mut lo = p;
    let mut shrinks = 0;
    while total_demand(u, th, lo) < q_bar {
        lo *= 0.5;
        shrinks += 1;
        if shrinks > 4 * BISECTION_MAX_ITER || lo == 0.0 {
            return Err(Error::Numeric(format!(
                "shadow price bracket failed: theta={theta} q_bar={q_bar} p={p} mu_lo={lo}"
            )));
        }
    }
    let mut hi = p;
    let mut converged = false;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= SHADOW_REL_TOL * hi || mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        if total_demand(u, th, mid) >= q_bar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "shadow price bisection did not converge in {BISECTION_MAX_ITER} iterations: \
             theta={theta} q_bar={q_bar} p={p} bracket=[{lo}, {hi}]"
        )));
    }
    // lo keeps the floor satisfied
    Ok(BuyerResponse {
        allocation: demand(u, th, lo),
        transfer: t_bar,
        shadow_price: Some(lo),
        floor_binding: true,
        option: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sqrt2() -> UtilityFunction {
        UtilityFunction::scaled_power(2.0, 0.5).unwrap()
    }

    fn tv(x: &[f64]) -> TypeVector {
        TypeVector::new(x.to_vec()).unwrap()
    }

    fn contract() -> CommittedSpendContract {
        CommittedSpendContract::new(0.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn unconstrained_high_type() {
        let r = buyer_response_committed(&contract(), &tv(&[1.0, 1.0]), &sqrt2()).unwrap();
        assert_relative_eq!(r.allocation[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(r.allocation[1], 1.0, max_relative = 1e-14);
        assert_relative_eq!(r.transfer, 2.5, max_relative = 1e-14);
        assert_eq!(r.shadow_price, Some(1.0));
        assert!(!r.floor_binding);
    }

    #[test]
    fn zero_type_takes_equal_split() {
        let r = buyer_response_committed(&contract(), &tv(&[0.0, 0.0]), &sqrt2()).unwrap();
        assert_eq!(r.allocation, vec![0.25, 0.25]);
        assert_eq!(r.transfer, 1.0);
        assert!(r.floor_binding);
    }

    #[test]
    fn floor_binds_for_low_type() {
        // analytically: 2 (0.1 / mu)^2 = 0.5  =>  mu = 0.2
        let r = buyer_response_committed(&contract(), &tv(&[0.1, 0.1]), &sqrt2()).unwrap();
        assert!(r.floor_binding);
        assert_relative_eq!(r.shadow_price.unwrap(), 0.2, max_relative = 1e-13);
        assert_relative_eq!(r.allocation[0], 0.25, max_relative = 1e-12);
        assert_relative_eq!(r.allocation[1], 0.25, max_relative = 1e-12);
        assert_eq!(r.transfer, 1.0);
        assert!(r.total_quantity() >= 0.5 - FEASIBILITY_SLACK);
    }

    #[test]
    fn floor_binding_matches_closed_form_shadow_price() {
        // for a q^alpha the binding multiplier solves
        // mu^(1/(alpha-1)) * sum_i (theta_i a alpha)^(1/(1-alpha)) = q_bar
        let (a, alpha) = (1.3, 0.35);
        let u = UtilityFunction::scaled_power(a, alpha).unwrap();
        let c = CommittedSpendContract::new(2.0, 0.4, 3.0).unwrap();
        let theta = [0.2, 0.0, 0.7];
        let r = buyer_response_committed(&c, &tv(&theta), &u).unwrap();
        let s: f64 = theta
            .iter()
            .filter(|&&t| t > 0.0)
            .map(|&t| (t * a * alpha).powf(1.0 / (1.0 - alpha)))
            .sum();
        let mu = (2.0 / s).powf(alpha - 1.0);
        assert!(r.floor_binding);
        assert_relative_eq!(r.shadow_price.unwrap(), mu, max_relative = 1e-12);
        assert_eq!(r.allocation[1], 0.0);
    }

    #[test]
    fn single_positive_component_absorbs_floor() {
        let r = buyer_response_committed(&contract(), &tv(&[0.0, 0.05]), &sqrt2()).unwrap();
        assert!(r.floor_binding);
        assert_eq!(r.allocation[0], 0.0);
        assert_relative_eq!(r.allocation[1], 0.5, max_relative = 1e-12);
    }
}
