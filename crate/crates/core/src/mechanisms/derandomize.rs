//! Replacing random allocations by certainty equivalents.
//!
//! Each service's random quantity is swapped for the deterministic quantity
//! with the same expected utility, and the transfer for its mean. Buyer
//! payoffs are unchanged at every (true type, report) pair, while concavity
//! makes each certainty equivalent no larger than the mean quantity.

use super::{buyer_utility, MenuOption};
use crate::distributions::TypeVector;
use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;
use crate::utility::{UtilityFunction, LOTTERY_WEIGHT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub allocation: Vec<f64>,
    pub transfer: f64,
}

/// Finite lottery over outcomes: `(outcome, probability)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Lottery(Vec<(Outcome, f64)>);

impl Lottery {
    pub fn new(entries: Vec<(Outcome, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("lottery needs at least one outcome".into()));
        }
        let dim = entries[0].0.allocation.len();
        for (o, w) in &entries {
            if !(*w >= 0.0) {
                return Err(Error::Validation(format!("negative lottery weight {w}")));
            }
            if o.allocation.len() != dim || o.allocation.iter().any(|q| !(*q >= 0.0)) {
                return Err(Error::Validation(
                    "lottery allocations must be nonnegative vectors of equal length".into(),
                ));
            }
        }
        let total = neumaier_sum(entries.iter().map(|(_, w)| *w));
        if (total - 1.0).abs() > LOTTERY_WEIGHT_TOL {
            return Err(Error::Validation(format!(
                "lottery weights sum to {total}, expected 1"
            )));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[(Outcome, f64)] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0[0].0.allocation.len()
    }

    /// Expected buyer payoff of type `theta` facing this lottery.
    pub fn expected_utility(&self, u: &UtilityFunction, theta: &TypeVector) -> f64 {
        neumaier_sum(
            self.0
                .iter()
                .map(|(o, w)| w * buyer_utility(u, theta, &o.allocation, o.transfer)),
        )
    }

    /// `E[sum_i q_i]`.
    pub fn expected_total_quantity(&self) -> f64 {
        neumaier_sum(
            self.0
                .iter()
                .map(|(o, w)| w * neumaier_sum(o.allocation.iter().copied())),
        )
    }

    pub fn expected_transfer(&self) -> f64 {
        neumaier_sum(self.0.iter().map(|(o, w)| w * o.transfer))
    }
}

/// A random direct mechanism on a finite type grid: one lottery per type.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMechanism {
    pub types: Vec<TypeVector>,
    pub lotteries: Vec<Lottery>,
}

/// A deterministic direct mechanism on a finite type grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub types: Vec<TypeVector>,
    pub outcomes: Vec<MenuOption>,
}

pub fn derandomize(mechanism: &RandomMechanism, u: &UtilityFunction) -> Result<Assignment> {
    if mechanism.types.len() != mechanism.lotteries.len() {
        return Err(Error::Validation(format!(
            "{} types but {} lotteries",
            mechanism.types.len(),
            mechanism.lotteries.len()
        )));
    }
    let mut outcomes = Vec::with_capacity(mechanism.lotteries.len());
    for lottery in &mechanism.lotteries {
        let allocation = (0..lottery.dim())
            .map(|i| {
                let marginal: Vec<(f64, f64)> = lottery
                    .entries()
                    .iter()
                    .map(|(o, w)| (o.allocation[i], *w))
                    .collect();
                u.certainty_equivalent(&marginal)
            })
            .collect::<Result<Vec<f64>>>()?;
        outcomes.push(MenuOption {
            allocation,
            transfer: lottery.expected_transfer(),
        });
    }
    Ok(Assignment {
        types: mechanism.types.clone(),
        outcomes,
    })
}

/// Common per-service quantity with the same average utility as `allocation`.
pub fn equalize_allocation(u: &UtilityFunction, allocation: &[f64]) -> Result<f64> {
    if allocation.is_empty() {
        return Err(Error::Validation("empty allocation".into()));
    }
    let mut values = Vec::with_capacity(allocation.len());
    for &q in allocation {
        values.push(u.value(q)?);
    }
    let mean = neumaier_sum(values) / allocation.len() as f64;
    if allocation.iter().all(|&q| q == allocation[0]) {
        return Ok(allocation[0]);
    }
    u.inverse(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sqrt2() -> UtilityFunction {
        UtilityFunction::scaled_power(2.0, 0.5).unwrap()
    }

    fn outcome(q: &[f64], t: f64) -> Outcome {
        Outcome {
            allocation: q.to_vec(),
            transfer: t,
        }
    }

    #[test]
    fn coin_flip_quantity_becomes_certainty_equivalent() {
        let lottery = Lottery::new(vec![(outcome(&[0.0], 0.0), 0.5), (outcome(&[1.0], 2.0), 0.5)]).unwrap();
        let m = RandomMechanism {
            types: vec![TypeVector::new(vec![0.6]).unwrap()],
            lotteries: vec![lottery.clone()],
        };
        let d = derandomize(&m, &sqrt2()).unwrap();
        assert_relative_eq!(d.outcomes[0].allocation[0], 0.25, max_relative = 1e-14);
        assert_eq!(d.outcomes[0].transfer, 1.0);
        assert!(d.outcomes[0].allocation[0] <= lottery.expected_total_quantity());
    }

    #[test]
    fn degenerate_lotteries_are_unchanged() {
        let lottery = Lottery::new(vec![(outcome(&[0.3, 0.8], 0.7), 1.0)]).unwrap();
        let m = RandomMechanism {
            types: vec![TypeVector::new(vec![0.6, 0.1]).unwrap()],
            lotteries: vec![lottery],
        };
        let d = derandomize(&m, &sqrt2()).unwrap();
        assert_eq!(d.outcomes[0], MenuOption::new(vec![0.3, 0.8], 0.7).unwrap());
    }

    #[test]
    fn lottery_validation() {
        assert!(Lottery::new(vec![]).is_err());
        assert!(Lottery::new(vec![(outcome(&[0.0], 0.0), 0.4)]).is_err());
        assert!(Lottery::new(vec![(outcome(&[-1.0], 0.0), 1.0)]).is_err());
        assert!(Lottery::new(vec![
            (outcome(&[1.0], 0.0), 0.5),
            (outcome(&[1.0, 1.0], 0.0), 0.5)
        ])
        .is_err());
    }

    #[test]
    fn equalized_allocation_costs_less() {
        let u = sqrt2();
        let q = [0.1, 0.9, 2.5];
        let qd = equalize_allocation(&u, &q).unwrap();
        assert!(3.0 * qd <= q.iter().sum::<f64>());
        let mean_u: f64 = q.iter().map(|&x| u.value(x).unwrap()).sum::<f64>() / 3.0;
        assert_relative_eq!(u.value(qd).unwrap(), mean_u, max_relative = 1e-12);
        assert_eq!(equalize_allocation(&u, &[0.4, 0.4]).unwrap(), 0.4);
        assert!(equalize_allocation(&u, &[-0.4, 0.4]).is_err());
    }
}
