//! Incentive-compatibility and individual-rationality checks.

use super::{best_option, buyer_utility, Mechanism, MenuOption};
use crate::distributions::{DiscreteDistribution, Scenario, TypeVector};
use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;
use crate::utility::UtilityFunction;

pub const IC_TOL: f64 = 1e-10;
pub const IR_TOL: f64 = 1e-10;

/// Outcome of an IC check; on failure `witness` names a type and a profitable deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct IcReport {
    pub holds: bool,
    pub witness: Option<IcWitness>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcWitness {
    pub theta: TypeVector,
    /// Option (or reported type index) the buyer prefers.
    pub better: usize,
    pub gain: f64,
}

/// Expected buyer surplus and whether it is nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrReport {
    pub holds: bool,
    pub slack: f64,
}

/// Every grid type weakly prefers the option the buyer selects.
pub fn check_ic_menu(options: &[MenuOption], grid: &[TypeVector], u: &UtilityFunction) -> IcReport {
    for theta in grid {
        let (chosen, chosen_value) = best_option(options, theta, u);
        for (j, o) in options.iter().enumerate() {
            if j == chosen {
                continue;
            }
            let gain = buyer_utility(u, theta, &o.allocation, o.transfer) - chosen_value;
            if gain > IC_TOL {
                return IcReport {
                    holds: false,
                    witness: Some(IcWitness {
                        theta: theta.clone(),
                        better: j,
                        gain,
                    }),
                };
            }
        }
    }
    IcReport {
        holds: true,
        witness: None,
    }
}

/// Truthful reporting is optimal for a direct mechanism given as one
/// `(allocation, transfer)` per type in `types`.
pub fn check_ic_assignment(
    types: &[TypeVector],
    assignment: &[MenuOption],
    u: &UtilityFunction,
) -> Result<IcReport> {
    if types.len() != assignment.len() {
        return Err(Error::Validation(format!(
            "{} types but {} assigned outcomes",
            types.len(),
            assignment.len()
        )));
    }
    for (i, theta) in types.iter().enumerate() {
        let truthful = buyer_utility(u, theta, &assignment[i].allocation, assignment[i].transfer);
        for (j, report) in assignment.iter().enumerate() {
            let gain = buyer_utility(u, theta, &report.allocation, report.transfer) - truthful;
            if gain > IC_TOL {
                return Ok(IcReport {
                    holds: false,
                    witness: Some(IcWitness {
                        theta: theta.clone(),
                        better: j,
                        gain,
                    }),
                });
            }
        }
    }
    Ok(IcReport {
        holds: true,
        witness: None,
    })
}

/// `E_F[sum_i theta_i u(q_i) - t]` under truthful responses.
pub fn check_ir(mechanism: &Mechanism, dist: &DiscreteDistribution, scenario: &Scenario) -> Result<IrReport> {
    let u = scenario.utility();
    let terms = dist
        .atoms()
        .map(|(theta, w)| {
            mechanism
                .respond(theta, scenario)
                .map(|r| w * buyer_utility(u, theta, &r.allocation, r.transfer))
        })
        .collect::<Result<Vec<f64>>>()?;
    let slack = neumaier_sum(terms);
    Ok(IrReport {
        holds: slack >= -IR_TOL,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{diagonal_grid, product_grid, two_point, DEFAULT_GRID_CAP};

    fn sqrt2() -> UtilityFunction {
        UtilityFunction::scaled_power(2.0, 0.5).unwrap()
    }

    fn scenario() -> Scenario {
        Scenario::new(1, 1.0, 0.5, sqrt2()).unwrap()
    }

    fn opt(q: &[f64], t: f64) -> MenuOption {
        MenuOption::new(q.to_vec(), t).unwrap()
    }

    #[test]
    fn singleton_menu_is_ic() {
        let grid = product_grid(&scenario(), 11, DEFAULT_GRID_CAP).unwrap();
        assert!(check_ic_menu(&[opt(&[0.3], 0.2)], &grid, &sqrt2()).holds);
    }

    #[test]
    fn dominated_option_never_chosen() {
        let grid = product_grid(&scenario(), 21, DEFAULT_GRID_CAP).unwrap();
        let menu = [opt(&[1.0], 0.0), opt(&[1.0], 1.0)];
        assert!(check_ic_menu(&menu, &grid, &sqrt2()).holds);
        let m = Mechanism::finite_menu(menu.to_vec()).unwrap();
        for theta in &grid {
            assert_eq!(m.respond(theta, &scenario()).unwrap().option, Some(0));
        }
    }

    #[test]
    fn assignment_check_finds_profitable_misreport() {
        let types = vec![
            TypeVector::new(vec![0.2]).unwrap(),
            TypeVector::new(vec![0.9]).unwrap(),
        ];
        // high type is charged far more for the same quantity
        let bad = vec![opt(&[0.5], 0.1), opt(&[0.5], 0.6)];
        let report = check_ic_assignment(&types, &bad, &sqrt2()).unwrap();
        assert!(!report.holds);
        let w = report.witness.unwrap();
        assert_eq!(w.theta, types[1]);
        assert_eq!(w.better, 0);

        let good = vec![opt(&[0.1], 0.05), opt(&[0.6], 0.5)];
        assert!(check_ic_assignment(&types, &good, &sqrt2()).unwrap().holds);
        assert!(check_ic_assignment(&types, &good[..1], &sqrt2()).is_err());
    }

    #[test]
    fn ir_slack_matches_expectations() {
        let s = scenario();
        // the optimal constant bundle extracts the whole expected surplus
        let bundle = Mechanism::constant_bundle(0.25, 0.5).unwrap();
        for f in [two_point(&s, 0.0, 1.0).unwrap(), diagonal_grid(&s, 9).unwrap()] {
            let r = check_ir(&bundle, &f, &s).unwrap();
            assert!(r.holds);
            assert!(r.slack.abs() < 1e-12);
        }
        let tariff = Mechanism::linear_tariff(2.0).unwrap();
        assert!(
            check_ir(&tariff, &two_point(&s, 0.2, 0.9).unwrap(), &s)
                .unwrap()
                .slack
                >= 0.0
        );
        let greedy = Mechanism::constant_bundle(0.0, 3.0).unwrap();
        let r = check_ir(&greedy, &two_point(&s, 0.0, 1.0).unwrap(), &s).unwrap();
        assert!(!r.holds);
        assert_eq!(r.slack, -3.0);
    }
}
