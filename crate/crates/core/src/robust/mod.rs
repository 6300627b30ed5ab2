//! Closed-form robustly optimal mechanisms and worst-case profit evaluation.

mod adversary;
mod certify;

pub use adversary::{
    analytic_report, refine, sum_axis_grid, worst_case_both, worst_case_profit, Method, ProfitReport,
    DEFAULT_LEVELS, METHOD_AGREEMENT_TOL,
};
pub use certify::{certify_menu, certify_upper_bound, random_menu, Certification, MenuCertificate};

use crate::distributions::Scenario;
use crate::mechanisms::{CommittedSpendContract, Mechanism};

/// Per-service quantity `q* = u'^-1(cK / lambda)`.
pub fn optimal_quantity(scenario: &Scenario) -> f64 {
    let k = scenario.services() as f64;
    scenario
        .utility()
        .marginal_inverse_unchecked(scenario.cost() * k / scenario.mean_demand())
}

/// Constant bundle of `q*` units per service sold at `lambda u(q*)`.
pub fn optimal_constant(scenario: &Scenario) -> Mechanism {
    let q = optimal_quantity(scenario);
    Mechanism::ConstantBundle {
        quantity: q,
        transfer: scenario.mean_demand() * scenario.utility().value_unchecked(q),
    }
}

/// Committed spend contract `q_bar = K q*`, `t_bar = lambda u(q_bar / K)`, `p = c`.
pub fn optimal_contract(scenario: &Scenario) -> CommittedSpendContract {
    let k = scenario.services() as f64;
    let q_bar = k * optimal_quantity(scenario);
    let t_bar = scenario.mean_demand() * scenario.utility().value_unchecked(q_bar / k);
    CommittedSpendContract::new(q_bar, t_bar, scenario.cost())
        .expect("closed-form contract has q_bar >= 0, t_bar >= 0, p = c > 0")
}

/// Profit guarantee `lambda u(q*) - c K q*` of the optimal mechanisms.
pub fn guarantee_value(scenario: &Scenario) -> f64 {
    let q = optimal_quantity(scenario);
    let k = scenario.services() as f64;
    scenario.mean_demand() * scenario.utility().value_unchecked(q) - scenario.cost() * k * q
}
