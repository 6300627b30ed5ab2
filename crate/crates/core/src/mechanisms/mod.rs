//! Pricing mechanisms, buyer best responses and seller profit.
//!
//! Every mechanism here ignores the buyer's first-stage report of a demand
//! distribution, so a mechanism is fully described by how it maps a realized
//! type to an allocation and a transfer.

mod checks;
mod derandomize;
mod water_filling;

use std::fmt;

use crate::distributions::{DiscreteDistribution, Scenario, TypeVector};
use crate::error::{Error, Result};
use crate::numeric::{fmt_sig, neumaier_sum};
use crate::utility::UtilityFunction;

pub use checks::{check_ic_assignment, check_ic_menu, check_ir, IcReport, IrReport, IC_TOL, IR_TOL};
pub use derandomize::{derandomize, equalize_allocation, Assignment, Lottery, Outcome, RandomMechanism};
pub use water_filling::{buyer_response_committed, FEASIBILITY_SLACK};

/// Commitment to a total quantity `q_bar` for payment `t_bar`, with excess
/// total usage billed at `price` per unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommittedSpendContract {
    commit_quantity: f64,
    commit_payment: f64,
    price: f64,
}

impl CommittedSpendContract {
    pub fn new(commit_quantity: f64, commit_payment: f64, price: f64) -> Result<Self> {
        if !(commit_quantity >= 0.0 && commit_quantity.is_finite()) {
            return Err(Error::Validation(format!(
                "q_bar must be nonnegative, got {commit_quantity}"
            )));
        }
        if !(commit_payment >= 0.0 && commit_payment.is_finite()) {
            return Err(Error::Validation(format!(
                "t_bar must be nonnegative, got {commit_payment}"
            )));
        }
        if !(price > 0.0 && price.is_finite()) {
            return Err(Error::Validation(format!("p must be positive, got {price}")));
        }
        Ok(Self {
            commit_quantity,
            commit_payment,
            price,
        })
    }

    /// Committed total quantity `q_bar`.
    pub fn commit_quantity(&self) -> f64 {
        self.commit_quantity
    }

    /// Committed payment `t_bar`.
    pub fn commit_payment(&self) -> f64 {
        self.commit_payment
    }

    /// Marginal price on usage above the commitment.
    pub fn price(&self) -> f64 {
        self.price
    }
}

/// One entry of a finite menu.
#[derive(Debug, Clone, PartialEq)]
pub struct MenuOption {
    pub allocation: Vec<f64>,
    pub transfer: f64,
}

impl MenuOption {
    pub fn new(allocation: Vec<f64>, transfer: f64) -> Result<Self> {
        if allocation.iter().any(|q| !(*q >= 0.0 && q.is_finite())) {
            return Err(Error::Validation(format!(
                "menu allocations must be nonnegative, got {allocation:?}"
            )));
        }
        if !transfer.is_finite() {
            return Err(Error::Validation(format!(
                "menu transfer must be finite, got {transfer}"
            )));
        }
        Ok(Self { allocation, transfer })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    CommittedSpend(CommittedSpendContract),
    /// `quantity` units of every service for a fixed transfer.
    ConstantBundle {
        quantity: f64,
        transfer: f64,
    },
    /// Every unit of every service priced at `price`.
    LinearTariff {
        price: f64,
    },
    FiniteMenu(Vec<MenuOption>),
}

/// What the buyer consumes and pays at a realized type.
#[derive(Debug, Clone, PartialEq)]
pub struct BuyerResponse {
    pub allocation: Vec<f64>,
    pub transfer: f64,
    /// Multiplier on total quantity; `None` for mechanisms without a price schedule.
    pub shadow_price: Option<f64>,
    pub floor_binding: bool,
    /// Index of the selected option for menus.
    pub option: Option<usize>,
}

impl BuyerResponse {
    pub fn total_quantity(&self) -> f64 {
        neumaier_sum(self.allocation.iter().copied())
    }
}

/// `sum_i theta_i u(q_i) - t`.
pub fn buyer_utility(u: &UtilityFunction, theta: &TypeVector, allocation: &[f64], transfer: f64) -> f64 {
    neumaier_sum(theta.components().iter().zip(allocation).map(|(&th, &q)| {
        if th == 0.0 {
            0.0
        } else {
            th * u.value_unchecked(q.max(0.0))
        }
    })) - transfer
}

impl Mechanism {
    pub fn committed_spend(q_bar: f64, t_bar: f64, p: f64) -> Result<Self> {
        CommittedSpendContract::new(q_bar, t_bar, p).map(Mechanism::CommittedSpend)
    }

    pub fn constant_bundle(quantity: f64, transfer: f64) -> Result<Self> {
        if !(quantity >= 0.0 && quantity.is_finite()) || !transfer.is_finite() {
            return Err(Error::Validation(format!(
                "constant bundle needs q >= 0 and finite t, got q={quantity} t={transfer}"
            )));
        }
        Ok(Mechanism::ConstantBundle { quantity, transfer })
    }

    pub fn linear_tariff(price: f64) -> Result<Self> {
        if !(price > 0.0 && price.is_finite()) {
            return Err(Error::Validation(format!(
                "linear tariff price must be positive, got {price}"
            )));
        }
        Ok(Mechanism::LinearTariff { price })
    }

    pub fn finite_menu(options: Vec<MenuOption>) -> Result<Self> {
        if options.is_empty() {
            return Err(Error::Validation("menu must offer at least one option".into()));
        }
        let dim = options[0].allocation.len();
        if dim == 0 || options.iter().any(|o| o.allocation.len() != dim) {
            return Err(Error::Validation(
                "menu allocations must share a positive dimension".into(),
            ));
        }
        Ok(Mechanism::FiniteMenu(options))
    }

    /// Checks that the mechanism is usable in `scenario` (menu dimension).
    pub fn validate_for(&self, scenario: &Scenario) -> Result<()> {
        if let Mechanism::FiniteMenu(options) = self {
            if options[0].allocation.len() != scenario.services() {
                return Err(Error::Validation(format!(
                    "menu allocations have {} services, scenario has K = {}",
                    options[0].allocation.len(),
                    scenario.services()
                )));
            }
        }
        Ok(())
    }

    /// Short kind tag matching the configuration vocabulary.
    pub fn kind(&self) -> &'static str {
        match self {
            Mechanism::CommittedSpend(_) => "committed_spend",
            Mechanism::ConstantBundle { .. } => "constant",
            Mechanism::LinearTariff { .. } => "linear",
            Mechanism::FiniteMenu(_) => "menu",
        }
    }

    /// Buyer's truthful best response at `theta`.
    pub fn respond(&self, theta: &TypeVector, scenario: &Scenario) -> Result<BuyerResponse> {
        let k = scenario.services();
        if theta.dim() != k {
            return Err(Error::Validation(format!(
                "type has {} components, scenario has K = {k}",
                theta.dim()
            )));
        }
        let u = scenario.utility();
        match self {
            Mechanism::CommittedSpend(contract) => buyer_response_committed(contract, theta, u),
            Mechanism::ConstantBundle { quantity, transfer } => Ok(BuyerResponse {
                allocation: vec![*quantity; k],
                transfer: *transfer,
                shadow_price: None,
                floor_binding: false,
                option: None,
            }),
            Mechanism::LinearTariff { price } => {
                let allocation: Vec<f64> = theta
                    .components()
                    .iter()
                    .map(|&th| {
                        if th > 0.0 {
                            u.marginal_inverse_unchecked(price / th)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let transfer = price * neumaier_sum(allocation.iter().copied());
                Ok(BuyerResponse {
                    allocation,
                    transfer,
                    shadow_price: Some(*price),
                    floor_binding: false,
                    option: None,
                })
            }
            Mechanism::FiniteMenu(options) => {
                self.validate_for(scenario)?;
                let (best, _) = best_option(options, theta, u);
                let chosen = &options[best];
                Ok(BuyerResponse {
                    allocation: chosen.allocation.clone(),
                    transfer: chosen.transfer,
                    shadow_price: None,
                    floor_binding: false,
                    option: Some(best),
                })
            }
        }
    }

    /// Transfer minus production cost at `theta`.
    ///
    /// Per-unit prices are netted against cost before multiplying, so huge
    /// free-demand quantities at `p = c` do not cancel catastrophically.
    pub fn seller_profit(&self, theta: &TypeVector, scenario: &Scenario) -> Result<f64> {
        let r = self.respond(theta, scenario)?;
        let c = scenario.cost();
        let total = r.total_quantity();
        Ok(match self {
            Mechanism::CommittedSpend(contract) if !r.floor_binding => {
                let excess = (total - contract.commit_quantity()).max(0.0);
                contract.commit_payment() - c * contract.commit_quantity() + (contract.price() - c) * excess
            }
            Mechanism::LinearTariff { price } => (price - c) * total,
            _ => r.transfer - c * total,
        })
    }

    /// `E_F[seller_profit]`.
    pub fn expected_profit(&self, dist: &DiscreteDistribution, scenario: &Scenario) -> Result<f64> {
        let terms = dist
            .atoms()
            .map(|(theta, w)| self.seller_profit(theta, scenario).map(|p| w * p))
            .collect::<Result<Vec<f64>>>()?;
        Ok(neumaier_sum(terms))
    }
}

/// Index and utility of the best option; ties go to the lowest index.
pub fn best_option(options: &[MenuOption], theta: &TypeVector, u: &UtilityFunction) -> (usize, f64) {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, o) in options.iter().enumerate() {
        let v = buyer_utility(u, theta, &o.allocation, o.transfer);
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    (best, best_value)
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::CommittedSpend(c) => write!(
                f,
                "committed_spend(q_bar={} t_bar={} p={})",
                fmt_sig(c.commit_quantity),
                fmt_sig(c.commit_payment),
                fmt_sig(c.price)
            ),
            Mechanism::ConstantBundle { quantity, transfer } => {
                write!(f, "constant(q={} t={})", fmt_sig(*quantity), fmt_sig(*transfer))
            }
            Mechanism::LinearTariff { price } => write!(f, "linear(p={})", fmt_sig(*price)),
            Mechanism::FiniteMenu(options) => write!(f, "menu({} options)", options.len()),
        }
    }
}
