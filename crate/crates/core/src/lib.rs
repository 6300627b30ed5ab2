//! Robust committed-spend pricing for multi-service cloud offerings.
//!
//! A seller of `K` services knows only the mean `lambda` of the buyer's total
//! demand. The committed spend contract `(q_bar, t_bar, p)` with
//! `q_bar = K u'^-1(cK/lambda)`, `t_bar = lambda u(q_bar/K)` and `p = c`
//! earns `lambda u(q*) - cKq*` at every realized type, which is the best
//! profit guarantee any incentive-compatible, individually rational mechanism
//! can offer against all demand distributions with that mean.
//!
//! Modules:
//! - [`utility`]: the valuation `u` and its inverses.
//! - [`distributions`]: scenarios, types and finite-support demand distributions.
//! - [`mechanisms`]: contracts, buyer responses, profit, IC/IR checks, derandomization.
//! - [`robust`]: closed-form optima, the worst-case adversary and bound certification.
//! - [`verify`]: the invariant suite behind `rcp verify`.
//! - [`config`] and [`cli`]: the batch front end.

// `!(x >= 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod distributions;
pub mod error;
pub mod mechanisms;
pub mod numeric;
pub mod robust;
pub mod utility;
pub mod verify;

pub use distributions::{DiscreteDistribution, Scenario, TypeVector};
pub use error::{Error, Result};
pub use mechanisms::{BuyerResponse, CommittedSpendContract, Mechanism, MenuOption};
pub use robust::{guarantee_value, optimal_constant, optimal_contract, ProfitReport};
pub use utility::UtilityFunction;
