//! Sampled certification that no IR menu beats the closed-form guarantee.
//!
//! For a menu that is individually rational at the diagonal Dirac type
//! `(lambda/K, ..., lambda/K)`, the chosen option `(q, t)` there satisfies
//! `t <= (lambda/K) sum_i u(q_i) <= lambda u(sum_i q_i / K)`, so the profit at
//! that Dirac is at most `max_s lambda u(s/K) - c s`, the guarantee. The
//! worst case over all of the mean-demand set can only be lower still.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adversary::{worst_case_profit, Method};
use super::{guarantee_value, optimal_contract};
use crate::distributions::{diagonal_dirac, Scenario, TypeVector};
use crate::error::Result;
use crate::mechanisms::{best_option, Mechanism, MenuOption};

/// Slack for `worst <= dirac_profit` (both are exact evaluations of the same LP).
const WORST_VS_DIRAC_TOL: f64 = 1e-12;
/// Slack for `dirac_profit <= guarantee`.
pub const UPPER_BOUND_TOL: f64 = 1e-8;
const MAX_MENU_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct MenuCertificate {
    pub menu: Vec<MenuOption>,
    pub worst_case: f64,
    pub dirac_profit: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub guarantee: f64,
    pub menus_checked: usize,
    pub max_worst_case: f64,
    pub max_dirac_profit: f64,
    /// Menus that broke either inequality.
    pub violations: Vec<MenuCertificate>,
}

impl Certification {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `worst_case(menu) <= E_dirac[profit] <= guarantee + tol` on `grid`.
pub fn certify_menu(
    menu: &[MenuOption],
    scenario: &Scenario,
    grid: &[TypeVector],
) -> Result<MenuCertificate> {
    let mechanism = Mechanism::finite_menu(menu.to_vec())?;
    let worst = worst_case_profit(&mechanism, scenario, grid, Method::GridLp)?.guarantee;
    let dirac_profit = mechanism.expected_profit(&diagonal_dirac(scenario), scenario)?;
    let bound = guarantee_value(scenario);
    let holds = worst <= dirac_profit + WORST_VS_DIRAC_TOL && dirac_profit <= bound + UPPER_BOUND_TOL;
    Ok(MenuCertificate {
        menu: menu.to_vec(),
        worst_case: worst,
        dirac_profit,
        holds,
    })
}

/// Random menu with at most eight options, allocations in `[0, 4 q_bar*]^K`,
/// transfers shifted so the diagonal Dirac type is exactly indifferent to
/// participating.
pub fn random_menu<R: Rng>(scenario: &Scenario, rng: &mut R) -> Vec<MenuOption> {
    let k = scenario.services();
    let u = scenario.utility();
    let q_max = 4.0 * optimal_contract(scenario).commit_quantity();
    let t_max = scenario.mean_demand() * u.value_unchecked(q_max);
    let size = rng.gen_range(1..=MAX_MENU_SIZE);
    let mut menu: Vec<MenuOption> = (0..size)
        .map(|_| MenuOption {
            allocation: (0..k).map(|_| rng.gen_range(0.0..=q_max)).collect(),
            transfer: rng.gen_range(0.0..=t_max),
        })
        .collect();
    let dirac = diagonal_dirac(scenario).support()[0].clone();
    let (_, surplus) = best_option(&menu, &dirac, u);
    for option in &mut menu {
        option.transfer += surplus;
    }
    menu
}

/// Certifies `n_menus` seeded random menus against the guarantee.
pub fn certify_upper_bound(
    scenario: &Scenario,
    n_menus: usize,
    seed: u64,
    grid: &[TypeVector],
) -> Result<Certification> {
    let certificates = (0..n_menus)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let menu = random_menu(scenario, &mut rng);
            certify_menu(&menu, scenario, grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_worst_case = certificates
        .iter()
        .map(|c| c.worst_case)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_dirac_profit = certificates
        .iter()
        .map(|c| c.dirac_profit)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Certification {
        guarantee: guarantee_value(scenario),
        menus_checked: certificates.len(),
        max_worst_case,
        max_dirac_profit,
        violations: certificates.into_iter().filter(|c| !c.holds).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::product_grid;
    use crate::mechanisms::{check_ir, Mechanism};
    use crate::robust::optimal_quantity;
    use crate::utility::UtilityFunction;
    use approx::assert_relative_eq;

    fn scenario() -> Scenario {
        Scenario::new(2, 1.0, 1.0, UtilityFunction::scaled_power(2.0, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn optimal_bundle_menu_is_tight() {
        let s = scenario();
        let grid = product_grid(&s, 11, 1 << 20).unwrap();
        let q = optimal_quantity(&s);
        let t = s.mean_demand() * s.utility().value(q).unwrap();
        let cert = certify_menu(&[MenuOption::new(vec![q, q], t).unwrap()], &s, &grid).unwrap();
        assert!(cert.holds);
        assert_relative_eq!(cert.worst_case, guarantee_value(&s), epsilon = 1e-12);
        assert_relative_eq!(cert.dirac_profit, guarantee_value(&s), epsilon = 1e-12);
    }

    #[test]
    fn null_menu_earns_nothing() {
        let s = scenario();
        let grid = product_grid(&s, 11, 1 << 20).unwrap();
        let cert = certify_menu(&[MenuOption::new(vec![0.0, 0.0], 0.0).unwrap()], &s, &grid).unwrap();
        assert!(cert.holds);
        assert_eq!(cert.worst_case, 0.0);
    }

    #[test]
    fn random_menus_are_ir_at_the_dirac() {
        let s = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let menu = random_menu(&s, &mut rng);
            assert!((1..=8).contains(&menu.len()));
            let m = Mechanism::finite_menu(menu).unwrap();
            let ir = check_ir(&m, &diagonal_dirac(&s), &s).unwrap();
            assert!(ir.holds);
            assert!(ir.slack.abs() < 1e-12);
        }
    }

    #[test]
    fn certification_is_seed_deterministic() {
        let s = scenario();
        let grid = product_grid(&s, 11, 1 << 20).unwrap();
        let a = certify_upper_bound(&s, 40, 3, &grid).unwrap();
        let b = certify_upper_bound(&s, 40, 3, &grid).unwrap();
        assert_eq!(a, b);
        assert!(a.holds());
        assert_eq!(a.menus_checked, 40);
    }
}
