//! Invariant suite run by `rcp verify`.
//!
//! Each check draws seeded random cases, records the largest residual it saw
//! and keeps the first failing case as a witness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{NamedMechanism, RunConfig};
use crate::distributions::{lattice, DiscreteDistribution, Scenario, TypeVector};
use crate::error::Result;
use crate::mechanisms::{
    buyer_response_committed, buyer_utility, derandomize, equalize_allocation, CommittedSpendContract,
    Lottery, Mechanism, Outcome, RandomMechanism, FEASIBILITY_SLACK,
};
use crate::numeric::fmt_sig;
use crate::robust::{
    certify_upper_bound, guarantee_value, optimal_contract, sum_axis_grid, worst_case_both,
    METHOD_AGREEMENT_TOL,
};
use crate::utility::UtilityFunction;

pub const ROUNDTRIP_TOL: f64 = 1e-10;
pub const DERIVATIVE_TOL: f64 = 1e-6;
pub const KKT_TOL: f64 = 1e-8;
pub const PROFIT_IDENTITY_TOL: f64 = 1e-9;
pub const EFFICIENCY_TOL: f64 = 1e-9;
pub const PERTURBATION_TOL: f64 = 1e-9;
pub const INTERIM_UTILITY_TOL: f64 = 1e-10;
pub const PUSHFORWARD_TOL: f64 = 1e-12;
pub const ATTAINMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub max_residual: f64,
    pub witness: Option<String>,
}

impl CheckResult {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failures: 0,
            max_residual: 0.0,
            witness: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    /// Records one case; `residual` is compared against `tol`.
    fn record(&mut self, residual: f64, tol: f64, witness: impl FnOnce() -> String) {
        self.cases += 1;
        if residual.is_nan() || residual > self.max_residual {
            self.max_residual = residual;
        }
        if !(residual <= tol) {
            self.failures += 1;
            if self.witness.is_none() {
                self.witness = Some(witness());
            }
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!(
            "{verdict} {:<26} cases={} failures={} max_residual={}",
            self.name,
            self.cases,
            self.failures,
            fmt_sig(self.max_residual)
        );
        if let Some(w) = &self.witness {
            s.push_str(" witness: ");
            s.push_str(w);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn render(&self) -> String {
        let mut out: Vec<String> = self.checks.iter().map(CheckResult::line).collect();
        let passed = self.checks.iter().filter(|c| c.passed()).count();
        out.push(format!("{passed}/{} checks passed", self.checks.len()));
        out.join("\n") + "\n"
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random type with occasional exact zeros and ones.
pub fn random_type<R: Rng>(rng: &mut R, k: usize) -> TypeVector {
    let comps = (0..k)
        .map(|_| {
            let r: f64 = rng.gen();
            if r < 0.08 {
                0.0
            } else if r < 0.12 {
                1.0
            } else {
                rng.gen()
            }
        })
        .collect();
    TypeVector::new(comps).expect("components in [0,1]")
}

fn random_utility<R: Rng>(rng: &mut R) -> UtilityFunction {
    UtilityFunction::scaled_power(rng.gen_range(0.5..3.0), rng.gen_range(0.2..0.8)).expect("valid range")
}

fn random_contract<R: Rng>(rng: &mut R) -> CommittedSpendContract {
    CommittedSpendContract::new(
        rng.gen_range(0.0..2.0),
        rng.gen_range(0.0..2.0),
        rng.gen_range(0.05..4.0),
    )
    .expect("valid range")
}

pub fn check_utility_roundtrips(u: &UtilityFunction, seed: u64, cases: usize) -> CheckResult {
    let mut res = CheckResult::new("utility_roundtrips");
    let mut rng = rng_for(seed, 1);
    for _ in 0..cases {
        let q = 10f64.powf(rng.gen_range(-3.0..3.0));
        let x = u.marginal_unchecked(q);
        let back = u.marginal_inverse_unchecked(x);
        res.record((back - q).abs() / q, ROUNDTRIP_TOL, || {
            format!("u'^-1(u'({q})) = {back}")
        });
        let v = u.value_unchecked(q);
        let back = u.inverse_unchecked(v);
        res.record((back - q).abs() / q, ROUNDTRIP_TOL, || {
            format!("u^-1(u({q})) = {back}")
        });
        match u.marginal_inverse_bisect(x) {
            Ok(b) => res.record((b - q).abs() / q, ROUNDTRIP_TOL, || {
                format!("bisection u'^-1({x}) = {b}, closed form {q}")
            }),
            Err(e) => res.record(f64::INFINITY, ROUNDTRIP_TOL, || e.to_string()),
        }
    }
    res
}

pub fn check_utility_derivative(u: &UtilityFunction, seed: u64, cases: usize) -> CheckResult {
    let mut res = CheckResult::new("utility_derivative");
    let mut rng = rng_for(seed, 9);
    for _ in 0..cases {
        let q = 10f64.powf(rng.gen_range(-3.0..3.0));
        let x = u.marginal_unchecked(q);
        let h = 1e-6 * q;
        let fd = (u.value_unchecked(q + h) - u.value_unchecked(q - h)) / (2.0 * h);
        res.record((fd - x).abs() / x, DERIVATIVE_TOL, || {
            format!("finite difference {fd} vs u'({q}) = {x}")
        });
    }
    res
}

pub fn check_kkt(seed: u64, cases: usize) -> CheckResult {
    let mut res = CheckResult::new("kkt_water_filling");
    let mut rng = rng_for(seed, 2);
    for _ in 0..cases {
        let u = random_utility(&mut rng);
        let contract = random_contract(&mut rng);
        let k = rng.gen_range(1..=4);
        let theta = random_type(&mut rng, k);
        let r = match buyer_response_committed(&contract, &theta, &u) {
            Ok(r) => r,
            Err(e) => {
                res.record(f64::INFINITY, KKT_TOL, || e.to_string());
                continue;
            }
        };
        let mu = r.shadow_price.unwrap_or(f64::NAN);
        let mut residual: f64 = 0.0;
        for (&th, &q) in theta.components().iter().zip(&r.allocation) {
            if th > 0.0 {
                residual = residual.max((th * u.marginal_unchecked(q) - mu).abs() / mu);
            } else if !theta.is_zero() && q != 0.0 {
                residual = f64::INFINITY;
            }
        }
        let shortfall = (contract.commit_quantity() - r.total_quantity()).max(0.0);
        if shortfall > FEASIBILITY_SLACK
            || (r.floor_binding && mu > contract.price())
            || (!r.floor_binding && mu != contract.price())
        {
            residual = f64::INFINITY;
        }
        res.record(residual, KKT_TOL, || {
            format!("contract={:?} theta={theta} response={:?}", contract, r)
        });
    }
    res
}

fn committed_objective(
    u: &UtilityFunction,
    theta: &TypeVector,
    c: &CommittedSpendContract,
    q: &[f64],
) -> f64 {
    let total: f64 = q.iter().sum();
    buyer_utility(
        u,
        theta,
        q,
        c.commit_payment() + c.price() * (total - c.commit_quantity()),
    )
}

pub fn check_response_optimality(seed: u64, cases: usize, perturbations: usize) -> CheckResult {
    let mut res = CheckResult::new("response_optimality");
    let mut rng = rng_for(seed, 3);
    for _ in 0..cases {
        let u = random_utility(&mut rng);
        let contract = random_contract(&mut rng);
        let k = rng.gen_range(1..=4);
        let theta = random_type(&mut rng, k);
        let Ok(r) = buyer_response_committed(&contract, &theta, &u) else {
            res.record(f64::INFINITY, PERTURBATION_TOL, || "response failed".into());
            continue;
        };
        let base = committed_objective(&u, &theta, &contract, &r.allocation);
        let mut worst_gain = f64::NEG_INFINITY;
        for _ in 0..perturbations {
            let scale = 10f64.powf(rng.gen_range(-4.0..0.0));
            let mut q: Vec<f64> = r
                .allocation
                .iter()
                .map(|&x| (x + scale * (1.0 + x) * rng.gen_range(-1.0..1.0)).max(0.0))
                .collect();
            let total: f64 = q.iter().sum();
            if total < contract.commit_quantity() {
                if total > 0.0 {
                    let f = contract.commit_quantity() / total;
                    q.iter_mut().for_each(|x| *x *= f);
                } else {
                    q.iter_mut()
                        .for_each(|x| *x = contract.commit_quantity() / k as f64);
                }
            }
            let gain = committed_objective(&u, &theta, &contract, &q) - base;
            worst_gain = worst_gain.max(gain);
        }
        res.record(worst_gain.max(0.0), PERTURBATION_TOL, || {
            format!("perturbation beats response by {worst_gain} at theta={theta}")
        });
    }
    res
}

pub fn check_efficiency(scenario: &Scenario, seed: u64, cases: usize) -> CheckResult {
    let mut res = CheckResult::new("efficiency_above_floor");
    let mut rng = rng_for(seed, 4);
    let contract = optimal_contract(scenario);
    let u = scenario.utility();
    for _ in 0..cases {
        let theta = random_type(&mut rng, scenario.services());
        let Ok(r) = buyer_response_committed(&contract, &theta, u) else {
            res.record(f64::INFINITY, EFFICIENCY_TOL, || "response failed".into());
            continue;
        };
        if r.floor_binding {
            continue;
        }
        let mut residual: f64 = 0.0;
        for (&th, &q) in theta.components().iter().zip(&r.allocation) {
            let efficient = if th > 0.0 {
                u.marginal_inverse_unchecked(scenario.cost() / th)
            } else {
                0.0
            };
            residual = residual.max((q - efficient).abs());
        }
        res.record(residual, EFFICIENCY_TOL, || {
            format!("theta={theta} allocation={:?}", r.allocation)
        });
    }
    res
}

pub fn check_profit_identity(
    scenario: &Scenario,
    mechanisms: &[NamedMechanism],
    seed: u64,
    cases: usize,
) -> CheckResult {
    let mut res = CheckResult::new("profit_identity");
    let target = guarantee_value(scenario);
    let mut contracts: Vec<(String, Mechanism)> = mechanisms
        .iter()
        .filter(|m| matches!(m.mechanism, Mechanism::CommittedSpend(_)))
        .map(|m| (m.label.clone(), m.mechanism.clone()))
        .collect();
    if contracts.is_empty() {
        contracts.push((
            "optimal_contract".into(),
            Mechanism::CommittedSpend(optimal_contract(scenario)),
        ));
    }
    for (label, m) in &contracts {
        let mut rng = rng_for(seed, 5);
        for _ in 0..cases {
            let theta = random_type(&mut rng, scenario.services());
            match m.seller_profit(&theta, scenario) {
                Ok(p) => res.record((p - target).abs(), PROFIT_IDENTITY_TOL, || {
                    format!(
                        "{label} at theta={theta}: profit={} guarantee={}",
                        fmt_sig(p),
                        fmt_sig(target)
                    )
                }),
                Err(e) => res.record(f64::INFINITY, PROFIT_IDENTITY_TOL, || e.to_string()),
            }
        }
    }
    res
}

pub fn check_derandomization(seed: u64, cases: usize) -> CheckResult {
    let mut res = CheckResult::new("derandomization");
    let mut rng = rng_for(seed, 6);
    for _ in 0..cases {
        let u = random_utility(&mut rng);
        let k = rng.gen_range(1..=3);
        let types = five_point_grid(&mut rng, k);
        let lotteries: Vec<Lottery> = (0..5).map(|_| random_lottery(&mut rng, k)).collect();
        let mech = RandomMechanism {
            types: types.clone(),
            lotteries,
        };
        let det = match derandomize(&mech, &u) {
            Ok(d) => d,
            Err(e) => {
                res.record(f64::INFINITY, INTERIM_UTILITY_TOL, || e.to_string());
                continue;
            }
        };
        let mut residual: f64 = 0.0;
        for theta in &types {
            for (lottery, outcome) in mech.lotteries.iter().zip(&det.outcomes) {
                let random = lottery.expected_utility(&u, theta);
                let fixed = buyer_utility(&u, theta, &outcome.allocation, outcome.transfer);
                residual = residual.max((random - fixed).abs());
            }
        }
        for (lottery, outcome) in mech.lotteries.iter().zip(&det.outcomes) {
            let before = lottery.expected_total_quantity();
            let after: f64 = outcome.allocation.iter().sum();
            if after > before * (1.0 + 1e-12) + 1e-15 {
                residual = f64::INFINITY;
            }
        }
        res.record(residual, INTERIM_UTILITY_TOL, || {
            format!("random mechanism {:?}", mech.lotteries)
        });
    }
    res
}

/// Five distinct types drawn from the lattice `{0, 1/4, ..., 1}^k`.
pub fn five_point_grid<R: Rng>(rng: &mut R, k: usize) -> Vec<TypeVector> {
    let mut all = lattice(k, 5, usize::MAX).expect("small lattice");
    for i in 0..5 {
        let j = rng.gen_range(i..all.len());
        all.swap(i, j);
    }
    all.truncate(5);
    all
}

/// Lottery with one to four outcomes, allocations in `[0, 2]^k`, transfers in `[0, 2]`.
pub fn random_lottery<R: Rng>(rng: &mut R, k: usize) -> Lottery {
    let n = rng.gen_range(1..=4);
    let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let last = 1.0 - weights[..n - 1].iter().sum::<f64>();
    weights[n - 1] = last.max(0.0);
    let entries = weights
        .into_iter()
        .map(|w| {
            let allocation = (0..k).map(|_| rng.gen_range(0.0..2.0)).collect();
            (
                Outcome {
                    allocation,
                    transfer: rng.gen_range(0.0..2.0),
                },
                w,
            )
        })
        .collect();
    Lottery::new(entries).expect("weights normalized")
}

/// Random finite distribution on a coarse lattice (so sums collide) plus a
/// few off-lattice atoms.
pub fn random_distribution<R: Rng>(rng: &mut R, k: usize) -> DiscreteDistribution {
    let n = rng.gen_range(1..=10);
    let support: Vec<TypeVector> = (0..n)
        .map(|_| {
            let comps = (0..k)
                .map(|_| {
                    if rng.gen_bool(0.8) {
                        rng.gen_range(0..=10) as f64 / 10.0
                    } else {
                        rng.gen()
                    }
                })
                .collect();
            TypeVector::new(comps).expect("in range")
        })
        .collect();
    let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    DiscreteDistribution::merged(support, weights).expect("valid distribution")
}

pub fn check_pushforward(seed: u64, cases: usize) -> CheckResult {
    let mut res = CheckResult::new("pushforward");
    let mut rng = rng_for(seed, 7);
    for _ in 0..cases {
        let k = rng.gen_range(2..=3);
        let f = random_distribution(&mut rng, k);
        let g = f.diagonal_pushforward();
        let mut residual = (f.mean_sum() - g.mean_sum()).abs();
        for theta in f.support().iter().chain(g.support()) {
            let s = theta.sum();
            residual = residual.max((f.sum_cdf(s) - g.sum_cdf(s)).abs());
        }
        let gg = g.diagonal_pushforward();
        if gg.len() != g.len() {
            residual = f64::INFINITY;
        } else {
            for ((a, wa), (b, wb)) in g.atoms().zip(gg.atoms()) {
                residual = residual.max((wa - wb).abs());
                for (x, y) in a.components().iter().zip(b.components()) {
                    residual = residual.max((x - y).abs());
                }
            }
        }
        if !g.is_diagonal() {
            residual = f64::INFINITY;
        }
        res.record(residual, PUSHFORWARD_TOL, || format!("F={f} G={g}"));
    }
    res
}

fn equalization_check(seed: u64, cases: usize) -> CheckResult {
    let mut res = CheckResult::new("equal_treatment_cost");
    let mut rng = rng_for(seed, 8);
    for _ in 0..cases {
        let u = random_utility(&mut rng);
        let k = rng.gen_range(1..=5);
        let q: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..3.0)).collect();
        let Ok(qd) = equalize_allocation(&u, &q) else {
            res.record(f64::INFINITY, 0.0, || format!("equalize failed for {q:?}"));
            continue;
        };
        let total: f64 = q.iter().sum();
        let excess = k as f64 * qd - total;
        res.record(excess.max(0.0), 1e-12 * (1.0 + total), || {
            format!("q={q:?} q_d={qd}")
        });
    }
    res
}

/// Extra contracts and tariffs probed by the method-agreement check.
fn agreement_mechanisms(scenario: &Scenario, mechanisms: &[NamedMechanism]) -> Vec<NamedMechanism> {
    let mut out = mechanisms.to_vec();
    for mult in [1.5, 2.0, 4.0] {
        out.push(NamedMechanism {
            label: format!("linear(p={mult}c)"),
            mechanism: Mechanism::LinearTariff {
                price: mult * scenario.cost(),
            },
        });
    }
    out
}

pub fn check_method_agreement(
    scenario: &Scenario,
    mechanisms: &[NamedMechanism],
    levels: &[usize],
    cap: usize,
) -> Result<CheckResult> {
    let mut res = CheckResult::new("adversary_agreement");
    for m in agreement_mechanisms(scenario, mechanisms) {
        // (guarantee, lattice intervals per axis) at the previous level
        let mut previous: Option<(f64, usize)> = None;
        for &n in levels {
            let intervals = (n - 1).div_ceil(scenario.services());
            let grid = sum_axis_grid(scenario, n, cap)?;
            match worst_case_both(&m.mechanism, scenario, &grid) {
                Ok((two, lp)) => {
                    let gap = (two.guarantee - lp.guarantee).abs();
                    res.record(gap, METHOD_AGREEMENT_TOL, || {
                        format!(
                            "{} at {n}: two_point={} grid_lp={}",
                            m.label, two.guarantee, lp.guarantee
                        )
                    });
                    for r in [&two, &lp] {
                        let replay = m.mechanism.expected_profit(&r.worst_distribution, scenario)?;
                        let mut residual = (replay - r.guarantee).abs();
                        if !r.worst_distribution.validate_in_f(scenario, 1e-9) {
                            residual = f64::INFINITY;
                        }
                        res.record(residual, ATTAINMENT_TOL, || {
                            format!(
                                "{} at {n}: replayed {replay} vs reported {}",
                                m.label, r.guarantee
                            )
                        });
                    }
                    // only a nested finer grid is guaranteed not to raise the minimum
                    if let Some((prev, _)) = previous.filter(|p| intervals % p.1 == 0) {
                        let increase = (lp.guarantee - prev).max(0.0);
                        res.record(increase, 1e-12, || {
                            format!(
                                "{}: refining to {n} raised the guarantee from {prev} to {}",
                                m.label, lp.guarantee
                            )
                        });
                    }
                    previous = Some((lp.guarantee, intervals));
                }
                Err(e) => res.record(f64::INFINITY, METHOD_AGREEMENT_TOL, || e.to_string()),
            }
        }
    }
    Ok(res)
}

pub fn check_upper_bound(
    scenario: &Scenario,
    n_menus: usize,
    seed: u64,
    grid_per_dim: usize,
    cap: usize,
) -> Result<CheckResult> {
    let mut res = CheckResult::new("upper_bound_certification");
    let grid = lattice(scenario.services(), grid_per_dim, cap)?;
    let cert = certify_upper_bound(scenario, n_menus, seed, &grid)?;
    res.cases = cert.menus_checked;
    res.failures = cert.violations.len();
    res.max_residual = (cert.max_dirac_profit - cert.guarantee).max(0.0);
    if let Some(v) = cert.violations.first() {
        res.witness = Some(format!(
            "menu {:?}: worst={} dirac={} guarantee={}",
            v.menu, v.worst_case, v.dirac_profit, cert.guarantee
        ));
    }
    Ok(res)
}

/// Runs every check for a configuration.
pub fn run_suite(cfg: &RunConfig) -> Result<VerifyReport> {
    let s = &cfg.scenario;
    let v = &cfg.verify;
    let seed = v.seed;
    let cases = v.cases;
    // method agreement uses the two coarsest levels; the finest is reserved for worst-case runs
    let levels: Vec<usize> = cfg.adversary.levels.iter().copied().take(2).collect();
    let checks = vec![
        check_utility_roundtrips(s.utility(), seed, cases),
        check_utility_derivative(s.utility(), seed, cases),
        check_kkt(seed, cases),
        check_response_optimality(seed, (cases / 100).max(1), 1000),
        check_efficiency(s, seed, cases),
        check_profit_identity(s, &cfg.mechanisms, seed, cases),
        check_derandomization(seed, (cases / 10).max(1)),
        check_pushforward(seed, (cases / 10).max(1)),
        equalization_check(seed, cases),
        check_method_agreement(s, &cfg.mechanisms, &levels, cfg.adversary.cap)?,
        check_upper_bound(s, v.n_menus, seed, v.menu_grid, cfg.adversary.cap)?,
    ];
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> Scenario {
        Scenario::new(2, 1.0, 1.0, UtilityFunction::scaled_power(2.0, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn small_checks_pass() {
        let s = scenario();
        assert!(check_utility_roundtrips(s.utility(), 1, 200).passed());
        assert!(check_utility_derivative(s.utility(), 1, 200).passed());
        assert!(check_kkt(1, 500).passed());
        assert!(check_response_optimality(1, 10, 200).passed());
        assert!(check_efficiency(&s, 1, 500).passed());
        assert!(check_derandomization(1, 100).passed());
        assert!(check_pushforward(1, 100).passed());
        assert!(equalization_check(1, 200).passed());
    }

    #[test]
    fn corrupted_commitment_fails_profit_identity() {
        let s = scenario();
        let c = optimal_contract(&s);
        let bad = NamedMechanism {
            label: "bad".into(),
            mechanism: Mechanism::committed_spend(c.commit_quantity(), c.commit_payment() + 0.1, c.price())
                .unwrap(),
        };
        let r = check_profit_identity(&s, &[bad], 9, 50);
        assert!(!r.passed());
        assert_eq!(r.failures, 50);
        assert!(r.witness.unwrap().contains("bad"));
    }
}
