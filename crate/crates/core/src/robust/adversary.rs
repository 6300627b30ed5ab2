//! Worst-case expected profit over distributions with mean total demand `lambda`.
//!
//! Restricted to a finite grid of types, the adversary solves the LP
//!
//! ```text
//! min  sum_theta w_theta * profit(theta)
//! s.t. sum_theta w_theta = 1,  sum_theta w_theta * sum(theta) = lambda,  w >= 0
//! ```
//!
//! Two constraints mean a basic optimum has at most two atoms. `TwoPointSearch`
//! enumerates every straddling pair of grid points; `GridLp` takes the lower
//! convex envelope of the per-sum minimum profit and reads it off at `lambda`.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::distributions::{lattice, DiscreteDistribution, Scenario, TypeVector};
use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::numeric::fmt_sig;

/// Required agreement between the two adversary methods.
pub const METHOD_AGREEMENT_TOL: f64 = 1e-8;
/// Default sum-axis resolutions for grid refinement.
pub const DEFAULT_LEVELS: [usize; 3] = [51, 101, 201];

/// Sums closer than this to `lambda` count as hitting it exactly.
const SUM_TOL: f64 = 1e-12;
/// Bin width used to group grid points by their sum.
const SUM_BIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    TwoPointSearch,
    GridLp,
    Analytic,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::TwoPointSearch => "two_point",
            Method::GridLp => "grid_lp",
            Method::Analytic => "analytic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfitReport {
    pub mechanism: String,
    /// Worst-case expected profit.
    pub guarantee: f64,
    pub worst_distribution: DiscreteDistribution,
    pub method: Method,
    /// Number of grid points searched (0 for analytic reports).
    pub grid_points: usize,
    /// Sum-axis resolution when the grid came from [`sum_axis_grid`].
    pub sum_points: Option<usize>,
    /// Change in guarantee relative to the previous refinement level.
    pub refinement_delta: Option<f64>,
}

/// Product lattice whose type sums take (at least) `sum_points` distinct values.
///
/// Uses `ceil((sum_points - 1) / K) + 1` levels per service, which is exact
/// whenever `K` divides `sum_points - 1`.
pub fn sum_axis_grid(scenario: &Scenario, sum_points: usize, cap: usize) -> Result<Vec<TypeVector>> {
    if sum_points < 2 {
        return Err(Error::Config("sum-axis resolution must be at least 2".into()));
    }
    let k = scenario.services();
    let per_dim = (sum_points - 1).div_ceil(k) + 1;
    lattice(k, per_dim, cap)
}

fn profit_profile(
    mechanism: &Mechanism,
    scenario: &Scenario,
    grid: &[TypeVector],
) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::Config("adversary grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|t| t.dim() != scenario.services()) {
        return Err(Error::Config(format!(
            "grid point {bad} does not match K = {}",
            scenario.services()
        )));
    }
    mechanism.validate_for(scenario)?;
    let lambda = scenario.mean_demand();
    let (lo, hi) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            let s = t.sum();
            (lo.min(s), hi.max(s))
        });
    if lo > lambda + SUM_TOL || hi < lambda - SUM_TOL {
        return Err(Error::Config(format!(
            "infeasible adversary grid: type sums span [{lo}, {hi}] and do not straddle lambda = {lambda}"
        )));
    }
    grid.par_iter()
        .map(|t| mechanism.seller_profit(t, scenario).map(|p| (t.sum(), p)))
        .collect()
}

fn two_atoms(grid: &[TypeVector], lo_idx: usize, hi_idx: usize, w_lo: f64) -> Result<DiscreteDistribution> {
    if lo_idx == hi_idx || w_lo >= 1.0 {
        return Ok(DiscreteDistribution::dirac(grid[lo_idx].clone()));
    }
    if w_lo <= 0.0 {
        return Ok(DiscreteDistribution::dirac(grid[hi_idx].clone()));
    }
    DiscreteDistribution::merged(
        vec![grid[lo_idx].clone(), grid[hi_idx].clone()],
        vec![w_lo, 1.0 - w_lo],
    )
}

/// Candidate `(value, lo, hi, w_lo)`; ordered so that ties resolve by index.
type Candidate = (f64, usize, usize, f64);

fn better(a: Candidate, b: Candidate) -> Candidate {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if (a.1, a.2) <= (b.1, b.2) {
                a
            } else {
                b
            }
        }
    }
}

fn two_point_search(profile: &[(f64, f64)], lambda: f64) -> Candidate {
    let mut below = Vec::new();
    let mut above = Vec::new();
    let mut best: Candidate = (f64::INFINITY, usize::MAX, usize::MAX, 1.0);
    for (i, &(s, p)) in profile.iter().enumerate() {
        if (s - lambda).abs() <= SUM_TOL {
            best = better(best, (p, i, i, 1.0));
        } else if s < lambda {
            below.push(i);
        } else {
            above.push(i);
        }
    }
    let pairs = below
        .par_iter()
        .map(|&a| {
            let (sa, pa) = profile[a];
            let mut local: Candidate = (f64::INFINITY, usize::MAX, usize::MAX, 1.0);
            for &b in &above {
                let (sb, pb) = profile[b];
                let w = (sb - lambda) / (sb - sa);
                let v = w * pa + (1.0 - w) * pb;
                local = better(local, (v, a, b, w));
            }
            local
        })
        .reduce(|| (f64::INFINITY, usize::MAX, usize::MAX, 1.0), better);
    better(best, pairs)
}

fn envelope_search(profile: &[(f64, f64)], lambda: f64) -> Candidate {
    // per-sum minimum profit h(s)
    let mut bins: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
    for (i, &(s, p)) in profile.iter().enumerate() {
        let key = (s / SUM_BIN).round() as i64;
        bins.entry(key)
            .and_modify(|e| {
                if p < e.1 {
                    *e = (s, p, i);
                }
            })
            .or_insert((s, p, i));
    }
    let pts: Vec<(f64, f64, usize)> = bins.into_values().collect();

    // lower hull, monotone chain
    let mut hull: Vec<(f64, f64, usize)> = Vec::with_capacity(pts.len());
    for &pt in &pts {
        while hull.len() >= 2 {
            let (x1, y1, _) = hull[hull.len() - 2];
            let (x2, y2, _) = hull[hull.len() - 1];
            let cross = (x2 - x1) * (pt.1 - y1) - (y2 - y1) * (pt.0 - x1);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }

    if let Some(&(_, y, i)) = hull.iter().find(|h| (h.0 - lambda).abs() <= SUM_TOL) {
        return (y, i, i, 1.0);
    }
    for seg in hull.windows(2) {
        let (x1, y1, i1) = seg[0];
        let (x2, y2, i2) = seg[1];
        if x1 < lambda && lambda < x2 {
            let w = (x2 - lambda) / (x2 - x1);
            return (w * y1 + (1.0 - w) * y2, i1, i2, w);
        }
    }
    // only reachable if every sum sits within SUM_BIN of lambda
    let (i, &(_, p)) = profile
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("nonempty profile");
    (p, i, i, 1.0)
}

/// Worst-case expected profit of `mechanism` over distributions supported on `grid`.
pub fn worst_case_profit(
    mechanism: &Mechanism,
    scenario: &Scenario,
    grid: &[TypeVector],
    method: Method,
) -> Result<ProfitReport> {
    if method == Method::Analytic {
        return analytic_report(mechanism, scenario)
            .ok_or_else(|| Error::Config(format!("no analytic worst case available for {mechanism}")));
    }
    let profile = profit_profile(mechanism, scenario, grid)?;
    let lambda = scenario.mean_demand();
    let (value, lo, hi, w) = match method {
        Method::TwoPointSearch => two_point_search(&profile, lambda),
        _ => envelope_search(&profile, lambda),
    };
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "adversary produced non-finite value {value}"
        )));
    }
    Ok(ProfitReport {
        mechanism: mechanism.to_string(),
        guarantee: value,
        worst_distribution: two_atoms(grid, lo, hi, w)?,
        method,
        grid_points: grid.len(),
        sum_points: None,
        refinement_delta: None,
    })
}

/// Runs both grid methods and checks that they agree.
pub fn worst_case_both(
    mechanism: &Mechanism,
    scenario: &Scenario,
    grid: &[TypeVector],
) -> Result<(ProfitReport, ProfitReport)> {
    let two = worst_case_profit(mechanism, scenario, grid, Method::TwoPointSearch)?;
    let lp = worst_case_profit(mechanism, scenario, grid, Method::GridLp)?;
    let gap = (two.guarantee - lp.guarantee).abs();
    if gap > METHOD_AGREEMENT_TOL {
        return Err(Error::Numeric(format!(
            "adversary methods disagree for {mechanism}: two_point={} grid_lp={} gap={gap:e}",
            two.guarantee, lp.guarantee
        )));
    }
    Ok((two, lp))
}

/// Exact worst case for mechanisms whose profit does not depend on the type.
pub fn analytic_report(mechanism: &Mechanism, scenario: &Scenario) -> Option<ProfitReport> {
    let k = scenario.services() as f64;
    let c = scenario.cost();
    let value = match mechanism {
        Mechanism::ConstantBundle { quantity, transfer } => transfer - c * k * quantity,
        Mechanism::CommittedSpend(contract) if contract.price() == c => {
            contract.commit_payment() - c * contract.commit_quantity()
        }
        Mechanism::LinearTariff { price } if *price == c => 0.0,
        _ => return None,
    };
    Some(ProfitReport {
        mechanism: mechanism.to_string(),
        guarantee: value,
        worst_distribution: crate::distributions::diagonal_dirac(scenario),
        method: Method::Analytic,
        grid_points: 0,
        sum_points: None,
        refinement_delta: None,
    })
}

/// Worst case at each sum-axis resolution in `levels`, with refinement deltas.
pub fn refine(
    mechanism: &Mechanism,
    scenario: &Scenario,
    levels: &[usize],
    cap: usize,
    method: Method,
) -> Result<Vec<ProfitReport>> {
    let mut out: Vec<ProfitReport> = Vec::with_capacity(levels.len());
    for &n in levels {
        let grid = sum_axis_grid(scenario, n, cap)?;
        let mut report = worst_case_profit(mechanism, scenario, &grid, method)?;
        report.sum_points = Some(n);
        report.refinement_delta = out.last().map(|prev| report.guarantee - prev.guarantee);
        out.push(report);
    }
    Ok(out)
}

impl ProfitReport {
    /// `;`-separated support points.
    pub fn support_string(&self) -> String {
        self.worst_distribution
            .support()
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn weights_string(&self) -> String {
        self.worst_distribution
            .weights()
            .iter()
            .map(|&w| fmt_sig(w))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn grid_label(&self) -> String {
        match (self.method, self.sum_points) {
            (Method::Analytic, _) => "-".into(),
            (_, Some(n)) => n.to_string(),
            (_, None) => self.grid_points.to_string(),
        }
    }
}
