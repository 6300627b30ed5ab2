//! Finite-support measures on the type space `[0,1]^K` and the mean-demand set.

use std::fmt;

use crate::error::{Error, Result};
use crate::numeric::{self, neumaier_sum};
use crate::utility::UtilityFunction;

/// Tolerance on the total mass of a distribution.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Quantum used to decide whether two support points (or sums) coincide.
pub const MERGE_TOL: f64 = 1e-12;
/// Default cap on the number of lattice points in [`product_grid`].
pub const DEFAULT_GRID_CAP: usize = 1_000_000;

/// Problem instance: `K` services, unit cost `c`, mean total demand `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    services: usize,
    cost: f64,
    mean_demand: f64,
    utility: UtilityFunction,
}

impl Scenario {
    pub fn new(services: usize, cost: f64, mean_demand: f64, utility: UtilityFunction) -> Result<Self> {
        if services == 0 {
            return Err(Error::Validation("scenario.K must be a positive integer".into()));
        }
        if !(cost > 0.0 && cost.is_finite()) {
            return Err(Error::Validation(format!(
                "scenario.c must be positive, got {cost}"
            )));
        }
        if !(mean_demand > 0.0 && mean_demand < services as f64) {
            return Err(Error::Validation(format!(
                "scenario.lambda must satisfy 0 < lambda < K = {services}, got {mean_demand}"
            )));
        }
        Ok(Self {
            services,
            cost,
            mean_demand,
            utility,
        })
    }

    /// Number of services `K`.
    pub fn services(&self) -> usize {
        self.services
    }

    /// Unit cost `c`.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Mean total demand `lambda`.
    pub fn mean_demand(&self) -> f64 {
        self.mean_demand
    }

    pub fn utility(&self) -> &UtilityFunction {
        &self.utility
    }

    pub fn with_mean_demand(&self, mean_demand: f64) -> Result<Self> {
        Self::new(self.services, self.cost, mean_demand, self.utility)
    }

    pub fn with_cost(&self, cost: f64) -> Result<Self> {
        Self::new(self.services, cost, self.mean_demand, self.utility)
    }
}

/// A realized demand type `theta` in `[0,1]^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeVector(Vec<f64>);

impl TypeVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation(
                "type vector must have at least one component".into(),
            ));
        }
        if let Some(bad) = components.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Validation(format!(
                "type components must lie in [0, 1], got {bad}"
            )));
        }
        Ok(Self(components))
    }

    /// The diagonal type `(level, ..., level)`.
    pub fn diagonal(dim: usize, level: f64) -> Result<Self> {
        Self::new(vec![level; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    fn key(&self) -> Vec<i64> {
        self.0.iter().map(|&x| quantize(x)).collect()
    }
}

impl fmt::Display for TypeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|&x| numeric::fmt_sig(x)).collect();
        write!(f, "({})", parts.join(","))
    }
}

fn quantize(x: f64) -> i64 {
    (x / MERGE_TOL).round() as i64
}

/// A finitely supported probability measure on `[0,1]^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<TypeVector>,
    weights: Vec<f64>,
    dim: usize,
}

impl DiscreteDistribution {
    /// Builds a distribution, rejecting duplicate support points.
    pub fn new(support: Vec<TypeVector>, weights: Vec<f64>) -> Result<Self> {
        let dist = Self::unchecked_duplicates(support, weights)?;
        let mut keys: Vec<Vec<i64>> = dist.support.iter().map(TypeVector::key).collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate support points".into()));
        }
        Ok(dist)
    }

    /// Builds a distribution, summing the weights of coinciding support points.
    /// Zero-weight atoms are dropped.
    pub fn merged(support: Vec<TypeVector>, weights: Vec<f64>) -> Result<Self> {
        let dist = Self::unchecked_duplicates(support, weights)?;
        let mut order: Vec<(Vec<i64>, usize)> = dist
            .support
            .iter()
            .enumerate()
            .map(|(i, p)| (p.key(), i))
            .collect();
        order.sort();
        let mut out_support = Vec::new();
        let mut out_weights: Vec<f64> = Vec::new();
        let mut last_key: Option<Vec<i64>> = None;
        for (key, i) in order {
            if dist.weights[i] == 0.0 {
                continue;
            }
            if last_key.as_ref() == Some(&key) {
                *out_weights.last_mut().expect("nonempty") += dist.weights[i];
            } else {
                out_support.push(dist.support[i].clone());
                out_weights.push(dist.weights[i]);
                last_key = Some(key);
            }
        }
        Ok(Self {
            support: out_support,
            weights: out_weights,
            dim: dist.dim,
        })
    }

    fn unchecked_duplicates(support: Vec<TypeVector>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Validation(
                "distribution needs at least one support point".into(),
            ));
        }
        if support.len() != weights.len() {
            return Err(Error::Validation(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        let dim = support[0].dim();
        if support.iter().any(|p| p.dim() != dim) {
            return Err(Error::Validation("support points differ in dimension".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::Validation(format!("negative weight {w}")));
        }
        let total = neumaier_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            support,
            weights,
            dim,
        })
    }

    pub fn dirac(point: TypeVector) -> Self {
        let dim = point.dim();
        Self {
            support: vec![point],
            weights: vec![1.0],
            dim,
        }
    }

    pub fn support(&self) -> &[TypeVector] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&TypeVector, f64)> {
        self.support.iter().zip(self.weights.iter().copied())
    }

    /// `E_F[theta_1 + ... + theta_K]`.
    pub fn mean_sum(&self) -> f64 {
        neumaier_sum(self.atoms().map(|(p, w)| w * p.sum()))
    }

    /// Membership in the mean-demand set, up to `tol`.
    pub fn validate_in_f(&self, scenario: &Scenario, tol: f64) -> bool {
        self.dim == scenario.services() && (self.mean_sum() - scenario.mean_demand()).abs() <= tol
    }

    /// Mass of `{theta : sum(theta) <= threshold}`.
    pub fn sum_cdf(&self, threshold: f64) -> f64 {
        neumaier_sum(
            self.atoms()
                .filter(|(p, _)| p.sum() <= threshold + MERGE_TOL)
                .map(|(_, w)| w),
        )
    }

    /// The measure on the diagonal inducing the same law of `sum(theta)`.
    ///
    /// Sums within [`MERGE_TOL`] of each other are merged; each merged atom is
    /// placed at the mass-weighted mean sum of its members. A cluster made of
    /// one exactly diagonal point keeps that point, so diagonal inputs are
    /// fixed bit for bit.
    pub fn diagonal_pushforward(&self) -> Self {
        let k = self.dim;
        let mut sums: Vec<(f64, f64, &TypeVector)> = self
            .atoms()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| (p.sum(), w, p))
            .collect();
        sums.sort_by(|x, y| x.0.total_cmp(&y.0));

        let mut support = Vec::new();
        let mut weights = Vec::new();
        let mut i = 0;
        while i < sums.len() {
            let start = i;
            let anchor = sums[i].0;
            let mut mass = 0.0;
            let mut moment = 0.0;
            while i < sums.len() && sums[i].0 - anchor <= MERGE_TOL {
                mass += sums[i].1;
                moment += sums[i].1 * sums[i].0;
                i += 1;
            }
            let first = sums[start].2;
            let exact =
                first.0.iter().all(|&x| x == first.0[0]) && sums[start..i].iter().all(|m| m.2 == first);
            if exact {
                support.push(first.clone());
            } else {
                let s = if i - start == 1 {
                    anchor
                } else {
                    (moment / mass).clamp(0.0, k as f64)
                };
                let level = (s / k as f64).clamp(0.0, 1.0);
                support.push(TypeVector(vec![level; k]));
            }
            weights.push(mass);
        }
        Self {
            support,
            weights,
            dim: k,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.support
            .iter()
            .all(|p| p.0.iter().all(|&x| (x - p.0[0]).abs() <= MERGE_TOL))
    }
}

impl fmt::Display for DiscreteDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .atoms()
            .map(|(p, w)| format!("{}:{}", p, numeric::fmt_sig(w)))
            .collect();
        write!(f, "{{{}}}", parts.join(" "))
    }
}

/// Dirac at `(lambda/K, ..., lambda/K)`.
pub fn diagonal_dirac(scenario: &Scenario) -> DiscreteDistribution {
    let k = scenario.services();
    let level = scenario.mean_demand() / k as f64;
    DiscreteDistribution::dirac(TypeVector(vec![level; k]))
}

/// Two diagonal atoms at per-service levels `s_lo` and `s_hi`, weighted to hit `lambda`.
pub fn two_point(scenario: &Scenario, s_lo: f64, s_hi: f64) -> Result<DiscreteDistribution> {
    let k = scenario.services();
    let target = scenario.mean_demand() / k as f64;
    if !(0.0..=1.0).contains(&s_lo) || !(0.0..=1.0).contains(&s_hi) || s_lo > s_hi {
        return Err(Error::Config(format!(
            "two_point needs 0 <= s_lo <= s_hi <= 1, got s_lo={s_lo} s_hi={s_hi}"
        )));
    }
    if target < s_lo || target > s_hi {
        return Err(Error::Config(format!(
            "two_point infeasible: lambda/K = {target} outside [{s_lo}, {s_hi}]"
        )));
    }
    if s_hi - s_lo <= MERGE_TOL {
        return Ok(DiscreteDistribution::dirac(TypeVector(vec![target; k])));
    }
    let w_lo = (s_hi - target) / (s_hi - s_lo);
    DiscreteDistribution::merged(
        vec![TypeVector(vec![s_lo; k]), TypeVector(vec![s_hi; k])],
        vec![w_lo, 1.0 - w_lo],
    )
}

/// Exponentially tilted weights on `levels` whose mean is `target`.
fn tilted_weights(levels: &[f64], target: f64) -> Result<Vec<f64>> {
    let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(target > lo && target < hi) {
        return Err(Error::Config(format!(
            "cannot reach mean {target} on levels spanning [{lo}, {hi}]"
        )));
    }
    let weights_at = |beta: f64| -> Vec<f64> {
        let shift = if beta >= 0.0 { hi } else { lo };
        let raw: Vec<f64> = levels.iter().map(|&x| (beta * (x - shift)).exp()).collect();
        let z = neumaier_sum(raw.iter().copied());
        raw.into_iter().map(|r| r / z).collect()
    };
    let mean_at = |beta: f64| -> f64 {
        let w = weights_at(beta);
        neumaier_sum(w.iter().zip(levels).map(|(w, x)| w * x))
    };
    // mean is increasing in beta
    let (mut a, mut b) = (-1.0_f64, 1.0_f64);
    while mean_at(a) > target {
        a *= 2.0;
        if a < -1e6 {
            return Err(Error::Numeric("tilt bracket failed".into()));
        }
    }
    while mean_at(b) < target {
        b *= 2.0;
        if b > 1e6 {
            return Err(Error::Numeric("tilt bracket failed".into()));
        }
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if mean_at(m) < target {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    Ok(weights_at(0.5 * (a + b)))
}

/// Rescales `weights` so the sum over atoms is as close to 1 as possible.
fn normalize(weights: &mut [f64]) {
    let z = neumaier_sum(weights.iter().copied());
    for w in weights.iter_mut() {
        *w /= z;
    }
}

/// `n` equally spaced diagonal atoms with tilted weights hitting `lambda`.
pub fn diagonal_grid(scenario: &Scenario, n: usize) -> Result<DiscreteDistribution> {
    if n < 2 {
        return Err(Error::Config("diagonal_grid needs n >= 2".into()));
    }
    let k = scenario.services();
    let levels: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
    let mut weights = tilted_weights(&levels, scenario.mean_demand() / k as f64)?;
    normalize(&mut weights);
    let support = levels.iter().map(|&x| TypeVector(vec![x; k])).collect();
    DiscreteDistribution::new(support, weights)
}

/// Independent coordinates, each on `n` equally spaced levels, with the
/// per-coordinate law tilted so that the total mean equals `lambda`.
pub fn independent_discrete_uniform(scenario: &Scenario, n: usize) -> Result<DiscreteDistribution> {
    if n < 2 {
        return Err(Error::Config("independent_discrete_uniform needs n >= 2".into()));
    }
    let k = scenario.services();
    let levels: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
    let marginal = tilted_weights(&levels, scenario.mean_demand() / k as f64)?;
    let points = product_grid(scenario, n, DEFAULT_GRID_CAP)?;
    let mut weights: Vec<f64> = (0..points.len())
        .map(|mut idx| {
            let mut w = 1.0;
            for _ in 0..k {
                w *= marginal[idx % n];
                idx /= n;
            }
            w
        })
        .collect();
    normalize(&mut weights);
    DiscreteDistribution::new(points, weights)
}

/// The uniform lattice on `[0,1]^K` with `points_per_dim` levels per axis.
///
/// Points are ordered with the first coordinate varying fastest.
pub fn product_grid(scenario: &Scenario, points_per_dim: usize, cap: usize) -> Result<Vec<TypeVector>> {
    lattice(scenario.services(), points_per_dim, cap)
}

/// `points_per_dim^dim` lattice on the unit cube; errors when that exceeds `cap`.
pub fn lattice(dim: usize, points_per_dim: usize, cap: usize) -> Result<Vec<TypeVector>> {
    if points_per_dim < 2 {
        return Err(Error::Config("grid needs at least 2 points per dimension".into()));
    }
    let total = (points_per_dim as u128).checked_pow(dim as u32);
    let total = match total {
        Some(t) if t <= cap as u128 => t as usize,
        _ => {
            return Err(Error::Config(format!(
                "grid of {points_per_dim}^{dim} points exceeds cap {cap}; use a coarser grid"
            )))
        }
    };
    let step = (points_per_dim - 1) as f64;
    Ok((0..total)
        .map(|mut idx| {
            let mut comps = Vec::with_capacity(dim);
            for _ in 0..dim {
                comps.push((idx % points_per_dim) as f64 / step);
                idx /= points_per_dim;
            }
            TypeVector(comps)
        })
        .collect())
}
