//! Run configuration files.
//!
//! A config is a TOML document with the sections `scenario`, `mechanism`
//! (repeatable), `adversary`, `verify`, `output` and an optional
//! `distribution`. Unknown keys are rejected.
//!
//! ```toml
//! [scenario]
//! K = 2
//! c = 1.0
//! lambda = 1.0
//! utility.family = "scaled_power"
//! utility.a = 2.0
//! utility.alpha = 0.5
//!
//! [[mechanism]]
//! kind = "committed_spend"   # no fields: the closed-form optimal contract
//!
//! [[mechanism]]
//! kind = "linear"
//! p = 2.0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::distributions::{self, DiscreteDistribution, Scenario, TypeVector, DEFAULT_GRID_CAP};
use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, MenuOption};
use crate::robust::{optimal_constant, optimal_contract, DEFAULT_LEVELS};
use crate::utility::{Family, UtilityFunction};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: RawScenario,
    #[serde(default)]
    pub mechanism: Vec<RawMechanism>,
    #[serde(default)]
    pub adversary: RawAdversary,
    #[serde(default)]
    pub verify: RawVerify,
    #[serde(default)]
    pub output: RawOutput,
    pub distribution: Option<RawDistribution>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    #[serde(rename = "K")]
    pub k: usize,
    pub c: f64,
    pub lambda: f64,
    pub utility: Family,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawMechanism {
    /// Omitting all three fields selects the closed-form optimal contract.
    CommittedSpend {
        name: Option<String>,
        q_bar: Option<f64>,
        t_bar: Option<f64>,
        p: Option<f64>,
    },
    /// Omitting both fields selects the closed-form optimal bundle.
    Constant {
        name: Option<String>,
        q: Option<f64>,
        t: Option<f64>,
    },
    /// Either an absolute price `p` or a markup `p_over_c` on cost.
    Linear {
        name: Option<String>,
        p: Option<f64>,
        p_over_c: Option<f64>,
    },
    Menu {
        name: Option<String>,
        options: Vec<RawMenuOption>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMenuOption {
    pub q: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAdversary {
    /// Sum-axis resolutions, coarse to fine.
    pub levels: Option<Vec<usize>>,
    /// A single product grid with this many levels per service (overrides `levels`).
    pub points_per_dim: Option<usize>,
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVerify {
    pub n_menus: Option<usize>,
    pub seed: Option<u64>,
    pub cases: Option<usize>,
    pub menu_grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub format: Option<String>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawDistribution {
    TwoPoint { s_lo: f64, s_hi: f64 },
    DiagonalGrid { n: usize },
    IndependentDiscreteUniform { n: usize },
    Dirac,
    Literal { atoms: Vec<RawAtom> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAtom {
    pub theta: Vec<f64>,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::Validation(format!(
                "output.format must be \"table\" or \"csv\", got \"{other}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryConfig {
    pub levels: Vec<usize>,
    pub points_per_dim: Option<usize>,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub n_menus: usize,
    pub seed: u64,
    pub cases: usize,
    pub menu_grid: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_menus: 1000,
            seed: 42,
            cases: 10_000,
            menu_grid: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMechanism {
    pub label: String,
    pub mechanism: Mechanism,
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub mechanisms: Vec<NamedMechanism>,
    pub adversary: AdversaryConfig,
    pub verify: VerifyConfig,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub distribution: Option<DiscreteDistribution>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Validation(format!("config: {}", e.message())))?;
        raw.resolve()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

fn default_mechanisms(scenario: &Scenario) -> Vec<NamedMechanism> {
    vec![
        NamedMechanism {
            label: "optimal_contract".into(),
            mechanism: Mechanism::CommittedSpend(optimal_contract(scenario)),
        },
        NamedMechanism {
            label: "optimal_constant".into(),
            mechanism: optimal_constant(scenario),
        },
        NamedMechanism {
            label: "marginal_cost".into(),
            mechanism: Mechanism::LinearTariff {
                price: scenario.cost(),
            },
        },
    ]
}

impl RawMechanism {
    fn resolve(&self, scenario: &Scenario, index: usize) -> Result<NamedMechanism> {
        let ctx = |msg: String| Error::Validation(format!("mechanism[{index}]: {msg}"));
        let (name, mechanism) = match self {
            RawMechanism::CommittedSpend {
                name,
                q_bar,
                t_bar,
                p,
            } => {
                let m = match (q_bar, t_bar, p) {
                    (None, None, None) => Mechanism::CommittedSpend(optimal_contract(scenario)),
                    (Some(q), Some(t), Some(p)) => {
                        Mechanism::committed_spend(*q, *t, *p).map_err(|e| ctx(e.to_string()))?
                    }
                    _ => {
                        return Err(ctx(
                            "committed_spend needs all of q_bar, t_bar, p or none of them".into(),
                        ))
                    }
                };
                (name, m)
            }
            RawMechanism::Constant { name, q, t } => {
                let m = match (q, t) {
                    (None, None) => optimal_constant(scenario),
                    (Some(q), Some(t)) => {
                        Mechanism::constant_bundle(*q, *t).map_err(|e| ctx(e.to_string()))?
                    }
                    _ => return Err(ctx("constant needs both q and t or neither".into())),
                };
                (name, m)
            }
            RawMechanism::Linear { name, p, p_over_c } => {
                let price = match (p, p_over_c) {
                    (Some(p), None) => *p,
                    (None, Some(r)) => r * scenario.cost(),
                    _ => return Err(ctx("linear needs exactly one of p, p_over_c".into())),
                };
                (
                    name,
                    Mechanism::linear_tariff(price).map_err(|e| ctx(e.to_string()))?,
                )
            }
            RawMechanism::Menu { name, options } => {
                let opts = options
                    .iter()
                    .map(|o| MenuOption::new(o.q.clone(), o.t))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| ctx(e.to_string()))?;
                let m = Mechanism::finite_menu(opts).map_err(|e| ctx(e.to_string()))?;
                m.validate_for(scenario).map_err(|e| ctx(e.to_string()))?;
                (name, m)
            }
        };
        Ok(NamedMechanism {
            label: name.clone().unwrap_or_else(|| mechanism.to_string()),
            mechanism,
        })
    }
}

impl RawDistribution {
    fn resolve(&self, scenario: &Scenario) -> Result<DiscreteDistribution> {
        let dist = match self {
            RawDistribution::TwoPoint { s_lo, s_hi } => distributions::two_point(scenario, *s_lo, *s_hi)?,
            RawDistribution::DiagonalGrid { n } => distributions::diagonal_grid(scenario, *n)?,
            RawDistribution::IndependentDiscreteUniform { n } => {
                distributions::independent_discrete_uniform(scenario, *n)?
            }
            RawDistribution::Dirac => distributions::diagonal_dirac(scenario),
            RawDistribution::Literal { atoms } => {
                let support = atoms
                    .iter()
                    .map(|a| TypeVector::new(a.theta.clone()))
                    .collect::<Result<Vec<_>>>()?;
                let weights = atoms.iter().map(|a| a.w).collect();
                DiscreteDistribution::new(support, weights)?
            }
        };
        if dist.dim() != scenario.services() {
            return Err(Error::Validation(format!(
                "distribution has dimension {}, scenario has K = {}",
                dist.dim(),
                scenario.services()
            )));
        }
        if !dist.validate_in_f(scenario, 1e-9) {
            return Err(Error::Validation(format!(
                "distribution mean total demand {} differs from lambda = {}",
                dist.mean_sum(),
                scenario.mean_demand()
            )));
        }
        Ok(dist)
    }
}

impl RawConfig {
    pub fn resolve(self) -> Result<RunConfig> {
        let RawScenario {
            k,
            c,
            lambda,
            utility,
        } = self.scenario;
        let utility = UtilityFunction::from_family(utility)?;
        let scenario = Scenario::new(k, c, lambda, utility)?;

        let mechanisms = if self.mechanism.is_empty() {
            default_mechanisms(&scenario)
        } else {
            self.mechanism
                .iter()
                .enumerate()
                .map(|(i, m)| m.resolve(&scenario, i))
                .collect::<Result<Vec<_>>>()?
        };

        let levels = self.adversary.levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
        if levels.is_empty() || levels.iter().any(|&n| n < 2) {
            return Err(Error::Validation(
                "adversary.levels must list resolutions of at least 2".into(),
            ));
        }
        if let Some(n) = self.adversary.points_per_dim {
            if n < 2 {
                return Err(Error::Validation(
                    "adversary.points_per_dim must be at least 2".into(),
                ));
            }
        }
        let adversary = AdversaryConfig {
            levels,
            points_per_dim: self.adversary.points_per_dim,
            cap: self.adversary.cap.unwrap_or(DEFAULT_GRID_CAP),
        };

        let defaults = VerifyConfig::default();
        let verify = VerifyConfig {
            n_menus: self.verify.n_menus.unwrap_or(defaults.n_menus),
            seed: self.verify.seed.unwrap_or(defaults.seed),
            cases: self.verify.cases.unwrap_or(defaults.cases),
            menu_grid: self.verify.menu_grid.unwrap_or(defaults.menu_grid),
        };
        if verify.n_menus == 0 || verify.cases == 0 {
            return Err(Error::Validation(
                "verify.n_menus and verify.cases must be positive".into(),
            ));
        }
        if verify.menu_grid < 2 {
            return Err(Error::Validation("verify.menu_grid must be at least 2".into()));
        }

        let format = match &self.output.format {
            Some(f) => f.parse()?,
            None => OutputFormat::Table,
        };
        let distribution = self
            .distribution
            .as_ref()
            .map(|d| d.resolve(&scenario))
            .transpose()?;

        Ok(RunConfig {
            scenario,
            mechanisms,
            adversary,
            verify,
            format,
            out: self.output.path,
            distribution,
        })
    }
}
