//! Command implementations behind the `rcp` binary.
//!
//! Every command renders its whole report into a `String`; the binary only
//! decides where it goes. Reals are printed with [`fmt_sig`].

use crate::config::{NamedMechanism, OutputFormat, RunConfig};
use crate::distributions::{lattice, Scenario, TypeVector};
use crate::error::{Error, Result};
use crate::mechanisms::{buyer_response_committed, Mechanism};
use crate::numeric::fmt_sig;
use crate::robust::{
    analytic_report, guarantee_value, optimal_contract, optimal_quantity, refine, worst_case_both,
    worst_case_profit, Method, ProfitReport,
};
use crate::verify::run_suite;

/// Scenario used when no `--config` is given.
pub const DEFAULT_CONFIG: &str = r#"
[scenario]
K = 2
c = 1.0
lambda = 1.0
utility = { family = "scaled_power", a = 2.0, alpha = 0.5 }
"#;

/// Exit code for a verification failure.
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub exit_code: i32,
}

impl Output {
    fn ok(text: String) -> Self {
        Self { text, exit_code: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Cost,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "c" => Ok(SweepParam::Cost),
            other => Err(Error::Validation(format!(
                "sweep parameter must be lambda or c, got {other:?}"
            ))),
        }
    }
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Cost => "c",
        }
    }
}

/// Parses a comma-separated list of reals such as `0.25,0.5`.
pub fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("{what}: cannot parse {s:?} as a number")))
        })
        .collect()
}

pub fn parse_theta(text: &str, scenario: &Scenario) -> Result<TypeVector> {
    let comps = parse_list(text, "--theta")?;
    if comps.len() != scenario.services() {
        return Err(Error::Validation(format!(
            "--theta has {} components but K = {}",
            comps.len(),
            scenario.services()
        )));
    }
    TypeVector::new(comps)
}

/// Renders rows as CSV (with header) or as a space-aligned table.
fn render(format: OutputFormat, header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.write_record(row).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
            String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv: {e}")))
        }
        OutputFormat::Table => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
            for row in rows {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.len());
                }
            }
            let line = |cells: Vec<&str>| {
                let padded: Vec<String> = cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, &w)| format!("{c:<w$}"))
                    .collect();
                padded.join("  ").trim_end().to_string()
            };
            let mut out = vec![line(header.to_vec())];
            for row in rows {
                out.push(line(row.iter().map(String::as_str).collect()));
            }
            Ok(out.join("\n") + "\n")
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

fn scenario_cells(s: &Scenario) -> Vec<String> {
    vec![
        s.services().to_string(),
        fmt_sig(s.cost()),
        fmt_sig(s.mean_demand()),
        fmt_sig(s.utility().scale()),
        fmt_sig(s.utility().exponent()),
    ]
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Output> {
    let s = &cfg.scenario;
    let c = optimal_contract(s);
    let values = [
        c.commit_quantity(),
        c.commit_payment(),
        c.price(),
        guarantee_value(s),
        optimal_quantity(s),
    ];
    let text = match cfg.format {
        OutputFormat::Table => format!(
            "q_bar={} t_bar={} p={} guarantee={} q_star={}\n",
            fmt_sig(values[0]),
            fmt_sig(values[1]),
            fmt_sig(values[2]),
            fmt_sig(values[3]),
            fmt_sig(values[4])
        ),
        OutputFormat::Csv => {
            let mut row = scenario_cells(s);
            row.extend(values.iter().map(|&v| fmt_sig(v)));
            render(
                OutputFormat::Csv,
                &[
                    "K",
                    "c",
                    "lambda",
                    "a",
                    "alpha",
                    "q_bar",
                    "t_bar",
                    "p",
                    "guarantee",
                    "q_star",
                ],
                &[row],
            )?
        }
    };
    Ok(Output::ok(text))
}

/// Contract answered by `respond`: the first configured committed spend
/// mechanism, else the optimal one.
fn respond_contract(cfg: &RunConfig) -> crate::mechanisms::CommittedSpendContract {
    cfg.mechanisms
        .iter()
        .find_map(|m| match &m.mechanism {
            Mechanism::CommittedSpend(c) => Some(*c),
            _ => None,
        })
        .unwrap_or_else(|| optimal_contract(&cfg.scenario))
}

pub fn cmd_respond(cfg: &RunConfig, theta: &str) -> Result<Output> {
    let theta = parse_theta(theta, &cfg.scenario)?;
    let contract = respond_contract(cfg);
    let r = buyer_response_committed(&contract, &theta, cfg.scenario.utility())?;
    let alloc = r.allocation.iter().map(|&q| fmt_sig(q)).collect::<Vec<_>>();
    let mu = r.shadow_price.map(fmt_sig).unwrap_or_else(|| "-".into());
    let text = match cfg.format {
        OutputFormat::Table => format!(
            "allocation=({}) transfer={} mu={} floor_binding={}\n",
            alloc.join(","),
            fmt_sig(r.transfer),
            mu,
            r.floor_binding
        ),
        OutputFormat::Csv => render(
            OutputFormat::Csv,
            &["theta", "allocation", "transfer", "mu", "floor_binding"],
            &[vec![
                theta
                    .components()
                    .iter()
                    .map(|&x| fmt_sig(x))
                    .collect::<Vec<_>>()
                    .join(";"),
                alloc.join(";"),
                fmt_sig(r.transfer),
                mu,
                r.floor_binding.to_string(),
            ]],
        )?,
    };
    Ok(Output::ok(text))
}

const REPORT_HEADER: [&str; 12] = [
    "mechanism",
    "K",
    "c",
    "lambda",
    "a",
    "alpha",
    "method",
    "grid",
    "guarantee",
    "refinement_delta",
    "worst_support",
    "worst_weights",
];

fn report_row(label: &str, s: &Scenario, r: &ProfitReport) -> Vec<String> {
    let mut row = vec![label.to_string()];
    row.extend(scenario_cells(s));
    row.push(r.method.to_string());
    row.push(r.grid_label());
    row.push(fmt_sig(r.guarantee));
    row.push(r.refinement_delta.map(fmt_sig).unwrap_or_else(|| "-".into()));
    row.push(r.support_string());
    row.push(r.weights_string());
    row
}

/// Worst-case reports for one mechanism: analytic (when available), then
/// both grid methods at every refinement level, or on the fixed product grid
/// when `adversary.points_per_dim` is set.
fn mechanism_reports(cfg: &RunConfig, m: &NamedMechanism) -> Result<Vec<ProfitReport>> {
    let s = &cfg.scenario;
    let mut out: Vec<ProfitReport> = analytic_report(&m.mechanism, s).into_iter().collect();
    match cfg.adversary.points_per_dim {
        Some(n) => {
            let grid = lattice(s.services(), n, cfg.adversary.cap)?;
            let (two, lp) = worst_case_both(&m.mechanism, s, &grid)?;
            out.push(two);
            out.push(lp);
        }
        None => {
            for method in [Method::TwoPointSearch, Method::GridLp] {
                out.extend(refine(
                    &m.mechanism,
                    s,
                    &cfg.adversary.levels,
                    cfg.adversary.cap,
                    method,
                )?);
            }
        }
    }
    Ok(out)
}

pub fn cmd_worst_case(cfg: &RunConfig) -> Result<Output> {
    let mut rows = Vec::new();
    for m in &cfg.mechanisms {
        for r in mechanism_reports(cfg, m)? {
            rows.push(report_row(&m.label, &cfg.scenario, &r));
        }
    }
    Ok(Output::ok(render(cfg.format, &REPORT_HEADER, &rows)?))
}

/// Grid used by `compare`: the finest refinement level or the fixed lattice.
fn finest_grid(cfg: &RunConfig) -> Result<(Vec<TypeVector>, String)> {
    let s = &cfg.scenario;
    match cfg.adversary.points_per_dim {
        Some(n) => Ok((
            lattice(s.services(), n, cfg.adversary.cap)?,
            format!("{n}^{}", s.services()),
        )),
        None => {
            let n = *cfg
                .adversary
                .levels
                .iter()
                .max()
                .expect("levels validated nonempty");
            Ok((
                crate::robust::sum_axis_grid(s, n, cfg.adversary.cap)?,
                n.to_string(),
            ))
        }
    }
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Output> {
    let s = &cfg.scenario;
    let (grid, label) = finest_grid(cfg)?;
    let mut rows: Vec<(f64, Vec<String>)> = Vec::new();
    for m in &cfg.mechanisms {
        let (two, lp) = worst_case_both(&m.mechanism, s, &grid)?;
        let report = match analytic_report(&m.mechanism, s) {
            Some(a) => a,
            None => worst_case_profit(&m.mechanism, s, &grid, Method::GridLp)?,
        };
        let mut row = vec![m.label.clone()];
        row.extend(scenario_cells(s));
        row.push(report.method.to_string());
        row.push(label.clone());
        row.push(fmt_sig(report.guarantee));
        row.push(fmt_sig(two.guarantee));
        row.push(fmt_sig(lp.guarantee));
        row.push(report.support_string());
        rows.push((report.guarantee, row));
    }
    // ties keep config order; values within 1e-12 count as ties
    rows.sort_by(|a, b| {
        let ka = (a.0 / 1e-12).round();
        let kb = (b.0 / 1e-12).round();
        kb.total_cmp(&ka)
    });
    let header = [
        "mechanism",
        "K",
        "c",
        "lambda",
        "a",
        "alpha",
        "method",
        "grid",
        "guarantee",
        "two_point",
        "grid_lp",
        "worst_support",
    ];
    let rows: Vec<Vec<String>> = rows.into_iter().map(|(_, r)| r).collect();
    Ok(Output::ok(render(cfg.format, &header, &rows)?))
}

pub fn cmd_sweep(cfg: &RunConfig, param: SweepParam, values: &[f64]) -> Result<Output> {
    if values.is_empty() {
        return Err(Error::Validation("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let s = match param {
            SweepParam::Lambda => cfg.scenario.with_mean_demand(v)?,
            SweepParam::Cost => cfg.scenario.with_cost(v)?,
        };
        let c = optimal_contract(&s);
        let mut row = vec![param.name().to_string(), fmt_sig(v)];
        row.extend(scenario_cells(&s));
        row.extend(
            [
                c.commit_quantity(),
                c.commit_payment(),
                c.price(),
                optimal_quantity(&s),
                guarantee_value(&s),
            ]
            .iter()
            .map(|&x| fmt_sig(x)),
        );
        rows.push(row);
    }
    let header = [
        "param",
        "value",
        "K",
        "c",
        "lambda",
        "a",
        "alpha",
        "q_bar",
        "t_bar",
        "p",
        "q_star",
        "guarantee",
    ];
    Ok(Output::ok(render(cfg.format, &header, &rows)?))
}

/// Expected profit of each mechanism under the configured `[distribution]`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Output> {
    let dist = cfg
        .distribution
        .as_ref()
        .ok_or_else(|| Error::Validation("evaluate needs a [distribution] block".into()))?;
    let s = &cfg.scenario;
    let mut rows = Vec::new();
    for m in &cfg.mechanisms {
        let mut row = vec![m.label.clone()];
        row.extend(scenario_cells(s));
        row.push(fmt_sig(m.mechanism.expected_profit(dist, s)?));
        row.push(fmt_sig(guarantee_value(s)));
        rows.push(row);
    }
    let header = [
        "mechanism",
        "K",
        "c",
        "lambda",
        "a",
        "alpha",
        "expected_profit",
        "guarantee",
    ];
    Ok(Output::ok(render(cfg.format, &header, &rows)?))
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Output> {
    let report = run_suite(cfg)?;
    Ok(Output {
        text: report.render(),
        exit_code: if report.passed() { 0 } else { EXIT_VERIFY_FAILED },
    })
}
