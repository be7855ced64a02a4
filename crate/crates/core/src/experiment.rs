//! Batch comparison of CF, OPT, OSI and OSIA on random graphs.
//!
//! Graph `g` of a run with master seed `m` is generated from
//! `s = split(m, g)`: sparseness `0.4 + 0.6·u` with `u` from
//! `split(s, STREAM_SPARSENESS)`, the graph from `split(s, STREAM_GRAPH)` and
//! stations and rates from `split(s, STREAM_INSTANCE)`. Every load in the
//! run reuses the same graph, stations and rate profile.

use std::fmt;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{build_cost_table, CostTable};
use crate::error::{invalid, Error, Result};
use crate::graph::generate_grid_graph;
use crate::heuristics::{osi_policy, osia_policy, OsiaConfig};
use crate::instance::{generate_instance, Instance};
use crate::mdp::{
    closest_first_policy, evaluate_policy, flar, policy_iteration, Policy, PolicyKind, StateSpace,
};
use crate::report::{fmt_opt, fmt_sig};
use crate::seeds::{self, STREAM_GRAPH, STREAM_INSTANCE, STREAM_SPARSENESS};

pub const DEFAULT_STATE_CAP: usize = 1 << 14;
const SPARSENESS_LOW: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CF", alias = "cf")]
    Cf,
    #[serde(rename = "OPT", alias = "opt")]
    Opt,
    #[serde(rename = "OSI", alias = "osi")]
    Osi,
    #[serde(rename = "OSIA", alias = "osia")]
    Osia,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cf" => Ok(Method::Cf),
            "opt" => Ok(Method::Opt),
            "osi" => Ok(Method::Osi),
            "osia" => Ok(Method::Osia),
            _ => Err(invalid(format!("unknown method `{s}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cf => "CF",
            Method::Opt => "OPT",
            Method::Osi => "OSI",
            Method::Osia => "OSIA",
        })
    }
}

fn default_policies() -> Vec<Method> {
    vec![Method::Cf, Method::Opt, Method::Osi, Method::Osia]
}

fn default_correlated() -> Vec<bool> {
    vec![false, true]
}

fn default_state_cap() -> usize {
    DEFAULT_STATE_CAP
}

fn default_graph_count() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Grid side length.
    pub d: usize,
    /// Number of stations `I`.
    pub stations: usize,
    pub rho: Vec<f64>,
    pub gamma: f64,
    #[serde(default = "default_graph_count")]
    pub graph_count: usize,
    #[serde(default = "default_correlated")]
    pub correlated: Vec<bool>,
    #[serde(default = "default_policies")]
    pub policies: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub osia: OsiaSpec,
    /// OPT and OSI are skipped above this many states.
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsiaSpec {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for OsiaSpec {
    fn default() -> Self {
        let c = OsiaConfig::default();
        OsiaSpec {
            horizon: c.horizon,
            epsilon: c.epsilon,
            max_iterations: c.max_iterations,
        }
    }
}

impl From<OsiaSpec> for OsiaConfig {
    fn from(s: OsiaSpec) -> Self {
        OsiaConfig {
            horizon: s.horizon,
            epsilon: s.epsilon,
            max_iterations: s.max_iterations,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(invalid("spec: d must be at least 2"));
        }
        if self.stations == 0 || self.stations > self.d * self.d {
            return Err(invalid("spec: stations must lie in 1..=d²"));
        }
        if self.rho.is_empty() || self.rho.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(invalid("spec: rho must be a nonempty list of positive loads"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("spec: gamma must lie in (0, 1]"));
        }
        if self.graph_count == 0 {
            return Err(invalid("spec: graph_count must be at least 1"));
        }
        if self.correlated.is_empty() {
            return Err(invalid("spec: correlated must list at least one mode"));
        }
        if self.policies.is_empty() {
            return Err(invalid("spec: policies must not be empty"));
        }
        OsiaConfig::from(self.osia).validate()
    }

    fn wants(&self, m: Method) -> bool {
        self.policies.contains(&m)
    }
}

/// Per-policy outcome on one row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyResult {
    pub g: f64,
    pub flar: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub graph: usize,
    pub rho: f64,
    pub correlated: bool,
    pub sparseness: f64,
    pub edges: usize,
    pub states: usize,
    /// False when the state space exceeded the cap and only heuristics ran.
    pub exact: bool,
    pub cf: PolicyResult,
    pub opt: Option<PolicyResult>,
    pub osi: Option<PolicyResult>,
    pub osia: Option<PolicyResult>,
    pub opt_iterations: Option<usize>,
    /// Extra late arrivals of the uncorrelated optimum run under correlated
    /// costs, relative to the correlated optimum, in percent.
    pub penalty: Option<f64>,
}

fn pct_improvement(base: f64, g: f64) -> Option<f64> {
    (base > 0.0).then(|| (base - g) / base * 100.0)
}

impl ReportRow {
    pub fn delta(&self, m: Method) -> Option<f64> {
        let r = match m {
            Method::Cf => return None,
            Method::Opt => self.opt?,
            Method::Osi => self.osi?,
            Method::Osia => self.osia?,
        };
        pct_improvement(self.cf.g, r.g)
    }

    pub fn gap(&self, m: Method) -> Option<f64> {
        let opt = self.opt?.g;
        let r = match m {
            Method::Cf => self.cf,
            Method::Opt => return Some(0.0),
            Method::Osi => self.osi?,
            Method::Osia => self.osia?,
        };
        (opt > 0.0).then(|| (r.g - opt) / opt * 100.0)
    }

    /// Named metrics that feed the summary, in column order.
    pub fn metrics(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("flar_cf", Some(self.cf.flar)),
            ("flar_opt", self.opt.map(|r| r.flar)),
            ("flar_osi", self.osi.map(|r| r.flar)),
            ("flar_osia", self.osia.map(|r| r.flar)),
            ("delta_opt", self.delta(Method::Opt)),
            ("delta_osi", self.delta(Method::Osi)),
            ("delta_osia", self.delta(Method::Osia)),
            ("gap_osi", self.gap(Method::Osi)),
            ("gap_osia", self.gap(Method::Osia)),
            ("penalty", self.penalty),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// `graph:<id>` or `aggregate`.
    pub scope: String,
    pub rho: f64,
    pub correlated: bool,
    pub n: usize,
    /// `(name, min, mean, max)`; `None` when no row has the metric.
    pub metrics: Vec<(&'static str, Option<(f64, f64, f64)>)>,
}

impl SummaryRow {
    pub fn mean(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(n, _)| *n == name)
            .and_then(|(_, v)| v.map(|(_, m, _)| m))
    }

    pub fn max(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(n, _)| *n == name)
            .and_then(|(_, v)| v.map(|(_, _, m)| m))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn aggregate(&self, rho: f64, correlated: bool) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.scope == "aggregate" && s.rho == rho && s.correlated == correlated)
    }
}

/// The instance of graph `index` at load `rho` (uncorrelated mode).
pub fn graph_instance(spec: &ExperimentSpec, index: usize, rho: f64) -> Result<(Instance, f64)> {
    let gseed = seeds::split(spec.seed, index as u64);
    let sparseness = SPARSENESS_LOW
        + (1.0 - SPARSENESS_LOW) * seeds::unit_interval(seeds::split(gseed, STREAM_SPARSENESS));
    let graph = generate_grid_graph(spec.d, sparseness, seeds::split(gseed, STREAM_GRAPH))?;
    let inst = generate_instance(
        &graph,
        spec.stations,
        rho,
        spec.gamma,
        false,
        seeds::split(gseed, STREAM_INSTANCE),
    )?;
    Ok((inst, sparseness))
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn evaluated(inst: &Instance, costs: &CostTable, pol: &Policy, seconds: f64) -> Result<PolicyResult> {
    let e = evaluate_policy(inst, costs, pol)?;
    Ok(PolicyResult {
        g: e.g,
        flar: flar(&e, inst)?,
        seconds,
    })
}

fn run_graph(spec: &ExperimentSpec, index: usize) -> Result<Vec<ReportRow>> {
    let cfg = OsiaConfig::from(spec.osia);
    let mut rows = Vec::new();
    for &rho in &spec.rho {
        let (base, sparseness) = graph_instance(spec, index, rho)?;
        let states = StateSpace::size_of(base.capacities());
        let exact = states <= spec.state_cap;
        let mut opt_uncorrelated: Option<Policy> = None;
        for &correlated in &spec.correlated {
            let inst = base.with_correlated(correlated);
            let costs = build_cost_table(&inst);
            let ((cf_pol, cf_eval), cf_secs) = timed(|| {
                let p = closest_first_policy(&inst);
                let e = evaluate_policy(&inst, &costs, &p)?;
                Ok((p, e))
            })?;
            let cf = PolicyResult {
                g: cf_eval.g,
                flar: flar(&cf_eval, &inst)?,
                seconds: cf_secs,
            };
            let mut row = ReportRow {
                graph: index,
                rho,
                correlated,
                sparseness,
                edges: inst.graph().edges().len(),
                states,
                exact,
                cf,
                opt: None,
                osi: None,
                osia: None,
                opt_iterations: None,
                penalty: None,
            };
            if exact && spec.wants(Method::Opt) {
                let (out, secs) = timed(|| policy_iteration(&inst, &costs, &cf_pol))?;
                row.opt = Some(PolicyResult {
                    g: out.evaluation.g,
                    flar: flar(&out.evaluation, &inst)?,
                    seconds: secs,
                });
                row.opt_iterations = Some(out.iterations);
                if correlated {
                    let uc = match opt_uncorrelated.take() {
                        Some(p) => p,
                        None => {
                            let inst_uc = base.clone();
                            let costs_uc = build_cost_table(&inst_uc);
                            policy_iteration(&inst_uc, &costs_uc, &closest_first_policy(&inst_uc))?
                                .policy
                        }
                    };
                    let g_mis = evaluate_policy(&inst, &costs, &uc)?.g;
                    row.penalty = pct_improvement(out.evaluation.g, g_mis).map(|x| -x);
                    opt_uncorrelated = Some(uc);
                } else {
                    opt_uncorrelated = Some(out.policy);
                }
            }
            if exact && spec.wants(Method::Osi) {
                let (pol, secs) = timed(|| osi_policy(&inst, &costs, &cf_eval))?;
                row.osi = Some(evaluated(&inst, &costs, &pol, secs + cf_secs)?);
            }
            if spec.wants(Method::Osia) {
                let (pol, secs) = timed(|| osia_policy(&inst, &costs, &cfg))?;
                row.osia = Some(evaluated(&inst, &costs, &pol, secs)?);
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs every graph of the spec and assembles rows and summary.
///
/// Rows are ordered by graph, then load, then correlation mode, regardless
/// of completion order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let per_graph: Vec<Vec<ReportRow>> = (0..spec.graph_count)
        .into_par_iter()
        .map(|g| run_graph(spec, g))
        .collect::<Result<_>>()?;
    let rows: Vec<ReportRow> = per_graph.into_iter().flatten().collect();
    let summary = summarize(spec, &rows);
    Ok(ExperimentReport { rows, summary })
}

fn stats(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Some((min, mean.clamp(min, max), max))
}

fn summarize(spec: &ExperimentSpec, rows: &[ReportRow]) -> Vec<SummaryRow> {
    let names: Vec<&'static str> = rows
        .first()
        .map(|r| r.metrics().into_iter().map(|(n, _)| n).collect())
        .unwrap_or_default();
    let mut out = Vec::new();
    for r in rows {
        out.push(SummaryRow {
            scope: format!("graph:{}", r.graph),
            rho: r.rho,
            correlated: r.correlated,
            n: 1,
            metrics: r
                .metrics()
                .into_iter()
                .map(|(n, v)| (n, v.map(|x| (x, x, x))))
                .collect(),
        });
    }
    for &rho in &spec.rho {
        for &correlated in &spec.correlated {
            let group: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.rho == rho && r.correlated == correlated)
                .collect();
            let metrics = names
                .iter()
                .enumerate()
                .map(|(k, &name)| {
                    let vals: Vec<f64> = group.iter().filter_map(|r| r.metrics()[k].1).collect();
                    (name, stats(&vals))
                })
                .collect();
            out.push(SummaryRow {
                scope: "aggregate".into(),
                rho,
                correlated,
                n: group.len(),
                metrics,
            });
        }
    }
    out
}

fn opt_cells(r: Option<PolicyResult>) -> [String; 3] {
    match r {
        Some(r) => [fmt_sig(r.g), fmt_sig(r.flar), fmt_sig(r.seconds)],
        None => Default::default(),
    }
}

/// Writes one line per (graph, load, mode), timings included.
pub fn write_rows_csv<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "graph", "rho", "correlated", "sparseness", "edges", "states", "exact",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for p in ["cf", "opt", "osi", "osia"] {
        header.extend([format!("g_{p}"), format!("flar_{p}"), format!("seconds_{p}")]);
    }
    header.extend(
        [
            "delta_opt", "delta_osi", "delta_osia", "gap_osi", "gap_osia", "penalty",
            "opt_iterations",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.graph.to_string(),
            fmt_sig(r.rho),
            r.correlated.to_string(),
            fmt_sig(r.sparseness),
            r.edges.to_string(),
            r.states.to_string(),
            r.exact.to_string(),
        ];
        rec.extend(opt_cells(Some(r.cf)));
        rec.extend(opt_cells(r.opt));
        rec.extend(opt_cells(r.osi));
        rec.extend(opt_cells(r.osia));
        rec.extend([
            fmt_opt(r.delta(Method::Opt)),
            fmt_opt(r.delta(Method::Osi)),
            fmt_opt(r.delta(Method::Osia)),
            fmt_opt(r.gap(Method::Osi)),
            fmt_opt(r.gap(Method::Osia)),
            fmt_opt(r.penalty),
            r.opt_iterations.map(|n| n.to_string()).unwrap_or_default(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `scope, rho, correlated, n` and `<metric>_min/_mean/_max` columns.
pub fn write_summary_csv<W: Write>(out: W, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["scope", "rho", "correlated", "n"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let Some(first) = summary.first() {
        for (name, _) in &first.metrics {
            header.extend([format!("{name}_min"), format!("{name}_mean"), format!("{name}_max")]);
        }
    }
    w.write_record(&header)?;
    for s in summary {
        let mut rec = vec![
            s.scope.clone(),
            fmt_sig(s.rho),
            s.correlated.to_string(),
            s.n.to_string(),
        ];
        for (_, v) in &s.metrics {
            match v {
                Some((lo, mean, hi)) => rec.extend([fmt_sig(*lo), fmt_sig(*mean), fmt_sig(*hi)]),
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows.csv` and `summary.csv` into `dir`.
pub fn write_report(dir: impl AsRef<FsPath>, report: &ExperimentReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_rows_csv(std::fs::File::create(dir.join("rows.csv"))?, &report.rows)?;
    write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?, &report.summary)?;
    Ok(())
}

/// Convenience: the kind tag for a method.
pub fn kind_of(m: Method) -> PolicyKind {
    match m {
        Method::Cf => PolicyKind::Cf,
        Method::Opt => PolicyKind::Opt,
        Method::Osi => PolicyKind::Osi,
        Method::Osia => PolicyKind::Osia,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ExperimentSpec {
        ExperimentSpec::from_json(r#"{"d": 3, "stations": 3, "rho": [0.1], "gamma": 0.6, "graph_count": 2, "seed": 4}"#)
            .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let s = spec();
        assert_eq!(s.policies, default_policies());
        assert_eq!(s.correlated, vec![false, true]);
        assert_eq!(s.state_cap, DEFAULT_STATE_CAP);
        assert_eq!(s.osia.horizon, 10.0);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentSpec::from_json(r#"{"d": 3, "stations": 3, "rho": [0.1], "gamma": 0.6, "bogus": 1}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"d": 3, "stations": 30, "rho": [0.1], "gamma": 0.6}"#).is_err());
    }

    #[test]
    fn cf_only_leaves_deltas_empty() {
        let mut s = spec();
        s.graph_count = 1;
        s.policies = vec![Method::Cf];
        s.correlated = vec![false];
        let rep = run_experiment(&s).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.rows[0].delta(Method::Opt).is_none());
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &rep.rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,,,,,"));
    }

    #[test]
    fn full_run_invariants() {
        let rep = run_experiment(&spec()).unwrap();
        assert_eq!(rep.rows.len(), 4);
        for r in &rep.rows {
            assert!(r.delta(Method::Opt).unwrap() >= -1e-9);
            assert!(r.delta(Method::Osi).unwrap() >= -1e-9);
            assert!(r.gap(Method::Osia).unwrap() >= -1e-9);
            if r.correlated {
                assert!(r.penalty.unwrap() >= -1e-9);
            } else {
                assert!(r.penalty.is_none());
            }
        }
        for s in &rep.summary {
            for (_, v) in &s.metrics {
                if let Some((lo, mean, hi)) = v {
                    assert!(lo <= mean && mean <= hi);
                }
            }
        }
        assert_eq!(rep.summary.len(), 4 + 2);
    }

    #[test]
    fn state_cap_skips_exact_methods() {
        let mut s = spec();
        s.state_cap = 4;
        let rep = run_experiment(&s).unwrap();
        for r in &rep.rows {
            assert!(!r.exact && r.opt.is_none() && r.osi.is_none() && r.osia.is_some());
        }
    }

    #[test]
    fn graphs_are_reproducible_in_isolation() {
        let s = spec();
        let (a, _) = graph_instance(&s, 1, 0.1).unwrap();
        let (b, _) = graph_instance(&s, 1, 0.4).unwrap();
        assert_eq!(a.graph(), b.graph());
        assert_eq!(a.stations(), b.stations());
    }
}
