//! Invariant and oracle checks on a single instance.

use std::fmt;

use crate::costs::build_cost_table_in_mode;
use crate::erlang::{erlang_tail, min_tail, sum_min_tail};
use crate::heuristics::{osi_policy, osia_estimates, OsiaConfig};
use crate::instance::Instance;
use crate::mdp::{closest_first_policy, evaluate_policy, policy_iteration, StateSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Runs the invariant suite; exact checks are skipped above `state_cap` states.
pub fn validate_instance(inst: &Instance, cfg: &OsiaConfig, state_cap: usize) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let n = inst.node_count();
    let g = inst.graph();

    rep.push("graph connected", g.is_connected(), format!("{n} nodes, {} edges", g.edges().len()));

    let dist: Vec<Vec<usize>> = (0..n)
        .map(|s| g.distances_from(s).into_iter().map(|d| d.unwrap_or(usize::MAX)).collect())
        .collect();
    let symmetric = (0..n).all(|a| (0..n).all(|b| dist[a][b] == dist[b][a]));
    rep.push("phase symmetry", symmetric, "phases(i,j) = phases(j,i)");
    let triangle = (0..n).all(|a| {
        (0..n).all(|b| (0..n).all(|c| dist[a][c] <= dist[a][b].saturating_add(dist[b][c])))
    });
    rep.push("triangle inequality", triangle, "phases(i,k) ≤ phases(i,j) + phases(j,k)");
    let routes_shortest = (0..inst.station_count())
        .all(|i| (0..n).all(|j| inst.phases(i, j) as usize == dist[inst.stations()[i]][j]));
    rep.push("routes are shortest", routes_shortest, "route phases equal BFS distances");

    let load = inst.total_lambda() / (inst.total_trucks() as f64 * inst.mu());
    rep.push(
        "load identity",
        (load - inst.rho()).abs() <= 1e-12 * inst.rho().max(1.0),
        format!("Σλ/(ΣC·μ) = {load}, rho = {}", inst.rho()),
    );

    let t = inst.t_star();
    let tails_ok = (1..=6).all(|w| {
        let a = erlang_tail(w, t).unwrap();
        let b = erlang_tail(w + 1, t).unwrap();
        let c = erlang_tail(w, t * 1.5).unwrap();
        a <= b && c <= a && (0.0..=1.0).contains(&a)
    }) && (1..=4).all(|w| {
        sum_min_tail(w, 2, 3, t).unwrap() >= min_tail(2, 3, t).unwrap() - 1e-15
    });
    rep.push("tail monotonicity", tails_ok, "tails nonincreasing in t, nondecreasing in phases");

    let uc = build_cost_table_in_mode(inst, false);
    let co = build_cost_table_in_mode(inst, true);
    let mut in_range = true;
    let mut dominated = true;
    for j in 0..n {
        for pair in uc.pairs() {
            let (a, b) = (uc.get(pair, j), co.get(pair, j));
            in_range &= (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b);
            dominated &= b >= a;
        }
    }
    rep.push("costs are probabilities", in_range, "every entry in [0, 1]");
    rep.push("correlation dominance", dominated, "correlated ≥ uncorrelated for every entry");

    let costs = if inst.correlated() { &co } else { &uc };
    let states = StateSpace::size_of(inst.capacities());
    if states <= state_cap {
        let cf = closest_first_policy(inst);
        match evaluate_policy(inst, costs, &cf) {
            Ok(cf_eval) => {
                rep.push(
                    "CF residual",
                    cf_eval.residual <= 1e-9 * cf_eval.tau,
                    format!("max residual {:e}", cf_eval.residual),
                );
                match policy_iteration(inst, costs, &cf) {
                    Ok(opt) => {
                        let mono = opt.g_history.windows(2).all(|w| w[1] <= w[0] + 1e-12);
                        rep.push("PI monotone", mono, format!("{} iterations", opt.iterations));
                        rep.push(
                            "OPT ≤ CF",
                            opt.evaluation.g <= cf_eval.g + 1e-12,
                            format!("g_opt = {}, g_cf = {}", opt.evaluation.g, cf_eval.g),
                        );
                    }
                    Err(e) => rep.push("policy iteration", false, e.to_string()),
                }
                match osi_policy(inst, costs, &cf_eval).and_then(|p| evaluate_policy(inst, costs, &p)) {
                    Ok(osi) => rep.push(
                        "OSI ≤ CF",
                        osi.g <= cf_eval.g + 1e-12,
                        format!("g_osi = {}, g_cf = {}", osi.g, cf_eval.g),
                    ),
                    Err(e) => rep.push("OSI", false, e.to_string()),
                }
            }
            Err(e) => rep.push("CF evaluation", false, e.to_string()),
        }
    } else {
        rep.push("exact checks", true, format!("skipped: {states} states exceed cap {state_cap}"));
    }

    match osia_estimates(inst, costs, cfg) {
        Ok(est) => {
            let ok = est.iter().all(|e| {
                e.iterate.busy[0] == 0.0
                    && e.iterate.busy.iter().all(|p| (0.0..=1.0).contains(p))
                    && e.iterate.demand.iter().all(|&d| d >= 0.0)
            });
            let damped = est.iter().filter(|e| e.damped).count();
            rep.push("OSIA iterates in range", ok, format!("{} states, {damped} damped", est.len()));
        }
        Err(e) => rep.push("OSIA", false, e.to_string()),
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_grid_graph;
    use crate::instance::generate_instance;

    #[test]
    fn generated_instance_passes() {
        let g = generate_grid_graph(4, 0.5, 1).unwrap();
        let inst = generate_instance(&g, 3, 0.1, 0.6, true, 1).unwrap();
        let rep = validate_instance(&inst, &OsiaConfig::default(), 1 << 14);
        assert!(rep.passed(), "{rep}");
        assert!(rep.to_string().contains("PASS correlation dominance"));
    }

    #[test]
    fn cap_skips_exact_checks() {
        let g = generate_grid_graph(3, 0.5, 1).unwrap();
        let inst = generate_instance(&g, 3, 0.1, 0.6, false, 1).unwrap();
        let rep = validate_instance(&inst, &OsiaConfig::default(), 2);
        assert!(rep.checks.iter().any(|c| c.detail.starts_with("skipped")));
    }
}
