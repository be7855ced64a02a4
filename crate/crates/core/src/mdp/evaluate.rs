use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::{Policy, StateSpace};
use crate::costs::CostTable;
use crate::error::{invalid, Error, Result};
use crate::instance::Instance;
use crate::report::fmt_sig;

/// Largest state space solved by dense LU; larger ones use relative value iteration.
pub const DENSE_STATE_LIMIT: usize = 4096;

const RVI_TOLERANCE: f64 = 1e-12;
const RVI_MAX_SWEEPS: usize = 1_000_000;
const RESIDUAL_LIMIT: f64 = 1e-9;

/// Long-run cost rate and relative costs of a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Late arrivals per unit time.
    pub g: f64,
    /// Relative cost per state index, zero at the all-idle state.
    pub h: Vec<f64>,
    /// Uniformization rate `Σλ + μΣC`.
    pub tau: f64,
    /// Sweeps used by the iterative solver; 1 for a direct solve.
    pub solver_iterations: usize,
    /// Largest absolute Bellman residual of `(g, h)`.
    pub residual: f64,
}

/// One row of the uniformized chain: outgoing rates (self-loops included)
/// and the expected immediate cost rate.
struct Row {
    targets: Vec<(usize, f64)>,
    cost: f64,
}

fn rows(inst: &Instance, costs: &CostTable, pol: &Policy) -> Result<Vec<Row>> {
    let space: &StateSpace = pol.space();
    if space.capacities() != inst.capacities() {
        return Err(invalid("policy state space does not match the instance"));
    }
    if pol.locations() != inst.node_count() || costs.locations() != inst.node_count() {
        return Err(invalid("policy or cost table covers a different number of locations"));
    }
    let mu = inst.mu();
    let lambdas = inst.lambdas();
    let mut out = Vec::with_capacity(space.size());
    for s in 0..space.size() {
        let f = space.state(s);
        let mut targets = Vec::with_capacity(f.len() + lambdas.len() + 1);
        let mut cost = 0.0;
        let mut idle_rate = 0.0;
        for (i, (&fi, &ci)) in f.iter().zip(space.capacities()).enumerate() {
            if fi < ci {
                targets.push((s + space.stride(i), mu * (ci - fi) as f64));
            }
            idle_rate += mu * fi as f64;
        }
        if idle_rate > 0.0 {
            targets.push((s, idle_rate));
        }
        for (j, &lj) in lambdas.iter().enumerate() {
            if lj == 0.0 {
                continue;
            }
            let a = pol.get(s, j);
            targets.push((space.after(s, a), lj));
            cost += lj * costs.get(a, j);
        }
        out.push(Row { targets, cost });
    }
    Ok(out)
}

fn residual(rows: &[Row], tau: f64, g: f64, h: &[f64]) -> f64 {
    rows.iter()
        .enumerate()
        .map(|(s, row)| {
            let flow: f64 = row.targets.iter().map(|&(t, r)| r * h[t]).sum();
            (tau * h[s] + g - flow - row.cost).abs()
        })
        .fold(0.0, f64::max)
}

/// Solves the average-cost equations of a fixed policy.
///
/// `τ h(f) + g = Σ_j λ_j c(π(f,j), j) + Σ_{f'} q(f, f') h(f')` over the
/// uniformized chain, with `h` pinned to zero at the all-idle state.
pub fn evaluate_policy(inst: &Instance, costs: &CostTable, pol: &Policy) -> Result<Evaluation> {
    let rows = rows(inst, costs, pol)?;
    let tau = inst.tau();
    let reference = pol.space().reference();
    let (g, h, sweeps) = if rows.len() <= DENSE_STATE_LIMIT {
        let (g, h) = solve_dense(&rows, tau, reference)?;
        (g, h, 1)
    } else {
        solve_iterative(&rows, tau, reference)?
    };
    let res = residual(&rows, tau, g, &h);
    if !(res <= RESIDUAL_LIMIT * tau) {
        return Err(Error::Solver(format!(
            "Bellman residual {res:e} exceeds {:e}",
            RESIDUAL_LIMIT * tau
        )));
    }
    Ok(Evaluation {
        g,
        h,
        tau,
        solver_iterations: sweeps,
        residual: res,
    })
}

fn solve_dense(rows: &[Row], tau: f64, reference: usize) -> Result<(f64, Vec<f64>)> {
    let n = rows.len();
    // column `reference` carries g, since h(reference) = 0
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (s, row) in rows.iter().enumerate() {
        if s != reference {
            a[(s, s)] += tau;
        }
        for &(t, r) in &row.targets {
            if t != reference {
                a[(s, t)] -= r;
            }
        }
        a[(s, reference)] = 1.0;
        b[s] = row.cost;
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Solver("singular evaluation system".into()))?;
    let g = x[reference];
    let mut h: Vec<f64> = x.iter().copied().collect();
    h[reference] = 0.0;
    Ok((g, h))
}

fn solve_iterative(rows: &[Row], tau: f64, reference: usize) -> Result<(f64, Vec<f64>, usize)> {
    let n = rows.len();
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    for sweep in 1..=RVI_MAX_SWEEPS {
        for (s, row) in rows.iter().enumerate() {
            let flow: f64 = row.targets.iter().map(|&(t, r)| r * h[t]).sum();
            next[s] = (row.cost + flow) / tau;
        }
        let shift = next[reference];
        let mut change: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for s in 0..n {
            let v = next[s] - shift;
            change = change.max((v - h[s]).abs());
            scale = scale.max(v.abs());
            h[s] = v;
        }
        if change <= RVI_TOLERANCE * scale {
            return Ok((shift * tau, h, sweep));
        }
    }
    Err(Error::NonConvergence {
        what: "relative value iteration",
        iterations: RVI_MAX_SWEEPS,
    })
}

/// Fraction of late arrivals, `g / Σλ`.
pub fn flar(eval: &Evaluation, inst: &Instance) -> Result<f64> {
    let total = inst.total_lambda();
    if !(total > 0.0) {
        return Err(invalid("total arrival rate is zero"));
    }
    Ok(eval.g / total)
}

/// Writes the `g, flar, tau, iteration_count` summary of an evaluation.
pub fn write_evaluation_csv<W: Write>(
    out: W,
    eval: &Evaluation,
    flar: f64,
    iteration_count: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["g", "flar", "tau", "iteration_count"])?;
    w.write_record([
        fmt_sig(eval.g),
        fmt_sig(flar),
        fmt_sig(eval.tau),
        iteration_count.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::build_cost_table;
    use crate::graph::generate_grid_graph;
    use crate::instance::generate_instance;
    use crate::mdp::closest_first_policy;

    fn inst(stations: usize) -> Instance {
        let g = generate_grid_graph(3, 0.5, 4).unwrap();
        generate_instance(&g, stations, 0.3, 0.6, true, 8).unwrap()
    }

    #[test]
    fn zero_costs_give_zero_everything() {
        let inst = inst(3);
        let pol = closest_first_policy(&inst);
        let e = evaluate_policy(&inst, &CostTable::constant(3, 9, 0.0), &pol).unwrap();
        assert_eq!(e.g, 0.0);
        assert!(e.h.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn unit_costs_make_every_arrival_late() {
        let inst = inst(3);
        let pol = closest_first_policy(&inst);
        let e = evaluate_policy(&inst, &CostTable::constant(3, 9, 1.0), &pol).unwrap();
        assert!((e.g - inst.total_lambda()).abs() < 1e-12);
        assert!((flar(&e, &inst).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_and_reference() {
        let inst = inst(3);
        let pol = closest_first_policy(&inst);
        let e = evaluate_policy(&inst, &build_cost_table(&inst), &pol).unwrap();
        assert!((e.tau - (inst.total_lambda() + 3.0)).abs() < 1e-15);
        assert_eq!(e.h[7], 0.0);
        assert!(e.residual <= 1e-9 * e.tau);
    }

    #[test]
    fn iterative_solver_matches_dense() {
        let inst = inst(4);
        let costs = build_cost_table(&inst);
        let pol = closest_first_policy(&inst);
        let r = rows(&inst, &costs, &pol).unwrap();
        let (g1, h1) = solve_dense(&r, inst.tau(), 15).unwrap();
        let (g2, h2, sweeps) = solve_iterative(&r, inst.tau(), 15).unwrap();
        assert!(sweeps > 1);
        assert!((g1 - g2).abs() <= 1e-10 * g1.abs().max(1e-12));
        for (a, b) in h1.iter().zip(&h2) {
            assert!((a - b).abs() <= 1e-9, "{a} {b}");
        }
    }
}
