//! Queueing approximation of closest-first relative costs.
//!
//! Every truck is treated as its own station, modelled as an M/M/1/1 loss
//! system fed by the requests closest-first would send it. Busy probabilities
//! and request rates are iterated to a fixed point, and the cost of the next
//! `T` time units is estimated from the resulting dispatch-pair probabilities.

use std::io::Write;

use rayon::prelude::*;

use crate::costs::{pair_count, CostTable, Dispatch, OUTSIDE};
use crate::error::{invalid, Error, Result};
use crate::instance::Instance;
use crate::mdp::{closest_first_policy, improve, Policy, PolicyKind, StateSpace};
use crate::report::fmt_sig;

/// Sweeps after which successive request-rate vectors are averaged.
pub const DAMPING_AFTER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsiaConfig {
    /// Horizon `T` after which the system is assumed stationary.
    pub horizon: f64,
    /// Relative tolerance on the request rates.
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for OsiaConfig {
    fn default() -> Self {
        OsiaConfig {
            horizon: 10.0,
            epsilon: 1e-6,
            max_iterations: 10_000,
        }
    }
}

impl OsiaConfig {
    /// Defaults scaled to the instance's service rate: `T = 10/μ`.
    pub fn for_instance(inst: &Instance) -> Self {
        OsiaConfig {
            horizon: 10.0 / inst.mu(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid(format!("horizon T must be positive, got {}", self.horizon)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.1) {
            return Err(invalid(format!("epsilon must lie in (0, 0.1], got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Relative costs `(h0, h1)` of an M/M/1/1 loss queue with request rate `d`,
/// for a busy (`h0`) and an idle (`h1`) server, one unit per rejection.
///
/// Solves `h1 = h0 − B` together with the normalization
/// `h0/(1+ρ) + ρ h1/(1+ρ) = 0`, where `ρ = d/μ` and `B = ρ/(1+ρ)`.
pub fn mm11_relative_costs(d: f64, mu: f64) -> Result<(f64, f64)> {
    if !(d > 0.0) || !(mu > 0.0) || !d.is_finite() || !mu.is_finite() {
        return Err(invalid(format!("rates must be positive, got D = {d}, mu = {mu}")));
    }
    let rho = d / mu;
    let denom = (1.0 + rho) * (1.0 + rho);
    Ok((rho * rho / denom, -rho / denom))
}

fn blocking(rho: f64) -> f64 {
    rho / (1.0 + rho)
}

/// Final state of the fixed-point iteration, over single-truck pseudo-stations.
///
/// Pseudo-station labels are 1-based with 0 for outside; pseudo-stations are
/// ordered by real station, then truck.
#[derive(Debug, Clone, PartialEq)]
pub struct OsiaIterate {
    /// Request rate per unordered pair, by [`Dispatch::index`].
    pub pair_demand: Vec<f64>,
    /// Request rate per pseudo-station (0-based).
    pub demand: Vec<f64>,
    /// Busy probability per label; entry 0 (outside) is pinned to 0.
    pub busy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsiaEstimate {
    /// `J(f, T)`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub damped: bool,
    pub iterate: OsiaIterate,
}

/// The instance seen as single-truck stations.
struct Split {
    trucks: usize,
    /// Real station (0-based) of each pseudo-station.
    station_of: Vec<usize>,
    /// Per location, pseudo-stations in dispatch order.
    order: Vec<Vec<usize>>,
    lambdas: Vec<f64>,
    /// Per location, cost by pseudo pair index.
    costs: Vec<Vec<f64>>,
    mu: f64,
}

impl Split {
    fn new(inst: &Instance, costs: &CostTable) -> Self {
        let mut station_of = Vec::new();
        for (i, &c) in inst.capacities().iter().enumerate() {
            station_of.extend(std::iter::repeat(i).take(c as usize));
        }
        let trucks = station_of.len();
        let order = (0..inst.node_count())
            .map(|j| {
                let mut o: Vec<usize> = (0..trucks).collect();
                o.sort_by_key(|&k| (inst.phases(station_of[k], j), k));
                o
            })
            .collect();
        let real = |label: usize| {
            if label == OUTSIDE {
                OUTSIDE
            } else {
                station_of[label - 1] + 1
            }
        };
        let pseudo_costs = (0..inst.node_count())
            .map(|j| {
                (0..pair_count(trucks))
                    .map(|p| {
                        let d = Dispatch::from_index(p);
                        costs.get(Dispatch::new(real(d.lo), real(d.hi)), j)
                    })
                    .collect()
            })
            .collect();
        Split {
            trucks,
            station_of,
            order,
            lambdas: inst.lambdas().to_vec(),
            costs: pseudo_costs,
            mu: inst.mu(),
        }
    }

    /// Idle flag per pseudo-station: the first `f_i` trucks of station `i` are idle.
    fn idle(&self, f: &[u32]) -> Vec<bool> {
        let mut seen = vec![0u32; f.len()];
        self.station_of
            .iter()
            .map(|&i| {
                seen[i] += 1;
                seen[i] <= f[i]
            })
            .collect()
    }

    /// Writes `p^j` for every pair into `out`, by pair index.
    ///
    /// `busy` is indexed by label (entry 0 is the outside pseudo-station).
    fn pair_probabilities(&self, j: usize, busy: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let order = &self.order[j];
        let k = self.trucks;
        // inside pairs: the lower-ranked member at position a, the other at b > a;
        // the pair is requested when every truck ranked below b except `a` is busy
        let mut below = 1.0;
        for a in 0..k {
            let mut run = below;
            for b in (a + 1)..k {
                let pair = Dispatch::new(order[a] + 1, order[b] + 1);
                out[pair.index()] = run;
                run *= busy[order[b] + 1];
            }
            below *= busy[order[a] + 1];
        }
        // one outside truck: every other inside truck busy
        for m in 1..=k {
            let mut prod = 1.0;
            for (l, &p) in busy.iter().enumerate().skip(1) {
                if l != m {
                    prod *= p;
                }
            }
            out[Dispatch::new(OUTSIDE, m).index()] = prod;
        }
        out[Dispatch::new(OUTSIDE, OUTSIDE).index()] = busy[1..].iter().product();
    }

    /// Request rates per pair and per pseudo-station. Only inside pairs feed
    /// the per-station rates.
    fn demands(&self, busy: &[f64], scratch: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.trucks;
        let mut pair_demand = vec![0.0; pair_count(k)];
        for (j, &lj) in self.lambdas.iter().enumerate() {
            if lj == 0.0 {
                continue;
            }
            self.pair_probabilities(j, busy, scratch);
            for (d, &p) in pair_demand.iter_mut().zip(scratch.iter()) {
                *d += lj * p;
            }
        }
        (pair_demand.clone(), self.station_demand(&pair_demand))
    }

    fn station_demand(&self, pair_demand: &[f64]) -> Vec<f64> {
        let mut demand = vec![0.0; self.trucks];
        for (idx, &d) in pair_demand.iter().enumerate() {
            let pair = Dispatch::from_index(idx);
            if pair.lo != OUTSIDE && pair.lo != pair.hi {
                demand[pair.lo - 1] += d;
                demand[pair.hi - 1] += d;
            }
        }
        demand
    }

    fn initial(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pair_demand = vec![0.0; pair_count(self.trucks)];
        for (j, &lj) in self.lambdas.iter().enumerate() {
            let order = &self.order[j];
            let top = if self.trucks >= 2 {
                Dispatch::new(order[0] + 1, order[1] + 1)
            } else {
                Dispatch::new(OUTSIDE, order[0] + 1)
            };
            pair_demand[top.index()] += lj;
        }
        let demand = self.station_demand(&pair_demand);
        (pair_demand, demand)
    }

    fn busy(&self, demand: &[f64], idle: &[bool], horizon: f64) -> Result<Vec<f64>> {
        let mut busy = vec![0.0; self.trucks + 1];
        for k in 0..self.trucks {
            let d = demand[k];
            if d <= 0.0 {
                continue;
            }
            let (h0, h1) = mm11_relative_costs(d, self.mu)?;
            let delta = if idle[k] { h1 } else { h0 };
            busy[k + 1] = (blocking(d / self.mu) + delta / (d * horizon)).clamp(0.0, 1.0);
        }
        Ok(busy)
    }

    fn estimate(&self, f: &[u32], cfg: &OsiaConfig) -> Result<OsiaEstimate> {
        let idle = self.idle(f);
        let mut scratch = vec![0.0; pair_count(self.trucks)];
        let (mut pair_demand, mut demand) = self.initial();
        let mut busy = vec![0.0; self.trucks + 1];
        let mut damped = false;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < cfg.max_iterations {
            iterations += 1;
            busy = self.busy(&demand, &idle, cfg.horizon)?;
            let (next_pairs, next) = self.demands(&busy, &mut scratch);
            converged = demand
                .iter()
                .zip(&next)
                .all(|(&d, &n)| d == 0.0 || (d - n).abs() / d < cfg.epsilon);
            pair_demand = next_pairs;
            if converged {
                demand = next;
                break;
            }
            if iterations >= DAMPING_AFTER {
                damped = true;
                for (d, n) in demand.iter_mut().zip(&next) {
                    *d = 0.5 * (*d + n);
                }
            } else {
                demand = next;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "queueing approximation",
                iterations,
            });
        }

        let mut value = 0.0;
        for (j, &lj) in self.lambdas.iter().enumerate() {
            if lj == 0.0 {
                continue;
            }
            self.pair_probabilities(j, &busy, &mut scratch);
            let mut inner = 0.0;
            for (idx, &p) in scratch.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let pair = Dispatch::from_index(idx);
                inner += p * self.costs[j][idx] * (1.0 - busy[pair.lo]) * (1.0 - busy[pair.hi]);
            }
            value += lj * inner;
        }
        Ok(OsiaEstimate {
            value: cfg.horizon * value,
            iterations,
            converged,
            damped,
            iterate: OsiaIterate {
                pair_demand,
                demand,
                busy,
            },
        })
    }
}

/// Approximate cost `J(f, T)` of closest-first over `[0, T]` from state `f`.
pub fn osia_cost_estimate(
    inst: &Instance,
    costs: &CostTable,
    f: &[u32],
    cfg: &OsiaConfig,
) -> Result<OsiaEstimate> {
    cfg.validate()?;
    if f.len() != inst.station_count() || f.iter().zip(inst.capacities()).any(|(a, c)| a > c) {
        return Err(invalid("state does not fit the instance capacities"));
    }
    Split::new(inst, costs).estimate(f, cfg)
}

/// `J(f, T)` for every state, by state index.
pub fn osia_estimates(inst: &Instance, costs: &CostTable, cfg: &OsiaConfig) -> Result<Vec<OsiaEstimate>> {
    cfg.validate()?;
    let split = Split::new(inst, costs);
    let space = StateSpace::new(inst.capacities());
    (0..space.size())
        .into_par_iter()
        .map(|s| split.estimate(&space.state(s), cfg))
        .collect()
}

/// One-step improvement over closest-first against the approximate costs.
pub fn osia_policy(inst: &Instance, costs: &CostTable, cfg: &OsiaConfig) -> Result<Policy> {
    Ok(osia_policy_with(inst, costs, cfg)?.0)
}

/// [`osia_policy`] together with the per-state estimates it used.
pub fn osia_policy_with(
    inst: &Instance,
    costs: &CostTable,
    cfg: &OsiaConfig,
) -> Result<(Policy, Vec<OsiaEstimate>)> {
    let estimates = osia_estimates(inst, costs, cfg)?;
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let cf = closest_first_policy(inst);
    let policy = improve(costs, &values, &cf, PolicyKind::Osia)?;
    Ok((policy, estimates))
}

/// Writes `state_index, iterations, converged, damped, J, D_1..D_K` rows.
pub fn write_osia_diagnostics<W: Write>(out: W, estimates: &[OsiaEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = estimates.first().map_or(0, |e| e.iterate.demand.len());
    let mut header: Vec<String> = ["state_index", "iterations", "converged", "damped", "J"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|i| format!("D_{i}")));
    w.write_record(&header)?;
    for (s, e) in estimates.iter().enumerate() {
        let mut rec = vec![
            s.to_string(),
            e.iterations.to_string(),
            e.converged.to_string(),
            e.damped.to_string(),
            fmt_sig(e.value),
        ];
        rec.extend(e.iterate.demand.iter().map(|&d| fmt_sig(d)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::build_cost_table;
    use crate::graph::{generate_grid_graph, Graph};
    use crate::instance::generate_instance;
    use nalgebra::{Matrix2, Vector2};

    #[test]
    fn mm11_unit_rates() {
        let (h0, h1) = mm11_relative_costs(1.0, 1.0).unwrap();
        assert!((h0 - 0.25).abs() < 1e-15 && (h1 + 0.25).abs() < 1e-15);
    }

    #[test]
    fn mm11_matches_linear_solve() {
        for &(d, mu) in &[(0.3, 1.0), (2.0, 0.5), (1e-3, 1.0)] {
            let rho: f64 = d / mu;
            let b = rho / (1.0 + rho);
            // first Bellman equation and the normalization, in (h0, h1)
            let a = Matrix2::new(
                1.0 - d / (d + mu),
                -mu / (d + mu),
                1.0 / (1.0 + rho),
                rho / (1.0 + rho),
            );
            let rhs = Vector2::new(d / (d + mu) - d * b / (d + mu), 0.0);
            let x = a.lu().solve(&rhs).unwrap();
            let (h0, h1) = mm11_relative_costs(d, mu).unwrap();
            assert!((x[0] - h0).abs() < 1e-12 && (x[1] - h1).abs() < 1e-12);
            assert!((h1 - (h0 - b)).abs() < 1e-12);
        }
        assert!(mm11_relative_costs(0.0, 1.0).is_err());
        assert!(mm11_relative_costs(1.0, -1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OsiaConfig::default().validate().is_ok());
        let bad = OsiaConfig {
            epsilon: 0.5,
            ..OsiaConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn sample(stations: usize, seed: u64) -> (Instance, CostTable) {
        let g = generate_grid_graph(4, 0.5, seed).unwrap();
        let inst = generate_instance(&g, stations, 0.1, 0.6, false, seed).unwrap();
        let costs = build_cost_table(&inst);
        (inst, costs)
    }

    #[test]
    fn zero_costs_zero_estimate() {
        let (inst, _) = sample(3, 1);
        let zero = CostTable::constant(3, inst.node_count(), 0.0);
        for e in osia_estimates(&inst, &zero, &OsiaConfig::default()).unwrap() {
            assert_eq!(e.value, 0.0);
        }
    }

    #[test]
    fn two_stations_single_source() {
        let g = Graph::full_lattice(3);
        let mut file = generate_instance(&g, 2, 0.2, 0.6, false, 0).unwrap().to_file();
        let total: f64 = file.lambdas.iter().sum();
        file.lambdas = vec![0.0; 9];
        file.lambdas[4] = total;
        let inst = Instance::from_file(file).unwrap();
        let costs = build_cost_table(&inst);
        for f in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let e = osia_cost_estimate(&inst, &costs, &f, &OsiaConfig::default()).unwrap();
            assert!(e.converged);
            for &d in &e.iterate.demand {
                assert!((d - total).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn iterates_stay_in_range() {
        for seed in 0..3 {
            let (inst, costs) = sample(4, seed);
            for e in osia_estimates(&inst, &costs, &OsiaConfig::default()).unwrap() {
                assert_eq!(e.iterate.busy[0], 0.0);
                assert!(e.iterate.busy.iter().all(|p| (0.0..=1.0).contains(p)));
                assert!(e.iterate.demand.iter().all(|&d| d >= 0.0));
            }
        }
    }

    #[test]
    fn small_states_have_unique_action() {
        let (inst, costs) = sample(3, 4);
        let pol = osia_policy(&inst, &costs, &OsiaConfig::default()).unwrap();
        let cf = closest_first_policy(&inst);
        for s in 0..pol.space().size() {
            let idle: u32 = pol.space().state(s).iter().sum();
            if idle <= 1 {
                for j in 0..inst.node_count() {
                    assert_eq!(pol.get(s, j), cf.get(s, j));
                }
            }
        }
    }

    #[test]
    fn diagnostics_layout() {
        let (inst, costs) = sample(3, 2);
        let est = osia_estimates(&inst, &costs, &OsiaConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_osia_diagnostics(&mut buf, &est).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("state_index,iterations,converged,damped,J,D_1,D_2,D_3\n"));
        assert_eq!(text.lines().count(), 9);
    }
}
