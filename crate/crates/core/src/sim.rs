//! Discrete-event simulation of a dispatch policy.
//!
//! Incidents arrive as a Poisson process and are placed at node `j` with
//! probability `λ_j / Σλ`. Each incident gets the policy's pair of trucks;
//! inside trucks stay busy for an exponential time with rate `μ`. Edge
//! traversal times are drawn per dispatch. In correlated mode the two trucks
//! of one dispatch use the same draws on every edge their routes share.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::costs::{Dispatch, OUTSIDE};
use crate::error::{invalid, Result};
use crate::instance::Instance;
use crate::mdp::Policy;
use crate::report::fmt_sig;
use crate::seeds;

/// Fraction of the incident budget discarded as warm-up.
pub const WARMUP_FRACTION: f64 = 0.01;
/// Batches used for the batch-means confidence interval.
pub const BATCHES: usize = 50;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    /// Incidents counted after warm-up.
    pub incidents: u64,
    pub late: u64,
    pub flar_hat: f64,
    /// 95% normal-approximation half-width from batch means.
    pub ci_halfwidth: f64,
    pub seed: u64,
}

impl SimResult {
    pub fn covers(&self, value: f64) -> bool {
        (self.flar_hat - value).abs() <= self.ci_halfwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Return {
    time: f64,
    station: usize,
}

impl Eq for Return {}

impl PartialOrd for Return {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Return {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.station.cmp(&other.station))
    }
}

fn erlang<R: Rng>(rng: &mut R, phases: u32) -> f64 {
    (0..phases).map(|_| rng.sample::<f64, _>(Exp1)).sum()
}

/// Samples the arrival time of the first truck of `pair` at node `j`.
fn response_time<R: Rng>(inst: &Instance, pair: Dispatch, j: usize, rng: &mut R) -> f64 {
    let outside = inst.outside_phases();
    let len = |label: usize| inst.phases(label - 1, j);
    match (pair.lo, pair.hi) {
        (OUTSIDE, OUTSIDE) => erlang(rng, outside).min(erlang(rng, outside)),
        (OUTSIDE, b) => erlang(rng, len(b)).min(erlang(rng, outside)),
        (a, b) if !inst.correlated() => erlang(rng, len(a)).min(erlang(rng, len(b))),
        (a, b) if a == b => erlang(rng, len(a)),
        (a, b) => {
            let shared = inst.routes().shared(a - 1, b - 1, j);
            let common = erlang(rng, shared);
            let rest_a = erlang(rng, len(a) - shared);
            let rest_b = erlang(rng, len(b) - shared);
            common + rest_a.min(rest_b)
        }
    }
}

/// Simulates `incident_budget` incidents under `pol`.
///
/// The first 1% of incidents warm the system up and are not counted.
pub fn simulate(inst: &Instance, pol: &Policy, incident_budget: u64, seed: u64) -> Result<SimResult> {
    if incident_budget == 0 {
        return Err(invalid("incident budget must be at least 1"));
    }
    let total = inst.total_lambda();
    if !(total > 0.0) {
        return Err(invalid("total arrival rate is zero"));
    }
    if pol.space().capacities() != inst.capacities() || pol.locations() != inst.node_count() {
        return Err(invalid("policy does not match the instance"));
    }
    let locations = WeightedIndex::new(inst.lambdas()).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = pol.space();
    let stations = inst.station_count();

    let warmup = (incident_budget as f64 * WARMUP_FRACTION).floor() as u64;
    let counted = incident_budget - warmup;
    let batches = (BATCHES as u64).min(counted).max(1);
    let batch_size = counted / batches;
    let mut batch_late = vec![0u64; batches as usize];

    let mut idle: Vec<u32> = inst.capacities().to_vec();
    let mut state = space.reference();
    let mut returns: BinaryHeap<Reverse<Return>> = BinaryHeap::new();
    let mut now = 0.0;
    let mut late = 0u64;

    for n in 0..incident_budget {
        now += rng.sample::<f64, _>(Exp1) / total;
        while let Some(Reverse(r)) = returns.peek().copied() {
            if r.time > now {
                break;
            }
            returns.pop();
            idle[r.station] += 1;
            state += space.stride(r.station);
        }
        debug_assert_eq!(
            returns.len() as u32,
            inst.total_trucks() - idle.iter().sum::<u32>()
        );
        let j = locations.sample(&mut rng);
        let pair = pol.action(state, j)?;
        let response = response_time(inst, pair, j, &mut rng);
        for label in [pair.lo, pair.hi] {
            if label != OUTSIDE {
                let i = label - 1;
                debug_assert!(i < stations && idle[i] > 0);
                idle[i] -= 1;
                state -= space.stride(i);
                let busy = rng.sample::<f64, _>(Exp1) / inst.mu();
                returns.push(Reverse(Return {
                    time: now + busy,
                    station: i,
                }));
            }
        }
        if n >= warmup && response > inst.t_star() {
            late += 1;
            let b = ((n - warmup) / batch_size.max(1)).min(batches - 1);
            batch_late[b as usize] += 1;
        }
    }

    let flar_hat = late as f64 / counted as f64;
    let ci_halfwidth = if batches >= 2 && batch_size >= 1 {
        let sizes: Vec<f64> = (0..batches)
            .map(|b| {
                if b == batches - 1 {
                    (counted - batch_size * (batches - 1)) as f64
                } else {
                    batch_size as f64
                }
            })
            .collect();
        let means: Vec<f64> = batch_late
            .iter()
            .zip(&sizes)
            .map(|(&l, &s)| l as f64 / s)
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (means.len() - 1) as f64;
        Z95 * (var / means.len() as f64).sqrt()
    } else {
        Z95 * (flar_hat * (1.0 - flar_hat) / counted as f64).sqrt()
    };
    Ok(SimResult {
        incidents: counted,
        late,
        flar_hat,
        ci_halfwidth,
        seed,
    })
}

/// Independent replications with seeds `split(master, r)`, in replication order.
pub fn simulate_replications(
    inst: &Instance,
    pol: &Policy,
    incident_budget: u64,
    master_seed: u64,
    replications: usize,
) -> Result<Vec<SimResult>> {
    (0..replications as u64)
        .into_par_iter()
        .map(|r| simulate(inst, pol, incident_budget, seeds::split(master_seed, r)))
        .collect()
}

/// Writes `seed, incidents, late, flar_hat, ci_halfwidth` rows.
pub fn write_sim_csv<W: Write>(out: W, results: &[SimResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "incidents", "late", "flar_hat", "ci_halfwidth"])?;
    for r in results {
        w.write_record([
            r.seed.to_string(),
            r.incidents.to_string(),
            r.late.to_string(),
            fmt_sig(r.flar_hat),
            fmt_sig(r.ci_halfwidth),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_grid_graph;
    use crate::instance::generate_instance;
    use crate::mdp::closest_first_policy;

    fn inst(correlated: bool) -> Instance {
        let g = generate_grid_graph(4, 0.5, 2).unwrap();
        generate_instance(&g, 3, 0.1, 0.6, correlated, 7).unwrap()
    }

    #[test]
    fn deterministic_for_seed() {
        let inst = inst(true);
        let pol = closest_first_policy(&inst);
        let a = simulate(&inst, &pol, 20_000, 5).unwrap();
        let b = simulate(&inst, &pol, 20_000, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.late <= a.incidents);
        assert!(a.ci_halfwidth >= 0.0);
        assert_eq!(a.incidents, 20_000 - 200);
    }

    #[test]
    fn rejects_empty_budget() {
        let inst = inst(false);
        assert!(simulate(&inst, &closest_first_policy(&inst), 0, 1).is_err());
    }

    #[test]
    fn near_zero_threshold_is_late_away_from_stations() {
        let mut file = inst(false).to_file();
        file.gamma = 1e-12;
        file.t_star = file.gamma * (file.outside_phases / 2) as f64;
        let inst = Instance::from_file(file).unwrap();
        let pol = closest_first_policy(&inst);
        let r = simulate(&inst, &pol, 50_000, 3).unwrap();
        let on_station: f64 = inst.stations().iter().map(|&s| inst.lambdas()[s]).sum::<f64>()
            / inst.total_lambda();
        assert!(r.flar_hat >= 1.0 - on_station - 1e-12);
    }

    #[test]
    fn csv_layout() {
        let inst = inst(false);
        let r = simulate(&inst, &closest_first_policy(&inst), 1000, 1).unwrap();
        let mut buf = Vec::new();
        write_sim_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed,incidents,late,flar_hat,ci_halfwidth\n1,990,"));
    }
}
