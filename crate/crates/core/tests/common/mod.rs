//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use firedispatch::costs::{CostTable, Dispatch};
use firedispatch::mdp::{action_set, evaluate_policy, Policy, PolicyKind, StateSpace};
use firedispatch::Instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Erlang(w) density with unit-mean phases.
pub fn erlang_density(w: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return if w == 1 { 1.0 } else { 0.0 };
    }
    ((w - 1) as f64 * y.ln() - y - ln_factorial(w - 1)).exp()
}

/// Survival function by adaptive quadrature of the density.
pub fn quad_tail(w: u32, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let out = quadrature::integrate(|y| erlang_density(w, y), 0.0, t, 1e-13);
    (1.0 - out.integral).clamp(0.0, 1.0)
}

/// Survival function as a Poisson sum built term by term.
pub fn poisson_tail(w: u32, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let mut term = (-t).exp();
    let mut sum = term;
    for n in 1..w {
        term *= t / n as f64;
        sum += term;
    }
    sum
}

/// `P(Y0 + min{Y1, Y2} > t)` by conditioning on `Y0` and integrating numerically.
pub fn quad_sum_min_tail(w0: u32, w1: u32, w2: u32, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let f = |y: f64| erlang_density(w0, y) * poisson_tail(w1, t - y) * poisson_tail(w2, t - y);
    // equal panels keep each piece smooth enough for the double-exponential rule
    let panels = 32;
    let h = t / panels as f64;
    let total: f64 = (0..panels)
        .map(|k| quadrature::integrate(f, k as f64 * h, (k + 1) as f64 * h, 1e-12).integral)
        .sum();
    total + poisson_tail(w0, t)
}

/// Monte Carlo estimate of `P(min{X1, X2} > t)` where both routes share `shared`
/// edges (one draw each) and have `l1 - shared`, `l2 - shared` private edges.
pub fn coupled_tail_mc(l1: u32, l2: u32, shared: u32, t: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exp = |n: u32| -> f64 { (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).sum() };
    let mut hits = 0usize;
    for _ in 0..samples {
        let s = exp(shared);
        let a = exp(l1 - shared);
        let b = exp(l2 - shared);
        if (s + a).min(s + b) > t {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// Minimum `g` over every deterministic policy, by exhaustive enumeration.
pub fn brute_force_min_g(inst: &Instance, costs: &CostTable) -> f64 {
    let space = StateSpace::new(inst.capacities());
    let j_count = inst.node_count();
    // decision points with more than one feasible action
    let mut choices: Vec<(usize, usize, Vec<Dispatch>)> = Vec::new();
    for s in 0..space.size() {
        let acts = action_set(&space.state(s));
        if acts.len() > 1 {
            for j in 0..j_count {
                choices.push((s, j, acts.clone()));
            }
        }
    }
    let mut digits = vec![0usize; choices.len()];
    let mut best = f64::INFINITY;
    loop {
        let pol = Policy::from_fn(PolicyKind::Custom, space.clone(), j_count, |s, f, j| {
            match choices.iter().position(|c| c.0 == s && c.1 == j) {
                Some(k) => choices[k].2[digits[k]],
                None => action_set(f)[0],
            }
        })
        .unwrap();
        best = best.min(evaluate_policy(inst, costs, &pol).unwrap().g);
        let mut k = 0;
        loop {
            if k == digits.len() {
                return best;
            }
            digits[k] += 1;
            if digits[k] < choices[k].2.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}
