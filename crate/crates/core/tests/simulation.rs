use firedispatch::costs::build_cost_table;
use firedispatch::mdp::{closest_first_policy, evaluate_policy, flar};
use firedispatch::seeds;
use firedispatch::sim::{simulate, simulate_replications};
use firedispatch::{generate_grid_graph, generate_instance, Instance};

fn instance(d: usize, stations: usize, rho: f64, correlated: bool, seed: u64) -> Instance {
    let g = generate_grid_graph(d, 0.6, seed).unwrap();
    generate_instance(&g, stations, rho, 0.6, correlated, seed).unwrap()
}

#[test]
fn coverage_over_replications() {
    let inst = instance(4, 3, 0.1, false, 21);
    let costs = build_cost_table(&inst);
    let pol = closest_first_policy(&inst);
    let analytic = flar(&evaluate_policy(&inst, &costs, &pol).unwrap(), &inst).unwrap();
    let runs = simulate_replications(&inst, &pol, 1_000_000, 77, 100).unwrap();
    let hits = runs.iter().filter(|r| r.covers(analytic)).count();
    assert!(hits >= 93, "{hits}/100 intervals cover {analytic}");
}

#[test]
fn light_load_matches_top_pair_cost() {
    let inst = instance(4, 3, 1e-6, true, 5);
    let costs = build_cost_table(&inst);
    let pol = closest_first_policy(&inst);
    let idle = pol.space().reference();
    let expected: f64 = (0..inst.node_count())
        .map(|j| inst.lambdas()[j] / inst.total_lambda() * costs.get(pol.get(idle, j), j))
        .sum();
    let r = simulate(&inst, &pol, 400_000, 3).unwrap();
    assert!((r.flar_hat - expected).abs() <= r.ci_halfwidth, "{} vs {expected}", r.flar_hat);
}

#[test]
fn correlation_raises_sampled_lateness() {
    let base = instance(5, 4, 0.1, false, 17);
    let corr = base.with_correlated(true);
    let pol = closest_first_policy(&base);
    let a = simulate(&base, &pol, 500_000, 11).unwrap();
    let b = simulate(&corr, &pol, 500_000, 11).unwrap();
    assert!(b.flar_hat >= a.flar_hat - (a.ci_halfwidth + b.ci_halfwidth));
}

#[test]
fn identical_seeds_are_bit_identical() {
    let inst = instance(4, 3, 0.3, true, 2);
    let pol = closest_first_policy(&inst);
    let seed = seeds::split(5, 1);
    let a = simulate(&inst, &pol, 100_000, seed).unwrap();
    let b = simulate(&inst, &pol, 100_000, seed).unwrap();
    assert_eq!((a.incidents, a.late), (b.incidents, b.late));
    assert_eq!(a.flar_hat.to_bits(), b.flar_hat.to_bits());
    assert!(a.late <= a.incidents && a.ci_halfwidth >= 0.0);
    assert_eq!(a.flar_hat, a.late as f64 / a.incidents as f64);
}
