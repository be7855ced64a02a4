use super::{action_set, evaluate_policy, Evaluation, Policy, PolicyKind};
use crate::costs::{CostTable, Dispatch};
use crate::error::{Error, Result};
use crate::instance::Instance;

pub const MAX_PI_ITERATIONS: usize = 1000;

/// Improvements smaller than this, relative to the incumbent's value, are
/// treated as ties so round-off cannot make the iteration cycle.
const IMPROVEMENT_TOLERANCE: f64 = 1e-12;

/// Greedy one-step improvement of `incumbent` against relative costs `h`.
///
/// For each (state, location) picks the action minimizing `c(a, j) + h(f − a)`.
/// The incumbent action is kept unless another action beats it by more than
/// the tolerance; otherwise the lexicographically first minimizer wins.
pub fn improve(
    costs: &CostTable,
    h: &[f64],
    incumbent: &Policy,
    kind: PolicyKind,
) -> Result<Policy> {
    let space = incumbent.space().clone();
    Policy::from_fn(kind, space.clone(), incumbent.locations(), |s, f, j| {
        let value = |a: Dispatch| costs.get(a, j) + h[space.after(s, a)];
        let current = incumbent.get(s, j);
        let current_value = value(current);
        let tol = IMPROVEMENT_TOLERANCE * current_value.abs().max(1.0);
        let options = action_set(f);
        let best = options.iter().map(|&a| value(a)).fold(f64::INFINITY, f64::min);
        if current_value <= best + tol {
            return current;
        }
        *options
            .iter()
            .find(|&&a| value(a) <= best + tol)
            .expect("minimum is attained")
    })
}

/// Result of policy iteration.
#[derive(Debug, Clone)]
pub struct PiOutcome {
    pub policy: Policy,
    pub evaluation: Evaluation,
    /// Improvement passes performed, the final (stable) one included.
    pub iterations: usize,
    /// `g` of every evaluated policy, in order.
    pub g_history: Vec<f64>,
}

/// Alternates evaluation and greedy improvement until the policy is stable.
pub fn policy_iteration(inst: &Instance, costs: &CostTable, initial: &Policy) -> Result<PiOutcome> {
    let mut policy = initial.clone();
    let mut g_history = Vec::new();
    for iteration in 1..=MAX_PI_ITERATIONS {
        let evaluation = evaluate_policy(inst, costs, &policy)?;
        g_history.push(evaluation.g);
        let next = improve(costs, &evaluation.h, &policy, PolicyKind::Opt)?;
        if next == policy.clone().with_kind(PolicyKind::Opt) {
            return Ok(PiOutcome {
                policy: next,
                evaluation,
                iterations: iteration,
                g_history,
            });
        }
        policy = next;
    }
    Err(Error::NonConvergence {
        what: "policy iteration",
        iterations: MAX_PI_ITERATIONS,
    })
}
