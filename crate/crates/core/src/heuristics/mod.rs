//! One-step improvement heuristics on top of closest-first.

mod osia;

pub use osia::{
    mm11_relative_costs, osia_cost_estimate, osia_estimates, osia_policy, osia_policy_with,
    write_osia_diagnostics, OsiaConfig, OsiaEstimate, OsiaIterate,
};

use crate::costs::CostTable;
use crate::error::Result;
use crate::instance::Instance;
use crate::mdp::{closest_first_policy, improve, Evaluation, Policy, PolicyKind};

/// One greedy improvement step over closest-first, using its exact relative costs.
///
/// Ties are resolved toward the closest-first action, then lexicographically.
pub fn osi_policy(inst: &Instance, costs: &CostTable, cf_eval: &Evaluation) -> Result<Policy> {
    let cf = closest_first_policy(inst);
    improve(costs, &cf_eval.h, &cf, PolicyKind::Osi)
}
