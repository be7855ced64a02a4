//! Two-vehicle dispatching on a city graph with Erlang travel times.
//!
//! Each incident receives two trucks and is late when the first of them
//! arrives after a threshold `t*`. Travel along an edge takes an exponential
//! time with unit mean; in correlated mode the two trucks share the draw on
//! every edge common to both routes. The crate computes the optimal policy by
//! policy iteration, the closest-first baseline, and two one-step improvement
//! heuristics (exact and queueing-approximated), and runs the comparison
//! experiments behind the `firedispatch` binary.

pub mod costs;
pub mod erlang;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod heuristics;
pub mod instance;
pub mod mdp;
pub mod report;
pub mod seeds;
pub mod sim;
pub mod validate;

pub use costs::{build_cost_table, dispatch_cost, CostTable, Dispatch};
pub use error::{Error, Result};
pub use graph::{generate_grid_graph, shortest_path, Graph, Path, TieBreak};
pub use heuristics::{osi_policy, osia_policy, OsiaConfig};
pub use instance::{generate_instance, Instance};
pub use mdp::{
    action_set, closest_first_policy, evaluate_policy, flar, policy_iteration, Evaluation,
    Policy, PolicyKind, StateSpace,
};
pub use sim::{simulate, SimResult};
