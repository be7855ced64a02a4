use std::fmt;
use std::io::Write;

use super::{action_set, dispatch_counts, StateSpace};
use crate::costs::{Dispatch, OUTSIDE};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::instance::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Cf,
    Opt,
    Osi,
    Osia,
    Custom,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Cf => "CF",
            PolicyKind::Opt => "OPT",
            PolicyKind::Osi => "OSI",
            PolicyKind::Osia => "OSIA",
            PolicyKind::Custom => "custom",
        })
    }
}

/// A deterministic dispatch rule over every (state, location) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    kind: PolicyKind,
    space: StateSpace,
    locations: usize,
    actions: Vec<Dispatch>,
}

impl Policy {
    /// Builds a policy by asking `rule` for every (state, location), then
    /// checks feasibility.
    pub fn from_fn(
        kind: PolicyKind,
        space: StateSpace,
        locations: usize,
        mut rule: impl FnMut(usize, &[u32], NodeId) -> Dispatch,
    ) -> Result<Self> {
        let mut actions = Vec::with_capacity(space.size() * locations);
        for s in 0..space.size() {
            let f = space.state(s);
            for j in 0..locations {
                actions.push(rule(s, &f, j));
            }
        }
        let pol = Policy {
            kind,
            space,
            locations,
            actions,
        };
        pol.check_feasible()?;
        Ok(pol)
    }

    fn check_feasible(&self) -> Result<()> {
        for s in 0..self.space.size() {
            let feasible = action_set(&self.space.state(s));
            for j in 0..self.locations {
                let a = self.get(s, j);
                if !feasible.contains(&a) {
                    return Err(Error::InvalidArgument(format!(
                        "action ({}, {}) is infeasible in state {s} at location {j}",
                        a.lo, a.hi
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: PolicyKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn locations(&self) -> usize {
        self.locations
    }

    pub fn get(&self, state: usize, j: NodeId) -> Dispatch {
        self.actions[state * self.locations + j]
    }

    /// Checked lookup.
    pub fn action(&self, state: usize, j: NodeId) -> Result<Dispatch> {
        if state >= self.space.size() || j >= self.locations {
            return Err(Error::MissingPolicyEntry { state, location: j });
        }
        Ok(self.get(state, j))
    }

    /// Number of (state, location) entries where two policies differ.
    pub fn disagreements(&self, other: &Policy) -> usize {
        self.actions
            .iter()
            .zip(&other.actions)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Writes `state_index, j, a_1..a_I, outside_count` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let stations = self.space.stations();
        let mut header = vec!["state_index".to_string(), "j".to_string()];
        header.extend((1..=stations).map(|i| format!("a_{i}")));
        header.push("outside_count".into());
        w.write_record(&header)?;
        for s in 0..self.space.size() {
            for j in 0..self.locations {
                let (a, outside) = dispatch_counts(self.get(s, j), stations);
                let mut rec = vec![s.to_string(), j.to_string()];
                rec.extend(a.iter().map(u32::to_string));
                rec.push(outside.to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per location, station labels sorted by route length then label, each
/// repeated once per truck.
pub fn dispatch_orders(inst: &Instance) -> Vec<Vec<usize>> {
    (0..inst.node_count())
        .map(|j| {
            let mut order: Vec<usize> = (0..inst.station_count()).collect();
            order.sort_by_key(|&i| (inst.phases(i, j), i));
            order
                .into_iter()
                .flat_map(|i| std::iter::repeat(i + 1).take(inst.capacities()[i] as usize))
                .collect()
        })
        .collect()
}

/// Sends the two nearest idle trucks, topping up with outside trucks.
pub fn closest_first_policy(inst: &Instance) -> Policy {
    let orders = dispatch_orders(inst);
    let space = StateSpace::new(inst.capacities());
    Policy::from_fn(PolicyKind::Cf, space, inst.node_count(), |_, f, j| {
        closest_first_action(&orders[j], f)
    })
    .expect("closest-first actions are feasible")
}

pub(crate) fn closest_first_action(order: &[usize], f: &[u32]) -> Dispatch {
    let mut left = f.to_vec();
    let mut picked = [OUTSIDE; 2];
    let mut k = 0;
    for &label in order {
        if k == 2 {
            break;
        }
        if left[label - 1] > 0 {
            left[label - 1] -= 1;
            picked[k] = label;
            k += 1;
        }
    }
    Dispatch::new(picked[0], picked[1])
}
