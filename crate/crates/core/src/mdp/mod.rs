//! Exact model: states, feasible actions, policy evaluation and policy iteration.

mod evaluate;
mod iteration;
mod policy;

pub use evaluate::{
    evaluate_policy, flar, write_evaluation_csv, Evaluation, DENSE_STATE_LIMIT,
};
pub use iteration::{improve, policy_iteration, PiOutcome, MAX_PI_ITERATIONS};
pub use policy::{closest_first_policy, dispatch_orders, Policy, PolicyKind};

use crate::costs::{Dispatch, OUTSIDE};

/// Dense mixed-radix indexing of idle-count vectors `0 ≤ f_i ≤ C_i`.
///
/// `index(f) = Σ f_i · stride_i`, so the all-idle state `f = C` has the
/// largest index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    capacities: Vec<u32>,
    strides: Vec<usize>,
    size: usize,
}

impl StateSpace {
    pub fn new(capacities: &[u32]) -> Self {
        let mut strides = Vec::with_capacity(capacities.len());
        let mut size = 1usize;
        for &c in capacities {
            strides.push(size);
            size = size
                .checked_mul(c as usize + 1)
                .expect("state space size overflows usize");
        }
        StateSpace {
            capacities: capacities.to_vec(),
            strides,
            size,
        }
    }

    /// `Π (C_i + 1)` without allocating, saturating on overflow.
    pub fn size_of(capacities: &[u32]) -> usize {
        capacities
            .iter()
            .fold(1usize, |acc, &c| acc.saturating_mul(c as usize + 1))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stations(&self) -> usize {
        self.capacities.len()
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn stride(&self, station: usize) -> usize {
        self.strides[station]
    }

    pub fn index(&self, f: &[u32]) -> usize {
        f.iter().zip(&self.strides).map(|(&x, &s)| x as usize * s).sum()
    }

    pub fn state(&self, index: usize) -> Vec<u32> {
        self.capacities
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| ((index / s) % (c as usize + 1)) as u32)
            .collect()
    }

    /// Index of the all-idle state.
    pub fn reference(&self) -> usize {
        self.size - 1
    }

    /// Index reached from `index` after dispatching `pair`.
    pub fn after(&self, index: usize, pair: Dispatch) -> usize {
        let mut next = index;
        for label in [pair.lo, pair.hi] {
            if label != OUTSIDE {
                next -= self.strides[label - 1];
            }
        }
        next
    }
}

/// The feasible dispatches in state `f`, in lexicographic `(lo, hi)` order.
///
/// With two or more idle trucks both come from inside; with one idle truck it
/// is paired with an outside truck; with none, two outside trucks are sent.
pub fn action_set(f: &[u32]) -> Vec<Dispatch> {
    let idle: u32 = f.iter().sum();
    match idle {
        0 => vec![Dispatch::new(OUTSIDE, OUTSIDE)],
        1 => {
            let i = f.iter().position(|&x| x == 1).unwrap();
            vec![Dispatch::new(OUTSIDE, i + 1)]
        }
        _ => {
            let mut out = Vec::new();
            for a in 0..f.len() {
                if f[a] == 0 {
                    continue;
                }
                for b in a..f.len() {
                    if (b == a && f[a] >= 2) || (b > a && f[b] >= 1) {
                        out.push(Dispatch::new(a + 1, b + 1));
                    }
                }
            }
            out
        }
    }
}

/// Per-station dispatch counts of `pair`, followed by the number of outside trucks.
pub fn dispatch_counts(pair: Dispatch, stations: usize) -> (Vec<u32>, u32) {
    let mut a = vec![0; stations];
    let mut outside = 0;
    for label in [pair.lo, pair.hi] {
        if label == OUTSIDE {
            outside += 1;
        } else {
            a[label - 1] += 1;
        }
    }
    (a, outside)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let space = StateSpace::new(&[1, 2, 1]);
        assert_eq!(space.size(), 12);
        for idx in 0..space.size() {
            assert_eq!(space.index(&space.state(idx)), idx);
        }
        assert_eq!(space.state(space.reference()), vec![1, 2, 1]);
    }

    #[test]
    fn binary_space_size() {
        for i in 1..10 {
            assert_eq!(StateSpace::new(&vec![1; i]).size(), 1 << i);
        }
    }

    #[test]
    fn all_busy_sends_outside() {
        assert_eq!(action_set(&[0, 0, 0]), vec![Dispatch::new(0, 0)]);
    }

    #[test]
    fn single_idle_truck_is_paired_with_outside() {
        assert_eq!(action_set(&[0, 1, 0]), vec![Dispatch::new(0, 2)]);
    }

    #[test]
    fn five_idle_singletons() {
        assert_eq!(action_set(&[1; 5]).len(), 10);
    }

    #[test]
    fn double_dispatch_needs_two_idle() {
        let acts = action_set(&[2, 1]);
        assert_eq!(acts, vec![Dispatch::new(1, 1), Dispatch::new(1, 2)]);
        assert!(!action_set(&[1, 2]).contains(&Dispatch::new(1, 1)));
    }

    #[test]
    fn after_dispatch_index() {
        let space = StateSpace::new(&[1, 2]);
        let f = space.reference();
        let next = space.after(f, Dispatch::new(2, 2));
        assert_eq!(space.state(next), vec![1, 0]);
        assert_eq!(space.after(f, Dispatch::new(0, 1)), space.index(&[0, 2]));
    }
}
