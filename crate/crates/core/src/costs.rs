//! Tardiness probabilities of two-truck dispatches.
//!
//! Station labels are 1-based; label 0 is the outside pseudo-station, whose
//! truck always travels an independent `Erlang(outside_phases)` time.

use std::io::Write;

use crate::erlang::{erlang_tail_unchecked, min_tail, sum_min_tail};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::instance::Instance;
use crate::report::fmt_sig;

/// Label of the outside pseudo-station.
pub const OUTSIDE: usize = 0;

/// An unordered pair of dispatched trucks, by station label (`lo ≤ hi`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dispatch {
    pub lo: usize,
    pub hi: usize,
}

impl Dispatch {
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Dispatch { lo: a, hi: b }
        } else {
            Dispatch { lo: b, hi: a }
        }
    }

    /// Number of trucks taken from inside stations.
    pub fn inside(&self) -> usize {
        (self.lo != OUTSIDE) as usize + (self.hi != OUTSIDE) as usize
    }

    /// Dense index over pairs drawn from `0..=I`.
    pub fn index(&self) -> usize {
        self.hi * (self.hi + 1) / 2 + self.lo
    }

    pub fn from_index(idx: usize) -> Self {
        let mut hi = 0;
        while (hi + 1) * (hi + 2) / 2 <= idx {
            hi += 1;
        }
        Dispatch {
            lo: idx - hi * (hi + 1) / 2,
            hi,
        }
    }
}

/// Number of unordered pairs over `0..=stations`.
pub fn pair_count(stations: usize) -> usize {
    (stations + 1) * (stations + 2) / 2
}

fn check_pair(inst: &Instance, pair: Dispatch, j: NodeId) -> Result<()> {
    if pair.hi > inst.station_count() {
        return Err(Error::UnknownStation(pair.hi));
    }
    if j >= inst.node_count() {
        return Err(Error::InvalidArgument(format!(
            "location {j} outside 0..{}",
            inst.node_count()
        )));
    }
    Ok(())
}

/// `P(R > t*)` for dispatching `pair` to location `j`, in the instance's
/// correlation mode.
pub fn dispatch_cost(inst: &Instance, pair: Dispatch, j: NodeId) -> Result<f64> {
    dispatch_cost_in_mode(inst, pair, j, inst.correlated())
}

/// [`dispatch_cost`] with an explicit correlation mode.
pub fn dispatch_cost_in_mode(
    inst: &Instance,
    pair: Dispatch,
    j: NodeId,
    correlated: bool,
) -> Result<f64> {
    check_pair(inst, pair, j)?;
    let t = inst.t_star();
    let outside = inst.outside_phases();
    let len = |label: usize| inst.phases(label - 1, j);

    if pair.hi == OUTSIDE {
        return min_tail(outside, outside, t);
    }
    let l_hi = len(pair.hi);
    if l_hi == 0 {
        return Ok(0.0);
    }
    if pair.lo == OUTSIDE {
        return min_tail(l_hi, outside, t);
    }
    let l_lo = len(pair.lo);
    if l_lo == 0 {
        return Ok(0.0);
    }
    if !correlated {
        return min_tail(l_lo, l_hi, t);
    }
    if pair.lo == pair.hi {
        return Ok(erlang_tail_unchecked(l_lo, t));
    }
    let shared = inst.routes().shared(pair.lo - 1, pair.hi - 1, j);
    if shared == 0 {
        min_tail(l_lo, l_hi, t)
    } else if shared == l_lo || shared == l_hi {
        Ok(erlang_tail_unchecked(l_lo.min(l_hi), t))
    } else {
        sum_min_tail(shared, l_lo - shared, l_hi - shared, t)
    }
}

/// Precomputed costs of every pair at every location, for one correlation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    stations: usize,
    locations: usize,
    correlated: bool,
    values: Vec<f64>,
}

impl CostTable {
    /// A table with the same cost everywhere, mostly for testing.
    pub fn constant(stations: usize, locations: usize, value: f64) -> Self {
        CostTable {
            stations,
            locations,
            correlated: false,
            values: vec![value; locations * pair_count(stations)],
        }
    }

    /// Builds a table from a cost function of `(pair, location)`.
    pub fn from_fn(
        stations: usize,
        locations: usize,
        correlated: bool,
        mut cost: impl FnMut(Dispatch, NodeId) -> f64,
    ) -> Self {
        let pairs = pair_count(stations);
        let mut values = Vec::with_capacity(locations * pairs);
        for j in 0..locations {
            for p in 0..pairs {
                values.push(cost(Dispatch::from_index(p), j));
            }
        }
        CostTable {
            stations,
            locations,
            correlated,
            values,
        }
    }

    pub fn get(&self, pair: Dispatch, j: NodeId) -> f64 {
        self.values[j * pair_count(self.stations) + pair.index()]
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    pub fn locations(&self) -> usize {
        self.locations
    }

    pub fn correlated(&self) -> bool {
        self.correlated
    }

    /// All pairs over `0..=I` in index order.
    pub fn pairs(&self) -> impl Iterator<Item = Dispatch> {
        (0..pair_count(self.stations)).map(Dispatch::from_index)
    }
}

/// Costs of every pair at every location in the instance's correlation mode.
pub fn build_cost_table(inst: &Instance) -> CostTable {
    build_cost_table_in_mode(inst, inst.correlated())
}

pub fn build_cost_table_in_mode(inst: &Instance, correlated: bool) -> CostTable {
    CostTable::from_fn(inst.station_count(), inst.node_count(), correlated, |pair, j| {
        dispatch_cost_in_mode(inst, pair, j, correlated).expect("pair and location in range")
    })
}

/// Writes `j, i1, i2, cost_uncorrelated, cost_correlated` rows, `i1 ≤ i2`.
pub fn write_cost_csv<W: Write>(out: W, uncorrelated: &CostTable, correlated: &CostTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["j", "i1", "i2", "cost_uncorrelated", "cost_correlated"])?;
    for j in 0..uncorrelated.locations() {
        for pair in uncorrelated.pairs() {
            w.write_record([
                j.to_string(),
                pair.lo.to_string(),
                pair.hi.to_string(),
                fmt_sig(uncorrelated.get(pair, j)),
                fmt_sig(correlated.get(pair, j)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
