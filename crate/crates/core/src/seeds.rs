//! Derivation of independent seeds from one master seed.
//!
//! `split(master, k)` is the `k`-th output of a SplitMix64 generator started
//! at `master`. Experiments derive the seed of graph `g` as
//! `split(master, g)` and the seeds of its components as
//! `split(split(master, g), stream)` with the stream constants below, so any
//! single graph can be regenerated without running the others.

pub const STREAM_SPARSENESS: u64 = 0;
pub const STREAM_GRAPH: u64 = 1;
pub const STREAM_INSTANCE: u64 = 2;
pub const STREAM_SIMULATION: u64 = 3;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn split(master: u64, k: u64) -> u64 {
    let mut z = master.wrapping_add(GOLDEN.wrapping_mul(k.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a seed to a uniform value in `[0, 1)` using its top 53 bits.
pub fn unit_interval(seed: u64) -> f64 {
    (seed >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
