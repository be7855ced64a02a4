//! Tail probabilities of Erlang sums and minima with unit-mean phases.
//!
//! Three quantities are needed to price a dispatch:
//!
//! * `P(Y > t)` for `Y ~ Erlang(w)`,
//! * `P(min{Y1, Y2} > t)` for independent `Y1, Y2`,
//! * `P(Y0 + min{Y1, Y2} > t)` for independent `Y0, Y1, Y2`.
//!
//! The last one is a triple alternating sum over
//! `∫_0^t y^k e^y dy`, weighted by `e^{-2t}`. Its terms can exceed the result
//! by more than thirty orders of magnitude for large phase counts and
//! thresholds, so the double-precision evaluation tracks the magnitude of
//! every term and is repeated in MPFR arithmetic whenever too many digits
//! cancel.

use rug::ops::Pow;
use rug::Float;

use crate::error::{invalid, Result};

/// Digits the double-precision pass may lose before the sum is recomputed
/// in extended precision.
pub const MAX_LOST_DIGITS: f64 = 6.0;

/// Guard bits added on top of the measured cancellation.
const GUARD_BITS: u32 = 64;
const MAX_PRECISION_BITS: u32 = 16_384;

fn check(w: &[u32], t: f64) -> Result<()> {
    if w.iter().any(|&w| w == 0) {
        return Err(invalid("Erlang phase counts must be at least 1"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("threshold must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// `P(Y > t)` for `Y ~ Erlang(w)`: `Σ_{n<w} t^n e^{-t} / n!`.
pub fn erlang_tail(w: u32, t: f64) -> Result<f64> {
    check(&[w], t)?;
    Ok(erlang_tail_unchecked(w, t))
}

pub(crate) fn erlang_tail_unchecked(w: u32, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    if t < 600.0 {
        let mut term = (-t).exp();
        sum += term;
        for n in 1..w {
            term *= t / n as f64;
            sum += term;
        }
    } else {
        // e^{-t} underflows; accumulate terms in log space
        let lt = t.ln();
        let mut log_term = -t;
        sum += log_term.exp();
        for n in 1..w {
            log_term += lt - (n as f64).ln();
            sum += log_term.exp();
        }
    }
    sum.clamp(0.0, 1.0)
}

/// `P(min{Y1, Y2} > t)` for independent `Y1 ~ Erlang(w1)`, `Y2 ~ Erlang(w2)`.
pub fn min_tail(w1: u32, w2: u32, t: f64) -> Result<f64> {
    check(&[w1, w2], t)?;
    Ok(erlang_tail_unchecked(w1, t) * erlang_tail_unchecked(w2, t))
}

/// Outcome of a shared-segment tail evaluation, with numerical diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumMinTail {
    pub value: f64,
    /// `log10(Σ|terms| / |result|)` measured in the double-precision pass.
    pub lost_digits: f64,
    /// MPFR precision used, when the sum had to be recomputed.
    pub extended_bits: Option<u32>,
}

/// `P(Y0 + min{Y1, Y2} > t)` for independent Erlang variables.
pub fn sum_min_tail(w0: u32, w1: u32, w2: u32, t: f64) -> Result<f64> {
    Ok(sum_min_tail_report(w0, w1, w2, t)?.value)
}

/// Same as [`sum_min_tail`], also reporting how the value was obtained.
pub fn sum_min_tail_report(w0: u32, w1: u32, w2: u32, t: f64) -> Result<SumMinTail> {
    check(&[w0, w1, w2], t)?;
    if t == 0.0 {
        return Ok(SumMinTail {
            value: 1.0,
            lost_digits: 0.0,
            extended_bits: None,
        });
    }
    let fast = sum_min_tail_f64(w0, w1, w2, t);
    let lost_digits = (fast.magnitude / fast.value.abs()).log10();
    if lost_digits.is_finite() && lost_digits <= MAX_LOST_DIGITS {
        return Ok(SumMinTail {
            value: fast.value.clamp(0.0, 1.0),
            lost_digits,
            extended_bits: None,
        });
    }
    let lost_bits = if lost_digits.is_finite() {
        (lost_digits * std::f64::consts::LOG2_10).ceil() as u32
    } else {
        1024
    };
    let bits = (53 + lost_bits + GUARD_BITS).min(MAX_PRECISION_BITS);
    let value = sum_min_tail_extended(w0, w1, w2, t, bits);
    Ok(SumMinTail {
        value: value.clamp(0.0, 1.0),
        lost_digits,
        extended_bits: Some(bits),
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RawSum {
    pub value: f64,
    /// Σ of absolute values of every term, tail included.
    pub magnitude: f64,
}

/// Binomial coefficients `C(s, l)` for `s ≤ max`, exact in `f64` for `max ≤ 60`.
fn binomial_rows(max: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(max + 1);
    for s in 0..=max {
        let mut row = vec![1.0; s + 1];
        for l in 1..s {
            row[l] = rows[s - 1][l - 1] + rows[s - 1][l];
        }
        rows.push(row);
    }
    rows
}

/// Split point between the forward and the backward recurrence for
/// `∫_0^t y^k e^y dy`: forward is stable for `k ≤ t`, backward above it.
fn recurrence_split(t: f64, kmax: usize) -> usize {
    (t.floor() as usize).min(kmax)
}

/// `e^{-2t} ∫_0^t y^k e^y dy` for `k = 0..=kmax`.
///
/// Uses `I_k = t^k e^t − k I_{k−1}` upwards from `I_0 = e^t − 1` while
/// `k ≤ t`, and the same relation downwards from a power-series value of
/// `I_kmax` above that.
fn scaled_exp_moments(t: f64, kmax: usize) -> Vec<f64> {
    let emt = (-t).exp();
    // t^k e^{-t}
    let mut pw = Vec::with_capacity(kmax + 1);
    pw.push(emt);
    for k in 1..=kmax {
        pw.push(pw[k - 1] * t);
    }
    let mut out = vec![0.0; kmax + 1];
    out[0] = emt * (-(-t).exp_m1());
    let split = recurrence_split(t, kmax);
    for k in 1..=split {
        out[k] = pw[k] - k as f64 * out[k - 1];
    }
    if kmax > split {
        // ∫_0^t y^K e^y dy = Σ_m t^{K+m+1} / (m! (K+m+1))
        let big_k = kmax as f64;
        let mut a = (-2.0 * t).exp() * t.powi(kmax as i32 + 1);
        let mut sum = 0.0;
        let mut m = 0.0;
        loop {
            let term = a / (big_k + m + 1.0);
            sum += term;
            if term <= sum * 1e-18 || a == 0.0 {
                break;
            }
            m += 1.0;
            a *= t / m;
        }
        out[kmax] = sum;
        for k in ((split + 1)..kmax).rev() {
            out[k] = (pw[k + 1] - out[k + 1]) / (k + 1) as f64;
        }
    }
    out
}

/// Inverse factorials `1/n!` for `n ≤ max`.
fn inverse_factorials(max: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(max + 1);
    v.push(1.0);
    for n in 1..=max {
        v.push(v[n - 1] / n as f64);
    }
    v
}

/// Double-precision evaluation of the triple sum, grouped by `s = n + m`.
pub(crate) fn sum_min_tail_f64(w0: u32, w1: u32, w2: u32, t: f64) -> RawSum {
    let (w0, w1, w2) = (w0 as usize, w1 as usize, w2 as usize);
    let smax = w1 + w2 - 2;
    let kmax = smax + w0 - 1;
    let moments = scaled_exp_moments(t, kmax);
    let binom = binomial_rows(smax);
    let inv_fact = inverse_factorials(kmax.max(w1).max(w2));
    let mut tpow = Vec::with_capacity(smax + 1);
    tpow.push(1.0);
    for l in 1..=smax {
        tpow.push(tpow[l - 1] * t);
    }

    let mut total = 0.0;
    let mut magnitude = 0.0;
    for s in 0..=smax {
        let lo = s.saturating_sub(w2 - 1);
        let hi = s.min(w1 - 1);
        let weight: f64 = (lo..=hi).map(|n| inv_fact[n] * inv_fact[s - n]).sum();
        let mut inner = 0.0;
        let mut inner_abs = 0.0;
        for l in 0..=s {
            let term = binom[s][l] * tpow[l] * moments[s - l + w0 - 1];
            if (s - l) % 2 == 0 {
                inner += term;
            } else {
                inner -= term;
            }
            inner_abs += term.abs();
        }
        total += weight * inner;
        magnitude += weight * inner_abs;
    }
    let scale = inv_fact[w0 - 1];
    let tail = erlang_tail_unchecked(w0 as u32, t);
    RawSum {
        value: scale * total + tail,
        magnitude: scale * magnitude + tail,
    }
}

/// The triple sum in MPFR arithmetic at `bits` of precision.
pub(crate) fn sum_min_tail_extended(w0: u32, w1: u32, w2: u32, t: f64, bits: u32) -> f64 {
    let (w0, w1, w2) = (w0 as usize, w1 as usize, w2 as usize);
    let smax = w1 + w2 - 2;
    let kmax = smax + w0 - 1;
    let tt = Float::with_val(bits, t);
    let emt = Float::with_val(bits, -&tt).exp();

    let mut pw: Vec<Float> = Vec::with_capacity(kmax + 1);
    pw.push(emt.clone());
    for k in 1..=kmax {
        pw.push(Float::with_val(bits, &pw[k - 1] * &tt));
    }
    let mut moments: Vec<Float> = vec![Float::new(bits); kmax + 1];
    let emt2 = Float::with_val(bits, -Float::with_val(bits, 2 * &tt)).exp();
    moments[0] = Float::with_val(bits, &emt - &emt2);
    let split = recurrence_split(t, kmax);
    for k in 1..=split {
        let prev = Float::with_val(bits, &moments[k - 1] * k as u32);
        moments[k] = Float::with_val(bits, &pw[k] - &prev);
    }
    if kmax > split {
        let mut a = Float::with_val(bits, emt2 * tt.clone().pow(kmax as u32 + 1));
        let mut sum = Float::new(bits);
        let mut m: u32 = 0;
        let eps = Float::with_val(bits, Float::i_exp(1, -(bits as i32)));
        loop {
            let term = Float::with_val(bits, &a / (kmax as u32 + m + 1));
            sum += &term;
            if a.is_zero() || term <= Float::with_val(bits, &sum * &eps) {
                break;
            }
            m += 1;
            a *= &tt;
            a /= m;
        }
        moments[kmax] = sum;
        for k in ((split + 1)..kmax).rev() {
            let diff = Float::with_val(bits, &pw[k + 1] - &moments[k + 1]);
            moments[k] = diff / (k as u32 + 1);
        }
    }

    let binom = binomial_rows(smax);
    let mut inv_fact: Vec<Float> = Vec::with_capacity(kmax.max(w1).max(w2) + 1);
    inv_fact.push(Float::with_val(bits, 1));
    for n in 1..=kmax.max(w1).max(w2) {
        inv_fact.push(Float::with_val(bits, &inv_fact[n - 1] / n as u32));
    }
    let mut tpow: Vec<Float> = Vec::with_capacity(smax + 1);
    tpow.push(Float::with_val(bits, 1));
    for l in 1..=smax {
        tpow.push(Float::with_val(bits, &tpow[l - 1] * &tt));
    }

    let mut total = Float::new(bits);
    let mut term = Float::new(bits);
    for s in 0..=smax {
        let lo = s.saturating_sub(w2 - 1);
        let hi = s.min(w1 - 1);
        let mut weight = Float::new(bits);
        for n in lo..=hi {
            weight += Float::with_val(bits, &inv_fact[n] * &inv_fact[s - n]);
        }
        let mut inner = Float::new(bits);
        for l in 0..=s {
            term.assign_mul(&tpow[l], &moments[s - l + w0 - 1]);
            // C(s, l) ≤ C(38, 19) < 2^53 for the supported phase counts
            term *= binom[s][l];
            if (s - l) % 2 == 0 {
                inner += &term;
            } else {
                inner -= &term;
            }
        }
        total += Float::with_val(bits, &weight * &inner);
    }
    total *= &inv_fact[w0 - 1];

    let mut tail = Float::new(bits);
    let mut tail_term = emt;
    tail += &tail_term;
    for n in 1..w0 {
        tail_term *= &tt;
        tail_term /= n as u32;
        tail += &tail_term;
    }
    total += tail;
    total.to_f64()
}

trait AssignMul {
    fn assign_mul(&mut self, a: &Float, b: &Float);
}

impl AssignMul for Float {
    fn assign_mul(&mut self, a: &Float, b: &Float) {
        use rug::Assign;
        self.assign(a * b);
    }
}
