//! Scalar numerics shared by every loss: stable log-sum-exp, softmax, and
//! the standard normal CDF.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Floor applied before every logarithm of a probability.
pub const LOG_CLAMP: f64 = 1e-12;

/// `ln(LOG_CLAMP)`.
pub fn log_clamp_floor() -> f64 {
    libm::log(LOG_CLAMP)
}

/// Max-shifted `ln Σ exp(x_i)`.
///
/// Exact for constant rows: `[c, c]` yields `c + ln 2` without overflow.
pub fn logsumexp(row: &[f64]) -> Result<f64> {
    if row.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInput("logsumexp"));
    }
    Ok(logsumexp_unchecked(row))
}

pub(crate) fn logsumexp_unchecked(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp_unchecked(logits);
    logits.iter().map(|&z| libm::exp(z - lse)).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp_unchecked(logits);
    logits.iter().map(|&z| z - lse).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Standard normal CDF, `Φ(z) = erfc(-z/√2) / 2`.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `uᵀ Σ u` for a row-major `d×d` matrix.
pub fn quad_form(u: &[f64], sigma: &[f64]) -> f64 {
    let d = u.len();
    let mut acc = 0.0;
    for r in 0..d {
        if u[r] == 0.0 {
            continue;
        }
        let row = &sigma[r * d..(r + 1) * d];
        acc += u[r] * dot(row, u);
    }
    acc
}
