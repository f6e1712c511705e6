//! Bessel function of the first kind, order zero.
//!
//! Only `1 − J0(x)` is exposed since that is what the angular average of
//! `1 − cos(ξ·y)` over the circle reduces to. Power series below
//! [`SERIES_LIMIT`], Hankel asymptotic expansion above it.

use std::f64::consts::{FRAC_PI_4, PI};

const SERIES_LIMIT: f64 = 12.0;

/// `1 − J0(x)` without cancellation near the origin.
pub(crate) fn one_minus_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_LIMIT {
        // 1 − J0 = −Σ_{k≥1} (−q)^k / (k!)², q = x²/4
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -q / (kf * kf);
            sum -= term;
            if term.abs() <= 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        1.0 - j0_asymptotic(x)
    }
}

#[cfg(test)]
pub(crate) fn j0(x: f64) -> f64 {
    1.0 - one_minus_j0(x)
}

fn j0_asymptotic(x: f64) -> f64 {
    // a_k = Π_{j=1..k} (−(2j−1)²) / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut xpow = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let kf = k as f64;
            let odd = 2.0 * kf - 1.0;
            a *= -(odd * odd) / (kf * 8.0);
            xpow *= x;
        }
        let term = a / xpow;
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        // P collects even k with sign (−1)^{k/2}, Q odd k with sign (−1)^{(k−1)/2}
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
