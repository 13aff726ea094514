use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn overflow() -> Error {
    Error::Overflow("alternating binomial identity".into())
}

/// `sum_i C(k, i) (-1)^i (k - 2i)^k` and `2^k k!`, both in checked 64-bit
/// integer arithmetic. The two sides agree for every valid `k`.
pub fn identity_f2(k: usize) -> Result<(i64, i64)> {
    if !(1..=15).contains(&k) {
        return Err(Error::OutOfRange(format!("identity needs 1 <= k <= 15, got {k}")));
    }
    let k_i = k as i64;
    let mut lhs: i64 = 0;
    let mut binom: i64 = 1;
    for i in 0..=k_i {
        let base = k_i - 2 * i;
        let power = base.checked_pow(k as u32).ok_or_else(overflow)?;
        let term = binom.checked_mul(power).ok_or_else(overflow)?;
        lhs = if i % 2 == 0 {
            lhs.checked_add(term)
        } else {
            lhs.checked_sub(term)
        }
        .ok_or_else(overflow)?;
        binom = binom.checked_mul(k_i - i).ok_or_else(overflow)? / (i + 1);
    }
    let mut rhs: i64 = 1 << k;
    for i in 2..=k_i {
        rhs = rhs.checked_mul(i).ok_or_else(overflow)?;
    }
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F3Bound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn ln_binomial(k: usize, i: usize) -> f64 {
    let ln_fact = |n: usize| (1..=n).map(|v| (v as f64).ln()).sum::<f64>();
    ln_fact(k) - ln_fact(i) - ln_fact(k - i)
}

/// `sum_i C(k, i) |k - 2i|^k` against `2 k^k (1 + e^-2)^k`, accumulated in
/// the log domain.
pub fn bound_f3(k: usize) -> Result<F3Bound> {
    if !(1..=30).contains(&k) {
        return Err(Error::OutOfRange(format!("bound needs 1 <= k <= 30, got {k}")));
    }
    let kf = k as f64;
    let log_terms: Vec<f64> = (0..=k)
        .filter(|&i| 2 * i != k)
        .map(|i| ln_binomial(k, i) + kf * ((k as f64 - 2.0 * i as f64).abs()).ln())
        .collect();
    let peak = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_lhs = peak + log_terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln();
    let ln_rhs = 2f64.ln() + kf * kf.ln() + kf * (1.0 + (-2f64).exp()).ln();
    Ok(F3Bound {
        lhs: ln_lhs.exp(),
        rhs: ln_rhs.exp(),
        holds: ln_lhs <= ln_rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Both sides of the identity in 128-bit arithmetic.
    fn wide_identity(k: u32) -> (i128, i128) {
        let mut lhs = 0i128;
        let mut binom = 1i128;
        for i in 0..=k as i128 {
            let term = binom * (k as i128 - 2 * i).pow(k);
            lhs += if i % 2 == 0 { term } else { -term };
            binom = binom * (k as i128 - i) / (i + 1);
        }
        let rhs = (1i128 << k) * (1..=k as i128).product::<i128>();
        (lhs, rhs)
    }

    #[test]
    fn identity_small_cases() {
        assert_eq!(identity_f2(1).unwrap(), (2, 2));
        assert_eq!(identity_f2(2).unwrap(), (8, 8));
        assert_eq!(identity_f2(10).unwrap(), (3_715_891_200, 3_715_891_200));
    }

    #[test]
    fn identity_matches_wide_arithmetic() {
        for k in 1..=15 {
            let (lhs, rhs) = identity_f2(k).unwrap();
            assert_eq!(lhs, rhs, "k = {k}");
            assert_eq!((lhs as i128, rhs as i128), wide_identity(k as u32));
        }
        assert!(identity_f2(0).is_err());
        assert!(identity_f2(16).is_err());
    }

    #[test]
    fn bound_small_cases() {
        let b1 = bound_f3(1).unwrap();
        assert!((b1.lhs - 2.0).abs() < 1e-12);
        assert!((b1.rhs - 2.0 * (1.0 + (-2f64).exp())).abs() < 1e-12);
        assert!(b1.holds);
        let b2 = bound_f3(2).unwrap();
        assert!((b2.lhs - 8.0).abs() < 1e-12);
        assert!((b2.rhs - 10.32).abs() < 0.01);
        assert!(bound_f3(0).is_err());
        assert!(bound_f3(31).is_err());
    }

    #[test]
    fn bound_lhs_matches_integer_sum() {
        for k in 1..=20u32 {
            let exact: u128 = (0..=k)
                .map(|i| {
                    let binom = (0..i).fold(1u128, |acc, t| acc * (k - t) as u128 / (t + 1) as u128);
                    binom * ((k as i64 - 2 * i as i64).unsigned_abs() as u128).pow(k)
                })
                .sum();
            let b = bound_f3(k as usize).unwrap();
            assert!((b.lhs - exact as f64).abs() <= 1e-12 * exact as f64, "k = {k}");
            assert!(b.holds);
        }
        for k in 21..=30 {
            assert!(bound_f3(k).unwrap().holds);
        }
    }
}
