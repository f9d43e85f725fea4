//! Small numeric helpers shared across modules.

use alloc::vec::Vec;

/// `base^exp` by binary exponentiation, the same scheme compiler runtimes use
/// for `powi`.
pub fn powi(mut base: f64, exp: i32) -> f64 {
    let recip = exp < 0;
    let mut e = exp.unsigned_abs();
    let mut r = 1.0;
    loop {
        if e & 1 == 1 {
            r *= base;
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base *= base;
    }
    if recip {
        1.0 / r
    } else {
        r
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by `n`).
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    // Shifted by the first sample, so a constant series is exactly 0.
    let x0 = xs[0];
    let n = xs.len() as f64;
    let m = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    xs.iter().map(|x| (x - x0 - m) * (x - x0 - m)).sum::<f64>() / n
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Nearest-rank percentile: the smallest sample such that at least `p`% of
/// samples are `<=` it. `p` in `(0, 100]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    let rank = libm::ceil(p / 100.0 * n as f64) as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn powi_matches_std() {
        for &b in &[0.5, 0.8, 0.999, 1e-6, 1.0, 2.5] {
            for e in 0..40 {
                let ours = powi(b, e);
                let std_pow = f64::powi(b, e);
                assert!((ours - std_pow).abs() <= 1e-15 * std_pow.abs().max(1e-300));
            }
        }
        assert_eq!(powi(2.0, -2), 0.25);
    }

    #[test]
    fn nearest_rank_percentiles() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&xs, 99.0), 99.0);
        assert_eq!(nearest_rank(&xs, 90.0), 90.0);
        assert_eq!(nearest_rank(&xs, 100.0), 100.0);
        assert_eq!(nearest_rank(&[7.0], 50.0), 7.0);
    }

    #[test]
    fn variance_and_median() {
        assert_eq!(population_variance(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(population_variance(&[0.0, 2.0]), 1.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
