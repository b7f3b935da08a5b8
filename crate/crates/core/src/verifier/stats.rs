//! Binomial confidence intervals.
//!
//! statrs's incomplete beta stops after 140 continued-fraction terms, which is
//! not enough for the `a, b ~ 10^6` shapes that million-trial bins produce, so
//! the regularised incomplete beta is evaluated here with a generous cap.

use crate::error::{invalid, Result};

const CF_MAX_ITER: usize = 1_000_000;
const CF_EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let clamp = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularised incomplete beta `I_x(a, b)` for `a, b > 0`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// The `x` with `I_x(a, b) = p`, by bisection.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if regularized_incomplete_beta(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper–Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(invalid(format!("need 0 <= successes <= trials and trials > 0, got {successes}/{trials}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 { 0.0 } else { beta_quantile(alpha / 2.0, k, n - k + 1.0) };
    let upper = if successes == trials { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k) };
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        for x in [0.01, 0.3, 0.77, 0.999] {
            assert!((regularized_incomplete_beta(1.0, 1.0, x) - x).abs() < 1e-14);
            assert!((regularized_incomplete_beta(3.0, 1.0, x) - x.powi(3)).abs() < 1e-14);
            assert!((regularized_incomplete_beta(1.0, 4.0, x) - (1.0 - (1.0 - x).powi(4))).abs() < 1e-14);
        }
    }

    /// `P[Bin(n, p) >= k] = I_p(k, n - k + 1)`; the left side is summed from
    /// pmf ratios and normalised, so no gamma functions are involved.
    fn upper_tail_by_summation(n: u64, p: f64, k: u64) -> f64 {
        let mode = ((n + 1) as f64 * p).floor() as u64;
        let mut pmf = vec![0.0; n as usize + 1];
        pmf[mode as usize] = 1.0;
        let r = p / (1.0 - p);
        for j in mode..n {
            pmf[j as usize + 1] = pmf[j as usize] * (n - j) as f64 / (j + 1) as f64 * r;
        }
        for j in (1..=mode).rev() {
            pmf[j as usize - 1] = pmf[j as usize] * j as f64 / (n - j + 1) as f64 / r;
        }
        let total: f64 = pmf.iter().sum();
        pmf[k as usize..].iter().sum::<f64>() / total
    }

    #[test]
    fn binomial_identity_small_and_large() {
        for (n, p, k) in [(50, 0.3, 10), (50, 0.3, 20), (200, 0.05, 3), (1_000_000, 0.025, 25_100)] {
            let oracle = upper_tail_by_summation(n, p, k);
            let ib = regularized_incomplete_beta(k as f64, (n - k + 1) as f64, p);
            assert!((ib - oracle).abs() < 1e-8 * oracle.max(1e-3), "n={n} k={k}: {ib} vs {oracle}");
        }
    }

    #[test]
    fn clopper_pearson_edges() {
        // k = 0: upper = 1 - (alpha/2)^(1/n); k = n: lower = (alpha/2)^(1/n)
        let (lo, hi) = clopper_pearson(0, 10, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-12);
        let (lo, hi) = clopper_pearson(10, 10, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025f64.powf(0.1)).abs() < 1e-12);
        assert!(clopper_pearson(3, 2, 0.9).is_err());
        assert!(clopper_pearson(0, 0, 0.9).is_err());
        assert!(clopper_pearson(1, 2, 1.0).is_err());
    }

    #[test]
    fn clopper_pearson_covers_and_tightens() {
        let (lo, hi) = clopper_pearson(25_000, 1_000_000, 0.99).unwrap();
        assert!(lo < 0.025 && 0.025 < hi);
        // roughly +-2.576 binomial sd
        let sd = (0.025f64 * 0.975 / 1e6).sqrt();
        assert!(((hi - lo) / (2.0 * 2.576 * sd) - 1.0).abs() < 0.01);
        // defining equations of the interval ends
        assert!((regularized_incomplete_beta(25_000.0, 975_001.0, lo) - 0.005).abs() < 1e-9);
        assert!((regularized_incomplete_beta(25_001.0, 975_000.0, hi) - 0.995).abs() < 1e-9);
    }
}
