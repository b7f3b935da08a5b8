//! Seeded random streams, noise samplers and the normal CDF.
//!
//! Every sampler is a pure function of its parameters and the stream state.
//! Streams are ChaCha12 keyed by `seed` with the 64-bit ChaCha stream word set
//! to `stream_id`, so distinct stream ids give non-overlapping sequences that
//! can be handed to parallel tasks.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use libm::erfc;

use crate::error::{invalid, DpError, Result};

/// 2^-53: spacing of the uniform grid used for floats in [0, 1).
const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

/// Reproducible random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream, e.g. one per parallel chunk of trials.
    /// Depends only on `(seed, stream_id, index)`, never on how much of the
    /// parent has been consumed.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(self.stream_id)), index)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the 2^-53 grid in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * UNIT
    }

    /// Uniform on the midpoints `(k + 1/2) 2^-53`, so strictly inside `(0, 1)`
    /// and never exactly `1/2`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * UNIT
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Zero-mean Laplace sample with scale `b`, by inverse CDF.
///
/// `u` is uniform in `(-1/2, 1/2)` on a 2^-53 grid (endpoints excluded), so the
/// largest magnitude returned is `b * 53 ln 2`: tails beyond that are truncated.
/// `scale == 0` returns 0 without consuming randomness.
pub fn sample_laplace(scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(invalid(format!("Laplace scale must be finite and >= 0, got {scale}")));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let u = rng.uniform_open() - 0.5;
    Ok(-scale * u.signum() * (-2.0 * u.abs()).ln_1p())
}

/// Zero-mean normal sample with standard deviation `sigma` (Marsaglia polar
/// method; the second variate of each accepted pair is discarded).
/// `sigma == 0` returns 0 without consuming randomness.
pub fn sample_gaussian(sigma: f64, rng: &mut RngStream) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("Gaussian sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    loop {
        let x = 2.0 * rng.uniform() - 1.0;
        let y = 2.0 * rng.uniform() - 1.0;
        let s = x * x + y * y;
        if s > 0.0 && s < 1.0 {
            return Ok(sigma * x * (-2.0 * s.ln() / s).sqrt());
        }
    }
}

pub fn sample_bernoulli(p: f64, rng: &mut RngStream) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("Bernoulli probability must lie in [0, 1], got {p}")));
    }
    Ok(rng.uniform() < p)
}

/// Normalised probabilities `exp(w_i - logsumexp(w))`.
///
/// `-inf` entries are excluded outcomes and get probability exactly 0.
pub fn log_weight_probabilities(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.is_empty() {
        return Err(invalid("log-weight vector is empty"));
    }
    if let Some(w) = log_weights.iter().find(|w| w.is_nan() || **w == f64::INFINITY) {
        return Err(invalid(format!("log-weights must be finite or -inf, got {w}")));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(DpError::NoValidOutcome);
    }
    let shifted: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    Ok(shifted.into_iter().map(|x| x / total).collect())
}

/// Draws index `i` with probability proportional to `exp(log_weights[i])`.
pub fn sample_from_log_weights(log_weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    let probs = log_weight_probabilities(log_weights)?;
    Ok(sample_index(&probs, rng))
}

/// Inverse-CDF draw from an already normalised probability vector.
pub(crate) fn sample_index(probs: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left the cumulative sum a hair below 1.
    last_positive
}

/// Standard normal CDF `Phi(t)`, evaluated as `erfc(-t / sqrt 2) / 2` so that
/// the lower tail keeps full relative precision.
pub fn std_normal_cdf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

/// Upper-tail quantile: the `t` with `1 - Phi(t) = q`, for `q` in `(0, 1)`.
pub fn std_normal_upper_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("tail probability must lie in (0, 1), got {q}")));
    }
    let tail = |t: f64| std_normal_cdf(-t);
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_reproduce() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::new(42, 8);
        let mut a = RngStream::new(42, 7);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn substream_ignores_parent_position() {
        let a = RngStream::new(1, 2);
        let mut b = RngStream::new(1, 2);
        b.next_u64();
        assert_eq!(a.substream(5).next_u64(), b.substream(5).next_u64());
        assert_ne!(a.substream(5).next_u64(), a.substream(6).next_u64());
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let mut a = RngStream::new(9, 0);
        let mut b = RngStream::new(9, 1);
        let n = 100_000;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.uniform();
            let y = b.uniform();
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let n = n as f64;
        let cov = sxy / n - sx * sy / n / n;
        let r = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
        assert!(r.abs() < 0.01, "r = {r}");
    }

    #[test]
    fn uniform_open_stays_inside() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..10_000 {
            let u = rng.uniform_open();
            assert!(u > 0.0 && u < 1.0 && u != 0.5);
        }
        // extreme grid points still give a finite Laplace draw
        let lo = 0.5 * UNIT - 0.5;
        assert!(lo > -0.5);
        assert!((-2.0 * lo.abs()).ln_1p().is_finite());
    }

    #[test]
    fn degenerate_scales() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(sample_laplace(0.0, &mut rng).unwrap(), 0.0);
        assert_eq!(sample_gaussian(0.0, &mut rng).unwrap(), 0.0);
        assert!(sample_laplace(-1.0, &mut rng).is_err());
        assert!(sample_gaussian(-1.0, &mut rng).is_err());
        assert!(sample_laplace(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn laplace_tail_matches_closed_form() {
        // Pr[|Z| >= a] = exp(-a / b); checked within 3 binomial sigma.
        let n = 1_000_000;
        let mut rng = RngStream::new(11, 0);
        let draws: Vec<f64> = (0..n).map(|_| sample_laplace(1.0, &mut rng).unwrap()).collect();
        for a in [1.0_f64, 2.0, 3.0, 20f64.ln()] {
            let p = (-a).exp();
            let hits = draws.iter().filter(|z| z.abs() >= a).count() as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits - p).abs() <= 3.0 * sd, "a={a}: {hits} vs {p}");
        }
        let p20 = draws.iter().filter(|z| z.abs() >= 20f64.ln()).count() as f64 / n as f64;
        assert!((p20 - 0.05).abs() <= 0.002);
    }

    #[test]
    fn laplace_moments() {
        let n = 1_000_000;
        let mut rng = RngStream::new(12, 0);
        let draws: Vec<f64> = (0..n).map(|_| sample_laplace(2.0, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 8.0).abs() < 0.2, "var {var}");
    }

    #[test]
    fn gaussian_cdf_point_and_variance() {
        let n = 1_000_000;
        let mut rng = RngStream::new(13, 0);
        let below = (0..n)
            .filter(|_| sample_gaussian(1.0, &mut rng).unwrap() <= 1.96)
            .count() as f64
            / n as f64;
        assert!((below - 0.975).abs() < 0.002, "{below}");

        let draws: Vec<f64> = (0..n).map(|_| sample_gaussian(3.0, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 9.0).abs() < 0.2, "var {var}");
    }

    #[test]
    fn bernoulli_rates() {
        let mut rng = RngStream::new(14, 0);
        assert!((0..1000).all(|_| !sample_bernoulli(0.0, &mut rng).unwrap()));
        assert!((0..1000).all(|_| sample_bernoulli(1.0, &mut rng).unwrap()));
        assert!(sample_bernoulli(1.1, &mut rng).is_err());
        assert!(sample_bernoulli(-0.1, &mut rng).is_err());
        let n = 1_000_000;
        let e = std::f64::consts::E;
        for p in [0.5, e / (1.0 + e)] {
            let mean = (0..n).filter(|_| sample_bernoulli(p, &mut rng).unwrap()).count() as f64
                / n as f64;
            assert!((mean - p).abs() < 0.002, "p={p}: {mean}");
        }
    }

    #[test]
    fn log_weight_sampling() {
        let mut rng = RngStream::new(15, 0);
        assert!((0..100).all(|_| sample_from_log_weights(&[0.0], &mut rng).unwrap() == 0));

        let n = 1_000_000;
        let w = [1f64.ln(), 3f64.ln()];
        let ones = (0..n).filter(|_| sample_from_log_weights(&w, &mut rng).unwrap() == 1).count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.003);

        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_from_log_weights(&[2.5, 2.5, 2.5], &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.003);
        }
    }

    #[test]
    fn log_weight_errors_and_exclusions() {
        let ninf = f64::NEG_INFINITY;
        assert!(matches!(log_weight_probabilities(&[ninf, ninf]), Err(DpError::NoValidOutcome)));
        assert!(log_weight_probabilities(&[]).is_err());
        assert!(log_weight_probabilities(&[0.0, f64::NAN]).is_err());
        assert!(log_weight_probabilities(&[0.0, f64::INFINITY]).is_err());
        let p = log_weight_probabilities(&[ninf, 0.0, ninf]).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let mut rng = RngStream::new(16, 0);
        assert!((0..1000).all(|_| sample_from_log_weights(&[ninf, 0.0], &mut rng).unwrap() == 1));
    }

    #[test]
    fn log_weights_handle_huge_magnitudes() {
        let hi = 1000.0 + 3f64.ln();
        // the gap as actually represented after rounding 1000 + ln 3
        let gap = hi - 1000.0;
        let p = log_weight_probabilities(&[1000.0, hi]).unwrap();
        assert!((p[1] - 1.0 / (1.0 + (-gap).exp())).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-12);
        let p = log_weight_probabilities(&[-1e6, -1e6]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        for t in [0.5, 1.0, 2.0, 5.0] {
            assert!((std_normal_cdf(-t) - (1.0 - std_normal_cdf(t))).abs() < 1e-15);
        }
        assert_eq!(std_normal_cdf(-60.0), 0.0);
        assert_eq!(std_normal_cdf(60.0), 1.0);
    }

    /// Composite Simpson quadrature of the standard normal density, used as an
    /// independent oracle for Phi.
    fn phi_by_quadrature(t: f64) -> f64 {
        let n = 200_000;
        let h = t / n as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(0.0) + pdf(t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    #[test]
    fn normal_cdf_against_quadrature() {
        let oracle = phi_by_quadrature(1.96);
        assert!((oracle - 0.975_002_104_851_780).abs() < 1e-13);
        assert!((std_normal_cdf(1.96) - oracle).abs() < 1e-9);
        for t in [0.3, 1.0, 2.5, 4.0] {
            assert!((std_normal_cdf(t) - phi_by_quadrature(t)).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn normal_cdf_resolves_tiny_tails() {
        // 1 - Phi(6.3613...) ~ 1e-10; relative precision must survive.
        let t = std_normal_upper_quantile(1e-10).unwrap();
        let back = std_normal_cdf(-t);
        assert!((back - 1e-10).abs() < 1e-22);
        let z = std_normal_upper_quantile(0.025).unwrap();
        assert!((z - 1.959_963_984_540_054).abs() < 1e-12);
        assert!(std_normal_upper_quantile(0.0).is_err());
    }
}
