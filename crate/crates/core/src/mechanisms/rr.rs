//! Randomized response: the epsilon-parameterised local mechanism and the
//! original fair-coin survey protocol.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sampling::RngStream;

use super::check_beta;

/// Keep probability `p = e^eps / (1 + e^eps)` and its complement, both computed
/// without cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RRParams {
    pub epsilon: f64,
    /// Probability of reporting the true bit.
    pub keep: f64,
    /// `1 - keep`.
    pub flip: f64,
}

impl RRParams {
    /// `eps = 0` gives a fair coin; `eps = +inf` reports the truth.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(invalid(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let keep = 1.0 / (1.0 + (-epsilon).exp());
        let flip = 1.0 / (1.0 + epsilon.exp());
        Ok(Self { epsilon, keep, flip })
    }

    /// `2p - 1`, the attenuation of the mean.
    pub fn contrast(&self) -> f64 {
        self.keep - self.flip
    }
}

pub fn randomized_response_bit(x: bool, params: &RRParams, rng: &mut RngStream) -> bool {
    if rng.uniform() < params.keep {
        x
    } else {
        !x
    }
}

/// `[Pr[out = 0], Pr[out = 1]]` for input `x`.
pub fn rr_output_distribution(x: bool, params: &RRParams) -> [f64; 2] {
    if x {
        [params.flip, params.keep]
    } else {
        [params.keep, params.flip]
    }
}

/// Fair-coin protocol: tails answers truthfully; heads flips again and answers
/// yes on heads, no on tails.
///
/// `Pr[yes] = x/2 + 1/4`, the same output law as [`randomized_response_bit`]
/// with `p = 3/4` (`eps = ln 3`).
pub fn warner_rr(x: bool, rng: &mut RngStream) -> bool {
    let first_heads = rng.next_u64() >> 63 == 1;
    if !first_heads {
        x
    } else {
        rng.next_u64() >> 63 == 1
    }
}

pub fn warner_output_distribution(x: bool) -> [f64; 2] {
    if x {
        [0.25, 0.75]
    } else {
        [0.75, 0.25]
    }
}

/// `E[yes] = 3/4 n(has) + 1/4 n(does not)`.
pub fn warner_expected_yes(n_has: u64, n_not: u64) -> f64 {
    0.75 * n_has as f64 + 0.25 * n_not as f64
}

/// Inverts the expected yes-rate: `pi = 2 yes/n - 1/2`.
pub fn warner_estimate(yes: u64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("no responses"));
    }
    Ok(2.0 * yes as f64 / n as f64 - 0.5)
}

/// Unbiased estimate of the true mean from randomized bits:
/// `(1 / ((2p - 1) n)) * sum_i (M_i - (1 - p))`.
pub fn rr_mean_estimator(responses: &[bool], params: &RRParams) -> Result<f64> {
    if responses.is_empty() {
        return Err(invalid("no responses"));
    }
    if params.epsilon == 0.0 {
        return Err(invalid("estimator undefined at eps = 0 (2p - 1 = 0)"));
    }
    let n = responses.len() as f64;
    let ones = responses.iter().filter(|b| **b).count() as f64;
    Ok((ones - n * params.flip) / (params.contrast() * n))
}

/// Chebyshev bound: `|X - mu| <= sqrt(1/beta) / (2 |2p - 1| sqrt n)` with
/// probability at least `1 - beta`. Infinite at `eps = 0`.
pub fn rr_accuracy_bound(n: usize, params: &RRParams, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    Ok((1.0 / beta).sqrt() / (2.0 * params.contrast().abs() * (n as f64).sqrt()))
}

/// Upper bound `1 / (4 (2p - 1)^2 n)` on the estimator's variance.
pub fn rr_estimator_variance_bound(n: usize, params: &RRParams) -> f64 {
    1.0 / (4.0 * params.contrast().powi(2) * n as f64)
}

/// Small-eps sample size `n ~ 1 / (eps^2 alpha^2)` for accuracy `alpha`.
pub fn rr_sample_size(eps: f64, alpha: f64) -> Result<f64> {
    if !(eps > 0.0) || !(alpha > 0.0) {
        return Err(invalid("eps and alpha must be > 0"));
    }
    Ok(1.0 / (eps * eps * alpha * alpha))
}
