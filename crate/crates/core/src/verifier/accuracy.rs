use serde::Serialize;

use crate::error::{invalid, Result};
use crate::mechanisms::{
    exponential_probabilities, exponential_utility_bound, laplace_error_bound, randomized_response_bit,
    rr_accuracy_bound, rr_mean_estimator, ScoreFunction, RRParams,
};
use crate::sampling::{sample_index, sample_laplace, RngStream};

use super::{par_chunks, Verdict};

/// Empirical check of an accuracy theorem of the form
/// `Pr[error exceeds bound] <= beta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub check: String,
    pub trials: u64,
    pub beta: f64,
    /// The error threshold under test (alpha, utility gap, ...).
    pub threshold: f64,
    pub failures: u64,
    pub empirical_rate: f64,
    /// Exact failure probability, when it is known in closed form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_rate: Option<f64>,
    /// Largest empirical rate accepted: `beta + 3` binomial standard errors.
    pub max_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_dev: Option<f64>,
    pub verdict: Verdict,
}

fn rate_ceiling(beta: f64, trials: u64) -> f64 {
    beta + 3.0 * (beta * (1.0 - beta) / trials as f64).sqrt()
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    Ok(())
}

/// Draws `trials` noise vectors `Lap(sens/eps)^d` and counts how often the
/// largest coordinate error reaches `alpha(beta)`. For `d = 1` the bound is
/// tight and the exact rate is `beta`; in general it is `1 - (1 - beta/d)^d`.
pub fn check_laplace_accuracy(
    sens: f64,
    eps: f64,
    beta: f64,
    d: usize,
    trials: u64,
    rng: &RngStream,
) -> Result<AccuracyReport> {
    check_trials(trials)?;
    let alpha = laplace_error_bound(d, sens, eps, beta)?;
    let scale = sens / eps;
    let failures: u64 = par_chunks(trials, rng, |len, r| -> Result<u64> {
        let mut fails = 0;
        for _ in 0..len {
            let mut worst = 0.0_f64;
            for _ in 0..d {
                worst = worst.max(sample_laplace(scale, r)?.abs());
            }
            fails += (worst >= alpha) as u64;
        }
        Ok(fails)
    })
    .into_iter()
    .sum::<Result<u64>>()?;
    let empirical_rate = failures as f64 / trials as f64;
    let max_rate = rate_ceiling(beta, trials);
    Ok(AccuracyReport {
        check: format!("laplace accuracy (d={d}, eps={eps}, sens={sens})"),
        trials,
        beta,
        threshold: alpha,
        failures,
        empirical_rate,
        exact_rate: Some(1.0 - (1.0 - beta / d as f64).powi(d as i32)),
        max_rate,
        mean_estimate: None,
        standard_error: None,
        std_dev: None,
        verdict: if empirical_rate <= max_rate { Verdict::Pass } else { Verdict::Fail },
    })
}

/// Samples the exponential mechanism and counts outputs scoring below
/// `OPT - gap(beta)`. The exact failure probability is reported alongside.
pub fn check_exponential_utility<D: Sync, H: Sync>(
    sf: &ScoreFunction<D, H>,
    dataset: &D,
    eps: f64,
    beta: f64,
    trials: u64,
    rng: &RngStream,
) -> Result<AccuracyReport> {
    check_trials(trials)?;
    let gap = exponential_utility_bound(sf.sensitivity(), sf.outcomes().len(), eps, beta)?;
    let probs = exponential_probabilities(sf, dataset, eps)?;
    let scores = sf.scores(dataset);
    let opt = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bad: Vec<bool> = scores.iter().map(|s| *s < opt - gap).collect();
    // fold from +0.0: an empty f64 sum is -0.0
    let exact = probs.iter().zip(&bad).filter(|(_, b)| **b).fold(0.0, |acc, (p, _)| acc + p);
    let failures: u64 = par_chunks(trials, rng, |len, r| {
        (0..len).filter(|_| bad[sample_index(&probs, r)]).count() as u64
    })
    .into_iter()
    .sum();
    let empirical_rate = failures as f64 / trials as f64;
    let max_rate = rate_ceiling(beta, trials);
    Ok(AccuracyReport {
        check: format!("exponential utility (|H|={}, eps={eps})", sf.outcomes().len()),
        trials,
        beta,
        threshold: gap,
        failures,
        empirical_rate,
        exact_rate: Some(exact),
        max_rate,
        mean_estimate: None,
        standard_error: None,
        std_dev: None,
        verdict: if empirical_rate <= max_rate { Verdict::Pass } else { Verdict::Fail },
    })
}

/// Repeats randomized response on `n` bits with true mean `round(mu n)/n` and
/// checks that the estimator is unbiased (mean within 3 standard errors) and
/// that the Chebyshev bound's failure rate stays at or below `beta`.
pub fn check_rr_estimator(
    mu: f64,
    n: usize,
    eps: f64,
    beta: f64,
    repetitions: u64,
    rng: &RngStream,
) -> Result<AccuracyReport> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(invalid(format!("mu must lie in [0, 1], got {mu}")));
    }
    if repetitions < 2 {
        return Err(invalid("need at least 2 repetitions"));
    }
    let params = RRParams::new(eps)?;
    let alpha = rr_accuracy_bound(n, &params, beta)?;
    let ones = (mu * n as f64).round() as usize;
    let truth = ones as f64 / n as f64;
    let bits: Vec<bool> = (0..n).map(|i| i < ones).collect();
    let estimates: Vec<f64> = par_chunks(repetitions, rng, |len, r| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(len as usize);
        let mut responses = vec![false; n];
        for _ in 0..len {
            for (resp, &x) in responses.iter_mut().zip(&bits) {
                *resp = randomized_response_bit(x, &params, r);
            }
            out.push(rr_mean_estimator(&responses, &params)?);
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?
    .concat();
    let reps = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / reps;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1.0)).sqrt();
    let se = sd / reps.sqrt();
    let failures = estimates.iter().filter(|e| (*e - truth).abs() > alpha).count() as u64;
    let empirical_rate = failures as f64 / reps;
    let unbiased = (mean - truth).abs() <= 3.0 * se;
    Ok(AccuracyReport {
        check: format!("randomized response estimator (mu={truth}, n={n}, eps={eps})"),
        trials: repetitions,
        beta,
        threshold: alpha,
        failures,
        empirical_rate,
        exact_rate: None,
        max_rate: beta,
        mean_estimate: Some(mean),
        standard_error: Some(se),
        std_dev: Some(sd),
        verdict: if unbiased && empirical_rate <= beta { Verdict::Pass } else { Verdict::Fail },
    })
}
