//! Checks the differential-privacy inequality
//! `Pr[M(D) in S] <= e^eps Pr[M(D') in S] + delta`, exactly where output
//! spaces are finite and statistically otherwise, and checks the accuracy
//! theorems of the mechanisms empirically.

mod accuracy;
mod stats;
pub mod suites;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, DpError, Result};
use crate::sampling::RngStream;

pub use accuracy::{check_exponential_utility, check_laplace_accuracy, check_rr_estimator, AccuracyReport};
pub use stats::{beta_quantile, clopper_pearson, regularized_incomplete_beta};

/// Confidence level of the per-bin Clopper–Pearson intervals.
pub const MC_CONFIDENCE: f64 = 0.99;
/// Minimum trials for a Monte Carlo check.
pub const MC_MIN_TRIALS: u64 = 10_000;
/// Default number of equal-probability event bins.
pub const MC_DEFAULT_BINS: usize = 40;
/// Bins with fewer pooled hits than this are too thin to certify a pass.
pub const MC_MIN_BIN_HITS: u64 = 30;
/// Tolerance on the exact log-ratio comparison.
pub const EXACT_TOLERANCE: f64 = 1e-9;

const CHUNK: u64 = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DPTestReport {
    pub mechanism: String,
    pub pairs_tested: usize,
    /// Largest observed `|ln(p(S|D) / p(S|D'))|`; infinite when some outcome
    /// is possible on one side only.
    pub max_log_ratio: f64,
    pub epsilon_claimed: f64,
    pub delta_claimed: f64,
    pub method: Method,
    pub verdict: Verdict,
    pub trials: u64,
    pub confidence: f64,
}

fn log_ratio(p: f64, q: f64) -> f64 {
    match (p > 0.0, q > 0.0) {
        (false, false) => 0.0,
        (true, true) => (p.ln() - q.ln()).abs(),
        _ => f64::INFINITY,
    }
}

/// Exact check for mechanisms with a finite output space.
///
/// `distribution` maps a dataset to its output probabilities. The report's
/// `max_log_ratio` is the maximum over pairs and outcomes of
/// `|ln p(h|D) - ln p(h|D')|`, which covers both directions; the verdict is
/// pass iff it is at most `eps + 1e-9`.
pub fn exact_dp_check<D, F, I>(mechanism: &str, distribution: F, pairs: I, eps: f64) -> Result<DPTestReport>
where
    F: Fn(&D) -> Result<Vec<f64>>,
    I: IntoIterator<Item = (D, D)>,
{
    if !(eps >= 0.0) {
        return Err(invalid(format!("epsilon must be >= 0, got {eps}")));
    }
    let mut max = 0.0_f64;
    let mut pairs_tested = 0;
    for (d, d_prime) in pairs {
        let p = distribution(&d)?;
        let q = distribution(&d_prime)?;
        if p.len() != q.len() {
            return Err(invalid(format!("outcome spaces differ in size ({} vs {})", p.len(), q.len())));
        }
        max = p.iter().zip(&q).map(|(&a, &b)| log_ratio(a, b)).fold(max, f64::max);
        pairs_tested += 1;
    }
    Ok(DPTestReport {
        mechanism: mechanism.to_owned(),
        pairs_tested,
        max_log_ratio: max,
        epsilon_claimed: eps,
        delta_claimed: 0.0,
        method: Method::Exact,
        verdict: if max <= eps + EXACT_TOLERANCE { Verdict::Pass } else { Verdict::Fail },
        trials: 0,
        confidence: 1.0,
    })
}

/// How the real line is cut into events for a Monte Carlo check.
#[derive(Debug, Clone, PartialEq)]
pub enum EventBins {
    /// Interior cut points; bins are `(-inf, c0), [c0, c1), ..., [c_last, inf)`.
    Edges(Vec<f64>),
    /// `k` bins of (roughly) equal probability under `D`, cut from a pilot
    /// sample drawn on a separate stream.
    Quantiles(usize),
}

/// Runs `f(chunk_len, rng)` over fixed-size chunks of `trials`, each chunk on
/// its own substream, so results do not depend on thread scheduling.
pub(crate) fn par_chunks<T, F>(trials: u64, rng: &RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut RngStream) -> T + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|i| {
            let len = CHUNK.min(trials - i * CHUNK);
            f(len, &mut rng.substream(i))
        })
        .collect()
}

fn bin_counts<D, F>(runner: &F, d: &D, cuts: &[f64], trials: u64, rng: &RngStream) -> Vec<u64>
where
    D: Sync,
    F: Fn(&D, &mut RngStream) -> f64 + Sync,
{
    par_chunks(trials, rng, |len, r| {
        let mut counts = vec![0u64; cuts.len() + 1];
        for _ in 0..len {
            let y = runner(d, r);
            counts[cuts.partition_point(|c| *c <= y)] += 1;
        }
        counts
    })
    .into_iter()
    .fold(vec![0u64; cuts.len() + 1], |mut acc, c| {
        acc.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        acc
    })
}

/// Monte Carlo check of one pair `(D, D')` for a mechanism with real output.
///
/// Each side is run `trials` times and outputs are counted per event bin. With
/// 99% Clopper–Pearson intervals per bin and side, and both directions tested:
///
/// * **fail** if some bin's lower bound on one side exceeds
///   `e^eps * (upper bound on the other side) + delta`, a significant violation;
/// * **pass** if no bin fails, every point estimate satisfies the inequality to
///   within two combined interval widths, and every bin holds at least
///   [`MC_MIN_BIN_HITS`] pooled hits;
/// * **inconclusive** otherwise.
#[allow(clippy::too_many_arguments)]
pub fn mc_dp_check<D, F>(
    mechanism: &str,
    runner: F,
    d: &D,
    d_prime: &D,
    bins: &EventBins,
    eps: f64,
    delta: f64,
    trials: u64,
    rng: &RngStream,
) -> Result<DPTestReport>
where
    D: Sync,
    F: Fn(&D, &mut RngStream) -> f64 + Sync,
{
    if trials < MC_MIN_TRIALS {
        return Err(invalid(format!("Monte Carlo checks need at least {MC_MIN_TRIALS} trials, got {trials}")));
    }
    if !(eps >= 0.0) || !eps.is_finite() || !(0.0..=1.0).contains(&delta) {
        return Err(invalid(format!("bad privacy parameters ({eps}, {delta})")));
    }
    let cuts = match bins {
        EventBins::Edges(cuts) => {
            if cuts.is_empty() || cuts.windows(2).any(|w| !(w[0] < w[1])) || cuts.iter().any(|c| !c.is_finite()) {
                return Err(invalid("event bins need strictly increasing finite cut points (>= 2 bins)"));
            }
            cuts.clone()
        }
        EventBins::Quantiles(k) => {
            if *k < 2 {
                return Err(invalid("need at least 2 event bins"));
            }
            let pilot_n = trials.min(200_000);
            let mut pilot: Vec<f64> = par_chunks(pilot_n, &rng.substream(2), |len, r| {
                (0..len).map(|_| runner(d, r)).collect::<Vec<_>>()
            })
            .concat();
            pilot.sort_by(f64::total_cmp);
            let mut cuts: Vec<f64> =
                (1..*k).map(|j| pilot[(j as u64 * pilot_n / *k as u64) as usize]).collect();
            cuts.dedup();
            // a cut at the minimum leaves the first bin empty
            if cuts.first() == pilot.first() {
                cuts.remove(0);
            }
            if cuts.is_empty() {
                return Err(DpError::InvalidParameter(
                    "degenerate event bins: the pilot sample has a single value".into(),
                ));
            }
            cuts
        }
    };

    let a = bin_counts(&runner, d, &cuts, trials, &rng.substream(0));
    let b = bin_counts(&runner, d_prime, &cuts, trials, &rng.substream(1));
    let bound = eps.exp();
    let n = trials as f64;
    let mut max_log_ratio = 0.0_f64;
    let mut failed = false;
    let mut certified = true;
    for (&ka, &kb) in a.iter().zip(&b) {
        let (pa, pb) = (ka as f64 / n, kb as f64 / n);
        max_log_ratio = max_log_ratio.max(log_ratio(pa, pb));
        let (a_lo, a_hi) = clopper_pearson(ka, trials, MC_CONFIDENCE)?;
        let (b_lo, b_hi) = clopper_pearson(kb, trials, MC_CONFIDENCE)?;
        let width = (a_hi - a_lo) + bound * (b_hi - b_lo);
        for (p, lo, q, q_hi) in [(pa, a_lo, pb, b_hi), (pb, b_lo, pa, a_hi)] {
            if lo > bound * q_hi + delta {
                failed = true;
            }
            if p - (bound * q + delta) > 2.0 * width {
                certified = false;
            }
        }
        if ka + kb < MC_MIN_BIN_HITS {
            certified = false;
        }
    }
    let verdict = if failed {
        Verdict::Fail
    } else if certified {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(DPTestReport {
        mechanism: mechanism.to_owned(),
        pairs_tested: 1,
        max_log_ratio,
        epsilon_claimed: eps,
        delta_claimed: delta,
        method: Method::MonteCarlo,
        verdict,
        trials,
        confidence: MC_CONFIDENCE,
    })
}

/// Worst verdict over several reports (fail > inconclusive > pass).
pub fn worst_verdict<I: IntoIterator<Item = Verdict>>(verdicts: I) -> Verdict {
    verdicts.into_iter().max().unwrap_or(Verdict::Pass)
}
