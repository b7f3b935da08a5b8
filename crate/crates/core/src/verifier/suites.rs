//! Ready-made verification suites for every shipped mechanism, plus the
//! deliberately broken Laplace fixture used to show the verifier can fail.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, DpError, Result};
use crate::mechanisms::{
    exponential_probabilities, gaussian_sigma_analytic, gaussian_sigma_classic, laplace_log_density,
    randomized_response_bit, rr_output_distribution, warner_output_distribution, RRParams, ScoreFunction,
};
use crate::sampling::{sample_from_log_weights, sample_gaussian, sample_laplace, RngStream};

use super::{
    check_exponential_utility, check_laplace_accuracy, check_rr_estimator, exact_dp_check, mc_dp_check,
    worst_verdict, AccuracyReport, DPTestReport, EventBins, Method, Verdict, MC_DEFAULT_BINS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Laplace,
    Gaussian,
    Exponential,
    Rr,
    All,
}

impl FromStr for Suite {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Suite::Laplace),
            "gaussian" => Ok(Suite::Gaussian),
            "exponential" => Ok(Suite::Exponential),
            "rr" => Ok(Suite::Rr),
            "all" => Ok(Suite::All),
            other => Err(invalid(format!(
                "unknown suite `{other}` (laplace, gaussian, exponential, rr, all)"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Laplace => "laplace",
            Suite::Gaussian => "gaussian",
            Suite::Exponential => "exponential",
            Suite::Rr => "rr",
            Suite::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SuiteReport {
    Privacy(DPTestReport),
    Accuracy(AccuracyReport),
}

impl SuiteReport {
    pub fn verdict(&self) -> Verdict {
        match self {
            SuiteReport::Privacy(r) => r.verdict,
            SuiteReport::Accuracy(r) => r.verdict,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub trials: u64,
    pub seed: u64,
    /// Replace the Laplace mechanism by the half-scale fixture.
    pub broken_laplace: bool,
}

/// Epsilon used by the Monte Carlo checks of numeric mechanisms.
pub const SUITE_EPSILON: f64 = 0.5;
pub const SUITE_DELTA: f64 = 1e-5;
/// Exact count on `D`; `D'` has one more matching record.
const COUNT: f64 = 100.0;

/// Laplace noise at scale `sens / (2 eps)`: only `2 eps`-DP, so it must fail an
/// `eps` check.
pub fn broken_laplace(value: f64, sens: f64, eps: f64, rng: &mut RngStream) -> f64 {
    value + sample_laplace(sens / (2.0 * eps), rng).expect("positive scale")
}

/// Max of `|ln p_D(x) - ln p_D'(x)|` over `grid` for two densities; passes iff
/// it stays within `eps + 1e-12`.
pub fn density_ratio_check(
    mechanism: &str,
    log_density: impl Fn(f64) -> f64,
    log_density_prime: impl Fn(f64) -> f64,
    grid: &[f64],
    eps: f64,
) -> DPTestReport {
    let max = grid
        .iter()
        .map(|&x| (log_density(x) - log_density_prime(x)).abs())
        .fold(0.0, f64::max);
    DPTestReport {
        mechanism: mechanism.to_owned(),
        pairs_tested: 1,
        max_log_ratio: max,
        epsilon_claimed: eps,
        delta_claimed: 0.0,
        method: Method::Exact,
        verdict: if max <= eps + 1e-12 { Verdict::Pass } else { Verdict::Fail },
        trials: grid.len() as u64,
        confidence: 1.0,
    }
}

fn laplace_suite(opts: &SuiteOptions) -> Result<Vec<SuiteReport>> {
    let eps = SUITE_EPSILON;
    let runner = |c: &f64, r: &mut RngStream| {
        if opts.broken_laplace {
            broken_laplace(*c, 1.0, eps, r)
        } else {
            c + sample_laplace(1.0 / eps, r).expect("positive scale")
        }
    };
    let name = if opts.broken_laplace { "laplace count (broken: half scale)" } else { "laplace count" };
    let mut out = vec![SuiteReport::Privacy(mc_dp_check(
        name,
        runner,
        &COUNT,
        &(COUNT + 1.0),
        &EventBins::Quantiles(MC_DEFAULT_BINS),
        eps,
        0.0,
        opts.trials,
        &RngStream::new(opts.seed, 10),
    )?)];
    if !opts.broken_laplace {
        let grid: Vec<f64> = (0..1000).map(|i| COUNT - 50.0 + i as f64 * 0.1).collect();
        out.push(SuiteReport::Privacy(density_ratio_check(
            "laplace density ratio",
            |x| laplace_log_density(x, COUNT, 1.0 / eps),
            |x| laplace_log_density(x, COUNT + 1.0, 1.0 / eps),
            &grid,
            eps,
        )));
        for d in [1, 10] {
            out.push(SuiteReport::Accuracy(check_laplace_accuracy(
                1.0,
                eps,
                0.05,
                d,
                opts.trials,
                &RngStream::new(opts.seed, 11 + d as u64),
            )?));
        }
    }
    Ok(out)
}

fn gaussian_suite(opts: &SuiteOptions) -> Result<Vec<SuiteReport>> {
    let (eps, delta) = (SUITE_EPSILON, SUITE_DELTA);
    let mut out = Vec::new();
    for (name, sigma, stream) in [
        ("gaussian count (classic)", gaussian_sigma_classic(1.0, eps, delta)?, 20),
        ("gaussian count (analytic)", gaussian_sigma_analytic(1.0, eps, delta)?, 21),
    ] {
        let runner = move |c: &f64, r: &mut RngStream| c + sample_gaussian(sigma, r).expect("positive sigma");
        out.push(SuiteReport::Privacy(mc_dp_check(
            name,
            runner,
            &COUNT,
            &(COUNT + 1.0),
            &EventBins::Quantiles(MC_DEFAULT_BINS),
            eps,
            delta,
            opts.trials,
            &RngStream::new(opts.seed, stream),
        )?));
    }
    Ok(out)
}

fn revenue(valuations: &Vec<f64>, price: &f64) -> f64 {
    price * valuations.iter().filter(|v| **v >= *price).count() as f64
}

/// Pricing instance: three buyers valuing the good at 1.00, 1.01 and 3.01;
/// candidate prices are those valuations, and the score is the revenue.
pub fn pricing_instance() -> (ScoreFunction<Vec<f64>, f64>, Vec<f64>) {
    let buyers = vec![1.00, 1.01, 3.01];
    let sf = ScoreFunction::new(buyers.clone(), revenue, 3.01).expect("valid instance");
    (sf, buyers)
}

/// Every dataset obtained by changing one buyer's valuation to a point of the
/// 0.01 grid on `[0, 3.01]`.
pub fn pricing_neighbours(buyers: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..buyers.len())
        .flat_map(|i| {
            (0..=301).map(move |k| {
                let mut changed = buyers.to_vec();
                changed[i] = k as f64 / 100.0;
                (buyers.to_vec(), changed)
            })
        })
        .collect()
}

fn exponential_suite(opts: &SuiteOptions) -> Result<Vec<SuiteReport>> {
    let (sf, buyers) = pricing_instance();
    let mut out = Vec::new();
    for eps in [0.5, 1.0, 2.0] {
        out.push(SuiteReport::Privacy(exact_dp_check(
            &format!("exponential pricing (eps={eps})"),
            |d: &Vec<f64>| exponential_probabilities(&sf, d, eps),
            pricing_neighbours(&buyers),
            eps,
        )?));
    }
    let eps = 1.0;
    let changed = vec![1.00, 1.01, 0.0];
    let runner = |d: &Vec<f64>, r: &mut RngStream| {
        let w: Vec<f64> = sf.scores(d).iter().map(|s| eps * s / (2.0 * sf.sensitivity())).collect();
        sample_from_log_weights(&w, r).expect("finite weights") as f64
    };
    out.push(SuiteReport::Privacy(mc_dp_check(
        "exponential pricing",
        runner,
        &buyers,
        &changed,
        &EventBins::Edges(vec![0.5, 1.5]),
        eps,
        0.0,
        opts.trials,
        &RngStream::new(opts.seed, 30),
    )?));
    out.push(SuiteReport::Accuracy(check_exponential_utility(
        &sf,
        &buyers,
        eps,
        0.05,
        opts.trials,
        &RngStream::new(opts.seed, 31),
    )?));
    Ok(out)
}

fn rr_suite(opts: &SuiteOptions) -> Result<Vec<SuiteReport>> {
    let mut out = Vec::new();
    for eps in [0.1, 0.5, 1.0, 2.0] {
        let p = RRParams::new(eps)?;
        out.push(SuiteReport::Privacy(exact_dp_check(
            &format!("randomized response (eps={eps})"),
            |x: &bool| Ok(rr_output_distribution(*x, &p).to_vec()),
            [(false, true), (true, false)],
            eps,
        )?));
    }
    out.push(SuiteReport::Privacy(exact_dp_check(
        "warner coin protocol",
        |x: &bool| Ok(warner_output_distribution(*x).to_vec()),
        [(false, true), (true, false)],
        3f64.ln(),
    )?));
    let p = RRParams::new(1.0)?;
    out.push(SuiteReport::Privacy(mc_dp_check(
        "randomized response (eps=1)",
        |x: &bool, r: &mut RngStream| randomized_response_bit(*x, &p, r) as u8 as f64,
        &false,
        &true,
        &EventBins::Edges(vec![0.5]),
        1.0,
        0.0,
        opts.trials,
        &RngStream::new(opts.seed, 40),
    )?));
    out.push(SuiteReport::Accuracy(check_rr_estimator(0.3, 10_000, 1.0, 0.1, 1_000, &RngStream::new(opts.seed, 41))?));
    Ok(out)
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<Vec<SuiteReport>> {
    Ok(match suite {
        Suite::Laplace => laplace_suite(opts)?,
        Suite::Gaussian => gaussian_suite(opts)?,
        Suite::Exponential => exponential_suite(opts)?,
        Suite::Rr => rr_suite(opts)?,
        Suite::All => {
            let mut all = laplace_suite(opts)?;
            all.extend(gaussian_suite(opts)?);
            all.extend(exponential_suite(opts)?);
            all.extend(rr_suite(opts)?);
            all
        }
    })
}

pub fn suite_verdict(reports: &[SuiteReport]) -> Verdict {
    worst_verdict(reports.iter().map(SuiteReport::verdict))
}
