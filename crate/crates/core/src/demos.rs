//! Small narrative demonstrations: a differencing attack on exact averages,
//! private pricing with the exponential mechanism, the fair-coin survey
//! protocol, and the randomized-response accuracy/privacy trade-off.

use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, DpError, Result};
use crate::mechanisms::{
    exponential_probabilities, exponential_utility_bound, randomized_response_bit, rr_accuracy_bound,
    rr_estimator_variance_bound, warner_estimate, warner_expected_yes, warner_rr, RRParams,
};
use crate::sampling::{sample_index, RngStream};
use crate::verifier::suites::pricing_instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demo {
    Differencing,
    Pricing,
    Warner,
    RrTradeoff,
}

impl FromStr for Demo {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "differencing" => Ok(Demo::Differencing),
            "pricing" => Ok(Demo::Pricing),
            "warner" => Ok(Demo::Warner),
            "rr_tradeoff" => Ok(Demo::RrTradeoff),
            other => Err(invalid(format!(
                "unknown demo `{other}` (differencing, pricing, warner, rr_tradeoff)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferencingDemo {
    pub employees_before: u64,
    pub average_before: f64,
    pub employees_after: u64,
    pub average_after: f64,
    /// Salary of the newcomer, recovered from the two exact averages.
    pub inferred_salary: f64,
}

/// Recovers the salary of one new employee from two published exact averages:
/// `x = n_after * avg_after - n_before * avg_before`.
pub fn differencing(n_before: u64, avg_before: f64, n_after: u64, avg_after: f64) -> Result<DifferencingDemo> {
    if n_after != n_before + 1 {
        return Err(invalid("the second average must include exactly one more employee"));
    }
    Ok(DifferencingDemo {
        employees_before: n_before,
        average_before: avg_before,
        employees_after: n_after,
        average_after: avg_after,
        inferred_salary: n_after as f64 * avg_after - n_before as f64 * avg_before,
    })
}

pub fn differencing_demo() -> DifferencingDemo {
    differencing(25, 500_000.0, 26, 505_000.0).expect("consistent inputs")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceRow {
    pub price: f64,
    pub revenue: f64,
    pub probability: f64,
    pub sample_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricingDemo {
    pub valuations: Vec<f64>,
    pub epsilon: f64,
    pub score_sensitivity: f64,
    pub samples: u64,
    pub seed: u64,
    pub rows: Vec<PriceRow>,
    /// With probability >= 0.95 the chosen revenue is within this of optimal.
    pub utility_gap_95: f64,
}

/// Exact exponential-mechanism distribution over candidate prices plus
/// empirical frequencies from `samples` draws.
pub fn pricing_demo(eps: f64, samples: u64, seed: u64) -> Result<PricingDemo> {
    let (sf, buyers) = pricing_instance();
    let probs = exponential_probabilities(&sf, &buyers, eps)?;
    let mut rng = RngStream::new(seed, 0);
    let mut hits = vec![0u64; probs.len()];
    for _ in 0..samples {
        hits[sample_index(&probs, &mut rng)] += 1;
    }
    let revenues = sf.scores(&buyers);
    let rows = sf
        .outcomes()
        .iter()
        .zip(revenues)
        .zip(probs.iter().zip(&hits))
        .map(|((&price, revenue), (&probability, &h))| PriceRow {
            price,
            revenue,
            probability,
            sample_frequency: if samples == 0 { 0.0 } else { h as f64 / samples as f64 },
        })
        .collect();
    Ok(PricingDemo {
        valuations: buyers,
        epsilon: eps,
        score_sensitivity: sf.sensitivity(),
        samples,
        seed,
        rows,
        utility_gap_95: exponential_utility_bound(sf.sensitivity(), sf.outcomes().len(), eps, 0.05)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarnerDemo {
    pub true_fraction: f64,
    pub respondents: u64,
    pub seed: u64,
    pub yes_answers: u64,
    pub expected_yes: f64,
    /// `2 * yes / n - 1/2`.
    pub estimated_fraction: f64,
}

/// Simulates the fair-coin protocol on `n` respondents, `round(pi n)` of whom
/// have the sensitive property, and inverts the yes-rate.
pub fn warner_demo(pi: f64, n: u64, seed: u64) -> Result<WarnerDemo> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(invalid(format!("pi must lie in [0, 1], got {pi}")));
    }
    let has = (pi * n as f64).round() as u64;
    let mut rng = RngStream::new(seed, 0);
    let yes = (0..n).filter(|&i| warner_rr(i < has, &mut rng)).count() as u64;
    Ok(WarnerDemo {
        true_fraction: pi,
        respondents: n,
        seed,
        yes_answers: yes,
        expected_yes: warner_expected_yes(has, n - has),
        estimated_fraction: warner_estimate(yes, n)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub epsilon: f64,
    pub keep_probability: f64,
    /// Accuracy guaranteed with probability `1 - beta`.
    pub alpha: f64,
    pub variance_bound: f64,
    /// Estimate from one simulated run on a population with mean `mu`.
    pub simulated_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffDemo {
    pub respondents: usize,
    pub beta: f64,
    pub true_mean: f64,
    pub seed: u64,
    pub rows: Vec<TradeoffRow>,
}

pub const TRADEOFF_EPSILONS: [f64; 7] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// Sweeps epsilon and reports the Chebyshev accuracy `alpha(eps, n)`.
pub fn rr_tradeoff_demo(n: usize, beta: f64, mu: f64, seed: u64) -> Result<TradeoffDemo> {
    let ones = (mu * n as f64).round() as usize;
    let mut rows = Vec::new();
    for (k, &eps) in TRADEOFF_EPSILONS.iter().enumerate() {
        let p = RRParams::new(eps)?;
        let mut rng = RngStream::new(seed, k as u64);
        let responses: Vec<bool> = (0..n).map(|i| randomized_response_bit(i < ones, &p, &mut rng)).collect();
        rows.push(TradeoffRow {
            epsilon: eps,
            keep_probability: p.keep,
            alpha: rr_accuracy_bound(n, &p, beta)?,
            variance_bound: rr_estimator_variance_bound(n, &p),
            simulated_estimate: crate::mechanisms::rr_mean_estimator(&responses, &p)?,
        });
    }
    Ok(TradeoffDemo { respondents: n, beta, true_mean: ones as f64 / n as f64, seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differencing_recovers_salary() {
        let d = differencing_demo();
        assert_eq!(d.inferred_salary, 630_000.0);
        assert!(differencing(25, 1.0, 27, 1.0).is_err());
    }

    #[test]
    fn pricing_table() {
        let d = pricing_demo(1.0, 10_000, 1).unwrap();
        let revenues: Vec<f64> = d.rows.iter().map(|r| r.revenue).collect();
        assert_eq!(revenues, vec![3.00, 2.02, 3.01]);
        assert!((d.rows.iter().map(|r| r.probability).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d.rows.iter().map(|r| r.sample_frequency).sum::<f64>(), 1.0);
    }

    #[test]
    fn warner_inverts() {
        let d = warner_demo(0.4, 1_000_000, 11).unwrap();
        assert_eq!(d.expected_yes, 450_000.0);
        assert!((d.estimated_fraction - 0.4).abs() < 0.002, "{}", d.estimated_fraction);
    }

    #[test]
    fn tradeoff_alpha_shrinks_with_eps() {
        let d = rr_tradeoff_demo(10_000, 0.05, 0.3, 2).unwrap();
        assert!(d.rows.windows(2).all(|w| w[1].alpha < w[0].alpha));
        // at large eps the simulated estimate sits well inside the bound
        let last = d.rows.last().unwrap();
        assert!((last.simulated_estimate - 0.3).abs() < last.alpha);
    }

    #[test]
    fn demo_names() {
        assert_eq!("rr-tradeoff".parse::<Demo>().unwrap(), Demo::RrTradeoff);
        assert_eq!("rr_tradeoff".parse::<Demo>().unwrap(), Demo::RrTradeoff);
        assert!("census".parse::<Demo>().is_err());
    }
}
