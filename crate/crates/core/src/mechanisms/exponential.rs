use std::fmt;

use crate::error::{invalid, Result};
use crate::sampling::{log_weight_probabilities, sample_index, RngStream};
use crate::types::{MechanismKind, MechanismRelease, PrivacyParams, ReleaseValue, UtilityGap};

use super::{check_beta, DEFAULT_BETA};

type ScoreFn<D, H> = dyn Fn(&D, &H) -> f64 + Send + Sync;

/// A finite outcome set with a score `s(D, h)` and its declared sensitivity.
pub struct ScoreFunction<D, H> {
    outcomes: Vec<H>,
    score: Box<ScoreFn<D, H>>,
    sensitivity: f64,
}

impl<D, H: fmt::Debug> fmt::Debug for ScoreFunction<D, H> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreFunction")
            .field("outcomes", &self.outcomes)
            .field("sensitivity", &self.sensitivity)
            .finish_non_exhaustive()
    }
}

impl<D, H> ScoreFunction<D, H> {
    pub fn new(
        outcomes: Vec<H>,
        score: impl Fn(&D, &H) -> f64 + Send + Sync + 'static,
        sensitivity: f64,
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(invalid("outcome set must be non-empty"));
        }
        if !(sensitivity > 0.0) || !sensitivity.is_finite() {
            return Err(invalid(format!("score sensitivity must be finite and > 0, got {sensitivity}")));
        }
        Ok(Self { outcomes, score: Box::new(score), sensitivity })
    }

    pub fn outcomes(&self) -> &[H] {
        &self.outcomes
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn score(&self, dataset: &D, outcome: &H) -> f64 {
        (self.score)(dataset, outcome)
    }

    pub fn scores(&self, dataset: &D) -> Vec<f64> {
        self.outcomes.iter().map(|h| self.score(dataset, h)).collect()
    }

    /// Largest `|s(D, h) - s(D', h)|` over the given neighbouring pairs.
    pub fn observed_sensitivity<'a, I>(&self, pairs: I) -> f64
    where
        I: IntoIterator<Item = (&'a D, &'a D)>,
        D: 'a,
    {
        pairs
            .into_iter()
            .flat_map(|(a, b)| {
                self.outcomes.iter().map(move |h| (self.score(a, h) - self.score(b, h)).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Brute-force audit of the declared sensitivity over `pairs`.
    pub fn audit<'a, I>(&self, pairs: I) -> Result<f64>
    where
        I: IntoIterator<Item = (&'a D, &'a D)>,
        D: 'a,
    {
        let observed = self.observed_sensitivity(pairs);
        if observed > self.sensitivity * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "declared score sensitivity {} is below the observed {observed}",
                self.sensitivity
            )));
        }
        Ok(observed)
    }
}

/// Exact selection probabilities, proportional to `exp(eps s(D,h) / (2 Δs))`.
pub fn exponential_probabilities<D, H>(
    sf: &ScoreFunction<D, H>,
    dataset: &D,
    eps: f64,
) -> Result<Vec<f64>> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(invalid(format!("epsilon must be finite and >= 0, got {eps}")));
    }
    let scale = eps / (2.0 * sf.sensitivity);
    let log_weights: Vec<f64> = sf.scores(dataset).into_iter().map(|s| scale * s).collect();
    log_weight_probabilities(&log_weights)
}

/// Samples one outcome; the release carries `(eps, 0)` and the utility gap at
/// beta = 0.05.
pub fn exponential_mechanism<D, H: fmt::Display>(
    sf: &ScoreFunction<D, H>,
    dataset: &D,
    eps: f64,
    rng: &mut RngStream,
) -> Result<(usize, MechanismRelease)> {
    let probs = exponential_probabilities(sf, dataset, eps)?;
    let index = sample_index(&probs, rng);
    let gap = if eps > 0.0 {
        Some(UtilityGap {
            gap: exponential_utility_bound(sf.sensitivity, sf.outcomes.len(), eps, DEFAULT_BETA)?,
            beta: DEFAULT_BETA,
        })
    } else {
        None
    };
    let release = MechanismRelease {
        value: ReleaseValue::Selection { index, label: sf.outcomes[index].to_string() },
        mechanism: MechanismKind::Exponential,
        params: PrivacyParams::pure(eps)?,
        noise_scale: None,
        error_bound: None,
        utility_gap: gap,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    };
    Ok((index, release))
}

/// `gap = (2 Δs / eps) ln(|H| / beta)`: the selected score is at least
/// `OPT - gap` with probability `>= 1 - beta`.
pub fn exponential_utility_bound(
    score_sensitivity: f64,
    card_h: usize,
    eps: f64,
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    if card_h == 0 {
        return Err(invalid("outcome set must be non-empty"));
    }
    if !(eps > 0.0) {
        return Err(invalid(format!("epsilon must be > 0, got {eps}")));
    }
    Ok(2.0 * score_sensitivity / eps * (card_h as f64 / beta).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn revenue(valuations: &Vec<f64>, price: &f64) -> f64 {
        price * valuations.iter().filter(|v| **v >= *price).count() as f64
    }

    fn pricing() -> ScoreFunction<Vec<f64>, f64> {
        ScoreFunction::new(vec![1.00, 1.01, 3.01], revenue, 3.01).unwrap()
    }

    #[test]
    fn pricing_probabilities_by_hand() {
        let sf = pricing();
        let d = vec![1.00, 1.01, 3.01];
        let rev = sf.scores(&d);
        assert_eq!(rev, vec![3.00, 2.02, 3.01]);
        let p = exponential_probabilities(&sf, &d, 1.0).unwrap();
        // hand normalisation of exp(u / (2 * 3.01))
        let w: Vec<f64> = [3.00_f64, 2.02, 3.01].iter().map(|u| (u / 6.02).exp()).collect();
        let z: f64 = w.iter().sum();
        for (pi, wi) in p.iter().zip(&w) {
            assert!((pi - wi / z).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_scores_and_zero_eps_are_uniform() {
        let flat = ScoreFunction::new(vec![0, 1, 2, 3], |_: &(), _: &i32| 7.0, 1.0).unwrap();
        for p in exponential_probabilities(&flat, &(), 2.0).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let sf = pricing();
        for p in exponential_probabilities(&sf, &vec![1.0, 1.01, 3.01], 0.0).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_invariance() {
        let sf = pricing();
        let shifted = ScoreFunction::new(
            vec![1.00, 1.01, 3.01],
            |d: &Vec<f64>, h: &f64| revenue(d, h) + 123.0,
            3.01,
        )
        .unwrap();
        let d = vec![1.0, 1.01, 3.01];
        let a = exponential_probabilities(&sf, &d, 1.3).unwrap();
        let b = exponential_probabilities(&shifted, &d, 1.3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_outcome_always_selected() {
        let sf = ScoreFunction::new(vec!["only"], |_: &(), _: &&str| 1.0, 1.0).unwrap();
        let mut rng = RngStream::new(0, 0);
        for _ in 0..100 {
            assert_eq!(exponential_mechanism(&sf, &(), 1.0, &mut rng).unwrap().0, 0);
        }
    }

    #[test]
    fn large_eps_concentrates_on_argmax() {
        let sf = pricing();
        let d = vec![1.0, 1.01, 3.01];
        // 3.01 beats 3.00 by one cent, so at eps = 50 the top two stay close:
        // p(3.01) = 1 / (1 + e^{-50 * 0.01 / 6.02} + e^{-50 * 0.99 / 6.02}).
        let p = exponential_probabilities(&sf, &d, 50.0).unwrap();
        let by_hand = 1.0 / (1.0 + (-50.0 * 0.01_f64 / 6.02).exp() + (-50.0 * 0.99_f64 / 6.02).exp());
        assert!((p[2] - by_hand).abs() < 1e-9, "{p:?}");
        let mut rng = RngStream::new(21, 0);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| exponential_mechanism(&sf, &d, 50.0, &mut rng).unwrap().0 == 2)
            .count();
        assert!((hits as f64 / n as f64 - p[2]).abs() < 0.005);

        let p = exponential_probabilities(&sf, &d, 5000.0).unwrap();
        assert!(p[2] > 0.999);
        let hits = (0..n)
            .filter(|_| exponential_mechanism(&sf, &d, 5000.0, &mut rng).unwrap().0 == 2)
            .count();
        assert!(hits as f64 / n as f64 > 0.999);
    }

    #[test]
    fn utility_bound_formula() {
        let g = exponential_utility_bound(3.01, 3, 1.0, 0.05).unwrap();
        assert!((g - 2.0 * 3.01 * 60f64.ln()).abs() < 1e-12);
        assert!((g - 24.65).abs() < 0.01);
        let g1 = exponential_utility_bound(1.0, 1, 2.0, 0.1).unwrap();
        assert!((g1 - 10f64.ln()).abs() < 1e-12);
        let g2 = exponential_utility_bound(1.0, 1, 4.0, 0.1).unwrap();
        assert!((g1 / g2 - 2.0).abs() < 1e-12);
        assert!(exponential_utility_bound(1.0, 3, 1.0, 1.0).is_err());
    }

    #[test]
    fn audit_catches_understated_sensitivity() {
        let sf = ScoreFunction::new(vec![1.0, 3.01], revenue, 1.0).unwrap();
        let a = vec![1.0, 3.01];
        let b = vec![1.0, 0.0];
        assert!(sf.audit([(&a, &b)]).is_err());
        assert!(pricing().audit([(&a, &b)]).is_ok());
    }

    #[test]
    fn constructor_validation() {
        assert!(ScoreFunction::<(), i32>::new(vec![], |_, _| 0.0, 1.0).is_err());
        assert!(ScoreFunction::<(), i32>::new(vec![1], |_, _| 0.0, 0.0).is_err());
    }
}
