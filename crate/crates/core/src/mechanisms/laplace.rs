use crate::error::{invalid, Result};
use crate::sampling::{sample_laplace, RngStream};
use crate::types::{ErrorBound, MechanismKind, MechanismRelease, PrivacyParams, ReleaseValue};

use super::{check_beta, DEFAULT_BETA};

/// Adds i.i.d. `Lap(l1_sens / eps)` noise to every coordinate of `value`.
///
/// The release carries `(eps, 0)` and the 95% max-coordinate error bound.
pub fn laplace_mechanism(
    value: &[f64],
    l1_sens: f64,
    eps: f64,
    rng: &mut RngStream,
) -> Result<MechanismRelease> {
    if value.is_empty() {
        return Err(invalid("Laplace mechanism needs at least one coordinate"));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("epsilon must be finite and > 0, got {eps}")));
    }
    if !(l1_sens >= 0.0) || !l1_sens.is_finite() {
        return Err(invalid(format!("sensitivity must be finite and >= 0, got {l1_sens}")));
    }
    let scale = l1_sens / eps;
    let noisy = value
        .iter()
        .map(|v| Ok(v + sample_laplace(scale, rng)?))
        .collect::<Result<Vec<_>>>()?;
    let alpha = laplace_error_bound(value.len(), l1_sens, eps, DEFAULT_BETA)?;
    Ok(MechanismRelease {
        value: ReleaseValue::Vector(noisy),
        mechanism: MechanismKind::Laplace,
        params: PrivacyParams::pure(eps)?,
        noise_scale: Some(scale),
        error_bound: Some(ErrorBound { alpha, beta: DEFAULT_BETA }),
        utility_gap: None,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}

/// `alpha = ln(d / beta) * sens / eps`: with probability at least `1 - beta`
/// every coordinate's error is below `alpha` (union bound over `d` tails).
pub fn laplace_error_bound(d: usize, sens: f64, eps: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if d == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    if !(eps > 0.0) {
        return Err(invalid(format!("epsilon must be > 0, got {eps}")));
    }
    if !(sens >= 0.0) {
        return Err(invalid(format!("sensitivity must be >= 0, got {sens}")));
    }
    Ok((d as f64 / beta).ln() * sens / eps)
}

/// `ln Lap(x | center, scale)`.
pub fn laplace_log_density(x: f64, center: f64, scale: f64) -> f64 {
    -(2.0 * scale).ln() - (x - center).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sensitivity_returns_exact_value() {
        let mut rng = RngStream::new(1, 0);
        let r = laplace_mechanism(&[3.5, -1.0], 0.0, 0.5, &mut rng).unwrap();
        assert_eq!(r.vector().unwrap(), &[3.5, -1.0]);
        assert_eq!(r.noise_scale, Some(0.0));
    }

    #[test]
    fn mean_age_scale() {
        let mut rng = RngStream::new(1, 0);
        let r = laplace_mechanism(&[49.6], 0.01, 0.5, &mut rng).unwrap();
        assert!((r.noise_scale.unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(r.params, PrivacyParams { epsilon: 0.5, delta: 0.0 });
        let bound = r.error_bound.unwrap();
        assert_eq!(bound.beta, 0.05);
        assert!((bound.alpha - 20f64.ln() * 0.02).abs() < 1e-12);
    }

    #[test]
    fn histogram_cells_mean_absolute_noise() {
        let mut rng = RngStream::new(2, 0);
        let cells = vec![0.0; 100_000];
        let r = laplace_mechanism(&cells, 1.0, 0.5, &mut rng).unwrap();
        let mad = r.vector().unwrap().iter().map(|x| x.abs()).sum::<f64>() / cells.len() as f64;
        assert!((mad - 2.0).abs() < 0.05, "{mad}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = RngStream::new(1, 0);
        assert!(laplace_mechanism(&[1.0], 1.0, 0.0, &mut rng).is_err());
        assert!(laplace_mechanism(&[1.0], -1.0, 1.0, &mut rng).is_err());
        assert!(laplace_mechanism(&[], 1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn error_bound_values() {
        let a = laplace_error_bound(1, 0.01, 0.5, 0.05).unwrap();
        assert!((a - 0.059_914_645_471_079_81).abs() < 1e-12);
        let a = laplace_error_bound(1, 0.01, 1.0, 0.05).unwrap();
        assert!((a - 0.029_957_322_735_539_9).abs() < 1e-12);
        // beta -> 1: alpha -> ln(d) sens / eps
        let a = laplace_error_bound(1, 1.0, 1.0, 1.0 - 1e-12).unwrap();
        assert!(a.abs() < 1e-11);
        let a = laplace_error_bound(8, 1.0, 1.0, 1.0 - 1e-12).unwrap();
        assert!((a - 8f64.ln()).abs() < 1e-11);
        assert!(laplace_error_bound(1, 1.0, 1.0, 1.0).is_err());
        assert!(laplace_error_bound(1, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn log_density_normalised() {
        // trapezoid over [-40, 40] with b = 1
        let h = 1e-3;
        let s: f64 = (0..80_000).map(|i| laplace_log_density(-40.0 + i as f64 * h, 0.0, 1.0).exp() * h).sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}
