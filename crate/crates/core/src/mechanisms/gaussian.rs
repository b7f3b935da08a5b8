use serde::{Deserialize, Serialize};

use crate::error::{invalid, DpError, Result};
use crate::sampling::{sample_gaussian, std_normal_cdf, std_normal_upper_quantile, RngStream};
use crate::types::{ErrorBound, MechanismKind, MechanismRelease, PrivacyParams, ReleaseValue};

use super::{check_beta, DEFAULT_BETA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianCalibration {
    /// `sigma = sqrt(2 ln(1.25/delta)) * l2 / eps`, valid for `eps <= 1`.
    Classic,
    /// Smallest sigma meeting the exact Phi-condition; any `eps > 0`.
    Analytic,
}

fn check_delta_open(delta: f64) -> Result<()> {
    if delta == 0.0 {
        return Err(invalid("the Gaussian mechanism cannot give pure DP (delta = 0)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

pub fn gaussian_sigma_classic(l2_sens: f64, eps: f64, delta: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(invalid(format!("epsilon must be > 0, got {eps}")));
    }
    if eps > 1.0 {
        return Err(invalid(format!(
            "classic Gaussian calibration only holds for eps <= 1 (got {eps}); use the analytic calibration"
        )));
    }
    check_delta_open(delta)?;
    if !(l2_sens > 0.0) || !l2_sens.is_finite() {
        return Err(invalid(format!("l2 sensitivity must be finite and > 0, got {l2_sens}")));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() * l2_sens / eps)
}

/// Left-hand side of the exact privacy condition,
/// `Phi(l2/(2 sigma) - eps sigma/l2) - e^eps Phi(-l2/(2 sigma) - eps sigma/l2)`.
/// Noise `N(0, sigma^2)` is `(eps, delta)`-DP iff this is `<= delta`.
pub fn analytic_gaussian_delta(l2_sens: f64, eps: f64, sigma: f64) -> f64 {
    delta_for_ratio(eps, sigma / l2_sens)
}

/// Same condition in units of the sensitivity, `r = sigma / l2`.
fn delta_for_ratio(eps: f64, r: f64) -> f64 {
    let a = 1.0 / (2.0 * r);
    let b = eps * r;
    let first = std_normal_cdf(a - b);
    let tail = std_normal_cdf(-a - b);
    let second = if tail == 0.0 { 0.0 } else { (eps + tail.ln()).exp() };
    first - second
}

/// Minimal sigma with `analytic_gaussian_delta(l2, eps, sigma) <= delta`.
///
/// The condition is strictly decreasing in sigma, so the root is bracketed by
/// geometric expansion and then bisected down to float resolution. The upper
/// end of the final bracket is returned, so the condition always holds.
pub fn gaussian_sigma_analytic(l2_sens: f64, eps: f64, delta: f64) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("epsilon must be finite and > 0, got {eps}")));
    }
    check_delta_open(delta)?;
    if !(l2_sens > 0.0) || !l2_sens.is_finite() {
        return Err(invalid(format!("l2 sensitivity must be finite and > 0, got {l2_sens}")));
    }

    let fail = |lo: f64, hi: f64, message: &str| DpError::Calibration {
        epsilon: eps,
        delta,
        sigma_lo: lo * l2_sens,
        sigma_hi: hi * l2_sens,
        message: message.to_owned(),
    };

    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    let mut steps = 0;
    while delta_for_ratio(eps, hi) > delta {
        hi *= 2.0;
        steps += 1;
        if steps > 1100 || !hi.is_finite() {
            return Err(fail(lo, hi, "could not find an upper bracket"));
        }
    }
    steps = 0;
    while delta_for_ratio(eps, lo) <= delta {
        lo *= 0.5;
        steps += 1;
        if steps > 1100 || lo == 0.0 {
            return Err(fail(lo, hi, "could not find a lower bracket"));
        }
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta_for_ratio(eps, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = (delta_for_ratio(eps, hi) - delta).abs();
    if residual > 1e-10 {
        return Err(fail(lo, hi, &format!("residual {residual:e} above tolerance")));
    }
    Ok(hi * l2_sens)
}

/// `alpha` with `Pr[max_i |Z_i| >= alpha] <= beta` for `d` i.i.d. `N(0, sigma^2)`
/// coordinates: each two-sided tail gets `beta / d`.
pub fn gaussian_error_bound(d: usize, sigma: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if d == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    Ok(sigma * std_normal_upper_quantile(beta / (2.0 * d as f64))?)
}

pub fn gaussian_mechanism(
    value: &[f64],
    l2_sens: f64,
    eps: f64,
    delta: f64,
    rng: &mut RngStream,
    calibration: GaussianCalibration,
) -> Result<MechanismRelease> {
    if value.is_empty() {
        return Err(invalid("Gaussian mechanism needs at least one coordinate"));
    }
    if !(l2_sens >= 0.0) || !l2_sens.is_finite() {
        return Err(invalid(format!("l2 sensitivity must be finite and >= 0, got {l2_sens}")));
    }
    let sigma = if l2_sens == 0.0 {
        // Still validate (eps, delta) so a zero-sensitivity query is charged honestly.
        match calibration {
            GaussianCalibration::Classic => gaussian_sigma_classic(1.0, eps, delta)?,
            GaussianCalibration::Analytic => gaussian_sigma_analytic(1.0, eps, delta)?,
        };
        0.0
    } else {
        match calibration {
            GaussianCalibration::Classic => gaussian_sigma_classic(l2_sens, eps, delta)?,
            GaussianCalibration::Analytic => gaussian_sigma_analytic(l2_sens, eps, delta)?,
        }
    };
    let noisy = value
        .iter()
        .map(|v| Ok(v + sample_gaussian(sigma, rng)?))
        .collect::<Result<Vec<_>>>()?;
    let alpha = gaussian_error_bound(value.len(), sigma, DEFAULT_BETA)?;
    Ok(MechanismRelease {
        value: ReleaseValue::Vector(noisy),
        mechanism: match calibration {
            GaussianCalibration::Classic => MechanismKind::GaussianClassic,
            GaussianCalibration::Analytic => MechanismKind::GaussianAnalytic,
        },
        params: PrivacyParams::new(eps, delta)?,
        noise_scale: Some(sigma),
        error_bound: Some(ErrorBound { alpha, beta: DEFAULT_BETA }),
        utility_gap: None,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}
