//! Noise-adding and selection mechanisms with their calibrations and
//! accuracy bounds.

mod exponential;
mod gaussian;
mod laplace;
mod rr;

pub use exponential::{
    exponential_mechanism, exponential_probabilities, exponential_utility_bound, ScoreFunction,
};
pub use gaussian::{
    analytic_gaussian_delta, gaussian_error_bound, gaussian_mechanism, gaussian_sigma_analytic,
    gaussian_sigma_classic, GaussianCalibration,
};
pub use laplace::{laplace_error_bound, laplace_log_density, laplace_mechanism};
pub use rr::{
    randomized_response_bit, rr_accuracy_bound, rr_estimator_variance_bound, rr_mean_estimator,
    rr_output_distribution, rr_sample_size, warner_estimate, warner_expected_yes,
    warner_output_distribution, warner_rr, RRParams,
};

/// Failure probability attached to release error bounds (95% confidence).
pub const DEFAULT_BETA: f64 = 0.05;

pub(crate) fn check_beta(beta: f64) -> crate::error::Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(crate::error::invalid(format!("beta must lie in (0, 1), got {beta}")))
    }
}
