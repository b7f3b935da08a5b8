//! Differential-privacy primitives: calibrated noise mechanisms, a privacy
//! accountant, query sensitivity analysis and statistical verification.

pub mod accountant;
pub mod demos;
pub mod error;
pub mod io;
pub mod mechanisms;
pub mod queries;
pub mod sampling;
pub mod types;
pub mod verifier;

pub use error::{DpError, Result};
