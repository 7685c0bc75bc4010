//! Buffered failure probability (bPOE) of scenario-based and sampled
//! performance models, with exact subgradient outer sets, a Monte Carlo
//! gradient estimator, box-constrained stationarity checks and independent
//! numerical oracles.
//!
//! The quantity of interest is `g(ξ, x)`; failure means `g > 0`. For a
//! finite distribution the buffered failure probability is
//! `min_{γ≥0} E[max{0, γ·g + 1}]` whenever `P(g > 0) > 0` and `E[g] < 0`.

pub mod continuous;
pub mod error;
pub mod lp;
pub mod optimizer;
pub mod risk;
pub mod scenario;
pub mod subgradient;
pub mod verification;

pub use error::{Error, Result};
