//! Fitting parametrized families of deterministic dynamical models to noisy
//! time series by empirical risk minimization, together with the complexity
//! measures (covering-number entropy, Gaussian mean width) and joining
//! distortion bounds that govern when such fits are consistent.

pub mod cli;
pub mod complexity;
pub mod distortion;
pub mod dynamics;
pub mod erm;
pub mod error;
pub mod families;
pub mod meanwidth;
pub mod rng;
pub mod search;

pub use error::{Error, Result};
