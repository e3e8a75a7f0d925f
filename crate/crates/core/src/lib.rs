//! Finite-sample penalized-MLE machinery for stochastically-linear-smooth (SLS)
//! models.
//!
//! The crate is organized around four pillars:
//!
//! * [`tailbounds`] — deviation-bound quantiles for quadratic forms under light
//!   exponential tails, the Gaussian/sub-exponential phase transition, and
//!   concentration for families of second-order tensors;
//! * [`models`] — concrete SLS models (logistic regression, histogram and 1-D
//!   dictionary log-density, Gaussian precision matrix) exposing losses,
//!   derivatives up to fourth directional order, samplers, and condition
//!   constants;
//! * [`estimator`] — a damped-Newton penalized-MLE solver plus Fisher/Wilks
//!   expansion certificates, penalization-bias expansion, fourth-order
//!   corrections, and the bias-variance risk sandwich;
//! * [`penalty_lab`] — sequence-space penalty design: ridge vs spectral
//!   cut-off vs projection risk bounds, the polynomial-growth roughness
//!   condition, oracle cut-off selection, and minimax-rate sweeps.
//!
//! Everything is deterministic given explicit seeds; samplers and Monte Carlo
//! loops derive per-replicate streams so results do not depend on thread count.

pub mod error;
pub mod estimator;
pub mod fd;
pub mod linalg;
pub mod models;
pub mod penalty_lab;
pub mod rng;
pub mod tailbounds;

pub use error::{Error, Result};
