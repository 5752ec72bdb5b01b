//! Exact simulation of fractional Brownian motion and tooling around its
//! one-sided exit problem.
//!
//! * [`fbm`] holds the covariance, exact samplers (Cholesky and circulant
//!   embedding) and pathwise functionals (grid supremum, Hölder modulus).
//! * [`exit`] holds Monte Carlo estimators for the exit probability
//!   `F(T) = P(sup_{[0,T]} X <= 1)`, the functional
//!   `I(T) = E[(∫_0^T e^{X(u)} du)^{-1}]`, the Laplace functional
//!   `g(T) = E[exp(-T^H sup_{[0,1]} X)]`, and per-sample verification of the
//!   deterministic inequalities that relate them.
//! * [`drift`] holds the explicit barrier and scaling functions and
//!   deterministic sweeps over the analytic inequalities behind the
//!   comparison lemma for `H < 1/2`.
//! * [`fit`] fits survival exponents and removes grid-supremum bias by
//!   refinement extrapolation.

pub mod drift;
pub mod error;
pub mod exit;
pub mod fbm;
pub mod fit;

pub use error::{Error, Result};
pub use fbm::{HurstParam, RngSpec, SamplePath, TimeGrid};
