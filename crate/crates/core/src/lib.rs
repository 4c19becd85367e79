//! Compliant/noncompliant SIR epidemic model with stochastic infectivity.
//!
//! - [`model`]: parameters, state, drift and diffusion fields
//! - [`smalllin`]: 2×2 spectral utilities, Lyapunov solve, 6×6 determinants
//! - [`equilibria`]: disease-free equilibria, reproductive ratios, thresholds,
//!   stability verdicts and the time-average certificate
//! - [`integrate`]: explicit Euler and Milstein integrators with seeded noise
//! - [`analysis`]: Monte Carlo ensemble estimators
//! - [`scenario`]: the five published parameter sets
//! - [`verify`]: the self-check suite behind `ncsir verify`

pub mod analysis;
pub mod equilibria;
pub mod integrate;
pub mod model;
pub mod scenario;
pub mod smalllin;
pub mod verify;

pub use model::{ModelParams, NoiseVariant, ParamValues, State};
