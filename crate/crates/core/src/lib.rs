//! Symbolic-numeric toolkit for stochastic differential equations:
//! represents SDEs and stochastic transformation triads (a state
//! diffeomorphism, a Brownian-rotation matrix field, a time-change
//! density), computes transformed SDEs, Lie brackets, push-forwards and
//! symmetry determining-equation residuals, and cross-checks the
//! transformation calculus by Monte Carlo simulation.
//!
//! Module map:
//! - [`expr`] — expression trees: parse, differentiate, evaluate, and a
//!   sampling-based zero test; this is the equality notion used everywhere.
//! - [`model`] — SDEs, finite and infinitesimal transformations, the
//!   generator, Jacobians, mixed brackets, validation, model files.
//! - [`transform`] — the transformation algebra: transformed SDE,
//!   composition, inversion, push-forward/pull-back, numeric flows.
//! - [`symmetry`] — determining equations, symmetry certification,
//!   bracket closure, strong reduction.
//! - [`simulate`] — Euler-Maruyama paths, pathwise process
//!   transformation, Brownian and two-sample statistics.
//! - [`rng`] — counter-based random numbers keyed by (seed, path, step).

pub mod expr;
pub mod model;
pub mod symmetry;
pub mod transform;
pub mod rng;
pub mod simulate;
