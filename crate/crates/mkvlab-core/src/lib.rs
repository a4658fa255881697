//! # mkvlab-core
//!
//! A simulation and verification laboratory for mean-field (McKean–Vlasov)
//! stochastic control with common noise.
//!
//! The state of a population of interacting particles follows
//!
//! ```text
//! dX_s = b(s, X_s, ρ_s, α_s) ds + σ(s) dW_s + σ⁰(s) dW⁰_s,
//! ρ_s  = conditional law of X_s given the common path W⁰,
//! ```
//!
//! where `W` is idiosyncratic noise (one path per particle), `W⁰` is a
//! common Brownian motion shared by the whole population, and the control
//! `α` is chosen to minimise
//!
//! ```text
//! J(t, ξ, α) = E[ ∫_t^T f(s, X_s, ρ_s, α_s) ds + g(X_T, ρ_T) | W⁰ ].
//! ```
//!
//! Everything here operates at "desk scale": conditional laws are
//! represented by equal-weight particle clouds inside one common-noise
//! world, outer expectations are averages over worlds, and the library's
//! purpose is to *measure* the structural properties of the value function
//! (dynamic programming, conditional-law invariance, measure-calculus
//! identities on cylindrical test functions, and the envelope bounds that
//! drive the n-player approximation pipeline) rather than to solve any
//! PDE.
//!
//! Module map:
//!
//! * [`noise`] — time grids, Brownian paths, path concatenation, noise
//!   bundles with deterministic per-stream seeding.
//! * [`measure`] — empirical measures, pairings `μ(φ)`, `μ⊗μ(ψ)`, moments
//!   and Gaussian convolution.
//! * [`transport`] — exact (assignment) and entropic (Sinkhorn)
//!   Wasserstein-2 distances plus the 1-d sorting fast paths.
//! * [`model`] — coefficient sets, the model zoo, numerical probes of the
//!   standing Lipschitz/boundedness assumptions.
//! * [`mollify`] — the smooth compactly-supported kernel, mollified
//!   n-player coefficients and their error budgets.
//! * [`sim`] — Euler–Maruyama simulation of the particle system, of the
//!   regularised n-player system, flow-property and moment diagnostics.
//! * [`control`] — control grids, feedback policies, open-loop controls
//!   and shifted controls.
//! * [`value`] — Monte Carlo cost estimation, backward policy search,
//!   n-player and aggregated (Gaussian-smoothed) value functions.
//! * [`calculus`] — cylindrical test functions with closed-form Lions
//!   derivatives.
//! * [`verify`] — the verification harness: dynamic-programming residual,
//!   law-invariance gap, Hamiltonian evaluation, Itô–Wentzell residual,
//!   BSDE envelope, the value sandwich, and compact-set diagnostics.
//! * [`report`] — the JSON check-report record shared with the CLI.

pub mod calculus;
pub mod control;
pub mod error;
pub mod measure;
pub mod model;
pub mod mollify;
pub mod noise;
pub mod quad;
pub mod report;
pub mod rng;
pub mod sim;
pub mod transport;
pub mod value;
pub mod verify;

pub use error::{Error, Result};
