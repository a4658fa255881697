//! The verification harness: numerical checks of the structural
//! properties of the value function and its approximation pipeline.
//!
//! Everything here *measures*: each check produces a statistic, the
//! threshold it was compared against, and auxiliary detail for the
//! reports. Monte Carlo checks use three-standard-error slacks; exact
//! structural identities (flow property, permutation invariance,
//! translation of conditional laws) are asserted at machine precision by
//! their callers.

pub mod compactset;
pub mod dpp;
pub mod envelope;
pub mod hamiltonian;
pub mod invariance;
pub mod ito;
pub mod sandwich;

pub use compactset::{compactness_probe, sample_pl, CompactnessReport, PlDiagnostics, PlElement};
pub use dpp::{dpp_residual, DppConfig, DppReport};
pub use envelope::{bsde_envelope, envelope_sup_coefficient, BsdePath, ResidualPaths};
pub use hamiltonian::hamiltonian;
pub use invariance::{law_invariance_gap, InvarianceReport};
pub use ito::{ito_weak_error_scaling, ito_wentzell_residual, ItoResidualReport, ItoScalingPoint};
pub use sandwich::{fit_c_k, fit_cd, measure_h_n, sandwich_check, SandwichEntry, SandwichReport};
