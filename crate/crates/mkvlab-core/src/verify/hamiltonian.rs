//! Evaluation of the Hamiltonian of the measure-valued HJB on empirical
//! measures with cylindrical derivative slots.
//!
//! ```text
//! ℍ(t, μ, P, Q, R, S) = ∫ inf_{a ∈ A} { f(t,x,μ,a) + ⟨b(t,x,μ,a), P(x)⟩
//!                         + ½ tr[(σσᵀ + σ⁰σ⁰ᵀ) Q(x)] } μ(dx)
//!                         + ∫∫ ½ tr[σ⁰σ⁰ᵀ R(x,x')] μ(dx') μ(dx)
//!                         + ∫ tr[σ⁰ᵀ S(x)] μ(dx),
//! ```
//!
//! where P = ∂_μu, Q = ∂_x∂_μu, R = ∂²_μu and S is the martingale-slot
//! input (zero for deterministic test functions). The formulation with a
//! joint infimum over a second control in the R-slot collapses to the
//! form above precisely because the diffusions carried here are state-
//! and control-independent; models without that structure are rejected.

use crate::calculus::CylindricalFn;
use crate::control::ControlGrid;
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeasureSummary};
use crate::model::ModelSpec;

/// Evaluate ℍ with the control infimum taken over `cgrid`. `s_term`, when
/// present, holds one d×m matrix per atom (row-major, atom-major).
pub fn hamiltonian(
    model: &ModelSpec,
    t: f64,
    mu: &EmpiricalMeasure,
    u: &CylindricalFn,
    cgrid: &ControlGrid,
    s_term: Option<&[f64]>,
    w0_features: &[f64],
) -> Result<f64> {
    model.require_constant_diffusions()?;
    cgrid.validate_against(&model.control)?;
    if mu.dim() != model.d || u.dim() != model.d {
        return Err(Error::dimension("measure, model and test function must share d"));
    }
    let d = model.d;
    let m = model.m;
    if let Some(s) = s_term {
        if s.len() != mu.n() * d * m {
            return Err(Error::dimension("S slot must hold one d×m block per atom"));
        }
    }
    let sigma = model.sigma_matrix(t);
    let sigma0 = model.sigma0_matrix(t);
    // a_mat = σσᵀ + σ⁰σ⁰ᵀ, c_mat = σ⁰σ⁰ᵀ (both d×d).
    let mut a_mat = vec![0.0; d * d];
    let mut c_mat = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            let mut s_rc = 0.0;
            let mut s0_rc = 0.0;
            for j in 0..m {
                s_rc += sigma[r * m + j] * sigma[c * m + j];
                s0_rc += sigma0[r * m + j] * sigma0[c * m + j];
            }
            a_mat[r * d + c] = s_rc + s0_rc;
            c_mat[r * d + c] = s0_rc;
        }
    }
    let pairings = u.pairings(mu)?;
    let summary = MeasureSummary::of(mu);
    let view = summary.view(mu);
    let n = mu.n();
    let mut grad = vec![0.0; d];
    let mut grad_x = vec![0.0; d * d];
    let mut drift = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..n {
        let x = mu.atom(i);
        u.lions_grad(t, &pairings, x, &mut grad);
        u.lions_grad_x(t, &pairings, x, &mut grad_x);
        // Control bracket: inf over the grid.
        let mut best = f64::INFINITY;
        for ai in 0..cgrid.len() {
            let a = cgrid.atom(ai);
            model.coeffs.drift(t, x, &view, a, w0_features, &mut drift);
            let f = model.coeffs.running_cost(t, x, &view, a, w0_features);
            let mut bracket = f;
            for r in 0..d {
                bracket += drift[r] * grad[r];
            }
            for r in 0..d {
                for c in 0..d {
                    bracket += 0.5 * a_mat[r * d + c] * grad_x[c * d + r];
                }
            }
            if !bracket.is_finite() {
                return Err(Error::evaluation("Hamiltonian bracket not finite"));
            }
            if bracket < best {
                best = bracket;
            }
        }
        total += best;
        if let Some(s) = s_term {
            let block = &s[i * d * m..(i + 1) * d * m];
            let mut s_trace = 0.0;
            for r in 0..d {
                for c in 0..m {
                    s_trace += sigma0[r * m + c] * block[r * m + c];
                }
            }
            total += s_trace;
        }
    }
    // Second-derivative coupling: the double μ-integral is control-free
    // under the constant-diffusion structure and factorises through the
    // averaged cylindrical gradients.
    let r_total = 0.5 * u.pair_average_hess_trace(t, &pairings, mu, &c_mat)?;
    Ok(total / n as f64 + r_total)
}
