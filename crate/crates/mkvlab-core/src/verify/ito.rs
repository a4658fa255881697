//! Discrete Itô-expansion residual for deterministic cylindrical test
//! functions along the conditional-law path.
//!
//! For deterministic `u` the martingale operator vanishes and the time
//! operator is the plain time derivative, so along one world the
//! expansion of `u(t, ρ̂_t)` should be exhausted by
//!
//! ```text
//! u(T, ρ̂_T) − u(t₀, ρ̂_{t₀})
//!   ≈ Σ_k [ ∂_t u + Ẽ⟨∂_μu, b⟩ + ½ Ẽ tr(∂_x∂_μu (σσᵀ + σ⁰σ⁰ᵀ))
//!           + ½ ÊẼ tr(∂²_μu σ⁰σ⁰ᵀ) ] Δt
//!   + Σ_k Ẽ(σ⁰ᵀ ∂_μu) · ΔW⁰_k,
//! ```
//!
//! with `Ẽ`, `Ê` atom averages over the within-world cloud. The residual
//! of this identity is a weak-error object: its across-world mean decays
//! at rate Δt (the per-world fluctuation also carries a martingale
//! component of order √Δt from the quadratic-variation mismatch
//! `(ΔW⁰)² − Δt`, which averaging over worlds suppresses — that is why
//! the scaling statistic is |mean residual|, not mean |residual|).

use crate::calculus::CylindricalFn;
use crate::control::FeedbackPolicy;
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeasureSummary};
use crate::model::ModelSpec;
use crate::noise::NoiseBundle;
use crate::sim::{simulate_mkv, InitialLaw};
use crate::value::map_worlds;

/// Residual and its accumulated pieces for one world.
#[derive(Debug, Clone)]
pub struct ItoResidualReport {
    pub residual: f64,
    pub value_increment: f64,
    pub time_term: f64,
    pub drift_term: f64,
    pub second_order_term: f64,
    pub coupling_term: f64,
    pub martingale_term: f64,
}

/// Compute the residual along one simulated world.
pub fn ito_wentzell_residual(
    model: &ModelSpec,
    u: &CylindricalFn,
    init: &EmpiricalMeasure,
    policy: &FeedbackPolicy,
    noise: &NoiseBundle,
) -> Result<ItoResidualReport> {
    if u.dim() != model.d {
        return Err(Error::dimension("test function dimension must match the model"));
    }
    let grid = *noise.grid();
    let d = model.d;
    let m = model.m;
    let dt = grid.dt();
    let run = simulate_mkv(model, grid.t0(), init, policy, noise)?;
    let mut time_term = 0.0;
    let mut drift_term = 0.0;
    let mut second_order = 0.0;
    let mut coupling = 0.0;
    let mut martingale = 0.0;
    let mut grad = vec![0.0; d];
    let mut grad_x = vec![0.0; d * d];
    let mut drift = vec![0.0; d];
    for k in 0..grid.n_steps() {
        let t = grid.point(k);
        let mu = run.ensemble_at(k)?.measure()?;
        let summary = MeasureSummary::of(&mu);
        let view = summary.view(&mu);
        let pairings = u.pairings(&mu)?;
        let w0feat = model.w0_features(t, &noise.common)?;
        let sigma = model.sigma_matrix(t);
        let sigma0 = model.sigma0_matrix(t);
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
        time_term += u.time_deriv(t, &mu)? * dt;
        let n = mu.n();
        // Atom averages of the first-order and second-order brackets.
        let mut drift_avg = 0.0;
        let mut second_avg = 0.0;
        let mut mart_vec = vec![0.0; m];
        for i in 0..n {
            let x = mu.atom(i);
            u.lions_grad(t, &pairings, x, &mut grad);
            u.lions_grad_x(t, &pairings, x, &mut grad_x);
            let a = policy.act(k, x, &view);
            model.coeffs.drift(t, x, &view, a, &w0feat, &mut drift);
            for r in 0..d {
                drift_avg += grad[r] * drift[r];
            }
            for r in 0..d {
                for c in 0..d {
                    second_avg += 0.5 * a_mat[r * d + c] * grad_x[c * d + r];
                }
            }
            for c in 0..m {
                for r in 0..d {
                    mart_vec[c] += sigma0[r * m + c] * grad[r];
                }
            }
        }
        drift_term += drift_avg / n as f64 * dt;
        second_order += second_avg / n as f64 * dt;
        for c in 0..m {
            martingale += mart_vec[c] / n as f64 * noise.common.increment(k, c);
        }
        // Double atom average of the common-noise coupling, via the
        // factorised cylindrical form. tr(H·C) with H[r][c] summed
        // against C[c][r]: pass Cᵀ (C is symmetric here, so C itself).
        coupling += 0.5 * u.pair_average_hess_trace(t, &pairings, &mu, &c_mat)? * dt;
    }
    let mu0 = run.ensemble_at(0)?.measure()?;
    let mu_t = run.final_ensemble().measure()?;
    let value_increment =
        u.value(grid.t_end(), &mu_t)? - u.value(grid.t0(), &mu0)?;
    let residual =
        value_increment - time_term - drift_term - second_order - coupling - martingale;
    Ok(ItoResidualReport {
        residual,
        value_increment,
        time_term,
        drift_term,
        second_order_term: second_order,
        coupling_term: coupling,
        martingale_term: martingale,
    })
}

/// One point of the step-halving study.
#[derive(Debug, Clone)]
pub struct ItoScalingPoint {
    pub dt: f64,
    /// |mean over worlds of the residual| — the weak-error statistic.
    pub weak_error: f64,
    /// Mean of |residual| (diagnostic; carries the √Δt martingale part).
    pub mean_abs: f64,
    pub stderr: f64,
    pub n_worlds: usize,
}

/// Residual scaling under step halving on shared noise: a fine bundle is
/// sampled once per world and restricted to each coarser grid, so the
/// three runs see the same Brownian paths.
#[allow(clippy::too_many_arguments)]
pub fn ito_weak_error_scaling(
    model: &ModelSpec,
    u: &CylindricalFn,
    init: &InitialLaw,
    policy_atom: usize,
    control_points: usize,
    fine_steps: usize,
    coarsen_factors: &[usize],
    n_worlds: usize,
    n_particles: usize,
    seed: u64,
) -> Result<Vec<ItoScalingPoint>> {
    use crate::control::ControlGrid;
    use std::sync::Arc;
    let cgrid = Arc::new(ControlGrid::discretize(&model.control, control_points)?);
    let fine_grid = crate::noise::TimeGrid::new(0.0, 1.0, fine_steps)?;
    let mut points = Vec::with_capacity(coarsen_factors.len());
    for &factor in coarsen_factors {
        let steps = fine_steps / factor;
        let policy = FeedbackPolicy::constant(cgrid.clone(), policy_atom, steps)?;
        let residuals = map_worlds(n_worlds, |w| {
            let fine = NoiseBundle::sample(fine_grid, model.m, n_particles, seed, w as u32, false)?;
            let noise = fine.coarsen(factor)?;
            let cloud = init.sample(n_particles, seed, w as u32)?;
            Ok(ito_wentzell_residual(model, u, &cloud, &policy, &noise)?.residual)
        })?;
        let mean = residuals.iter().sum::<f64>() / n_worlds as f64;
        let var = residuals
            .iter()
            .map(|r| (r - mean) * (r - mean))
            .sum::<f64>()
            / (n_worlds.max(2) - 1) as f64;
        let mean_abs = residuals.iter().map(|r| r.abs()).sum::<f64>() / n_worlds as f64;
        points.push(ItoScalingPoint {
            dt: noise_dt(fine_grid, factor),
            weak_error: mean.abs(),
            mean_abs,
            stderr: (var / n_worlds as f64).sqrt(),
            n_worlds,
        });
    }
    Ok(points)
}

fn noise_dt(fine: crate::noise::TimeGrid, factor: usize) -> f64 {
    fine.dt() * factor as f64
}
