//! Conditional-law invariance of the value: initial conditions with the
//! same per-world empirical law must produce the same value.
//!
//! Estimates are exactly permutation-invariant by construction (initial
//! atoms are canonicalised before noise pairing), so the permutation and
//! reflection cases give a literally zero gap. For independently
//! resampled clouds the residual gap is bounded by Monte Carlo noise plus
//! a sampling-bias term: the value is Lipschitz in the initial cloud, so
//! the bias is (fitted Lipschitz constant) × (mean 𝒲₂ between the paired
//! clouds).

use std::sync::Arc;

use crate::control::ControlGrid;
use crate::error::Result;
use crate::measure::EmpiricalMeasure;
use crate::model::ModelSpec;
use crate::noise::NoiseBundle;
use crate::transport::{wasserstein2, wasserstein2_sorted_1d, W2Method, EXACT_CAP};
use crate::value::{
    map_worlds, mean_of_slice, McConfig, PolicyClass, SearchBudget, SearchWorld, ValueEstimate,
};

/// Outcome of one invariance comparison.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub per_world_gap: Vec<f64>,
    /// |v̂(ξ) − v̂(η)| with v̂ averaged over worlds — the aggregated gap.
    pub gap: f64,
    /// Mean of the per-world |gap| (diagnostic).
    pub mean_abs_gap: f64,
    /// Standard error of the per-world cost difference (CRN-coupled).
    pub diff_stderr: f64,
    /// √(se_ξ² + se_η²) of the two value estimates.
    pub combined_stderr: f64,
    /// Fitted value-Lipschitz constant × mean 𝒲₂ between paired clouds.
    pub bias_term: f64,
    pub value_xi: ValueEstimate,
    pub value_eta: ValueEstimate,
    /// gap ≤ 3·combined_stderr + bias_term.
    pub pass: bool,
}

/// Distance between paired clouds, routed by size (exact assignment up
/// to the cap, the sorted 1-d formula beyond).
fn cloud_distance(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.n() <= EXACT_CAP && a.n() == b.n() {
        wasserstein2(a, b, W2Method::Exact)
    } else {
        wasserstein2_sorted_1d(a, b)
    }
}

/// Compare the value estimated from two per-world initial-cloud samplers
/// on shared noise. `lip_fit` scales the 𝒲₂ sampling-bias allowance
/// (zero for exact-equality cases such as permutations).
#[allow(clippy::too_many_arguments)]
pub fn law_invariance_gap(
    model: &ModelSpec,
    cfg: &McConfig,
    cgrid: Arc<ControlGrid>,
    class: PolicyClass,
    budget: &SearchBudget,
    xi: impl Fn(u32) -> Result<EmpiricalMeasure> + Sync + Send,
    eta: impl Fn(u32) -> Result<EmpiricalMeasure> + Sync + Send,
    lip_fit: f64,
) -> Result<InvarianceReport> {
    cfg.validate()?;
    let noises = map_worlds(cfg.n_worlds, |w| {
        NoiseBundle::sample(cfg.grid, model.m, cfg.n_particles, cfg.seed, w as u32, false)
    })?;
    let build = |sampler: &(dyn Fn(u32) -> Result<EmpiricalMeasure> + Sync)| -> Result<Vec<SearchWorld>> {
        map_worlds(cfg.n_worlds, |w| {
            Ok(SearchWorld {
                noise: noises[w].clone(),
                init: sampler(w as u32)?.canonicalized(),
            })
        })
    };
    let worlds_xi = build(&xi)?;
    let worlds_eta = build(&eta)?;
    let (est_xi, _) = crate::value::search_value_on_worlds(
        model,
        &worlds_xi,
        cfg,
        cgrid.clone(),
        class,
        budget,
    )?;
    let (est_eta, _) =
        crate::value::search_value_on_worlds(model, &worlds_eta, cfg, cgrid, class, budget)?;
    let mut gaps = Vec::with_capacity(cfg.n_worlds);
    let mut diffs = Vec::with_capacity(cfg.n_worlds);
    let mut w2_sum = 0.0;
    for w in 0..cfg.n_worlds {
        let d = est_xi.per_world[w] - est_eta.per_world[w];
        diffs.push(d);
        gaps.push(d.abs());
        w2_sum += cloud_distance(&worlds_xi[w].init, &worlds_eta[w].init)?;
    }
    let mean_abs_gap = mean_of_slice(&gaps);
    let dm = mean_of_slice(&diffs);
    let dvar = diffs.iter().map(|v| (v - dm) * (v - dm)).sum::<f64>()
        / (cfg.n_worlds.max(2) - 1) as f64;
    let diff_stderr = (dvar / cfg.n_worlds as f64).sqrt();
    let combined_stderr = est_xi.combined_stderr(&est_eta);
    let bias_term = lip_fit * w2_sum / cfg.n_worlds as f64;
    let gap = (est_xi.mean - est_eta.mean).abs();
    let pass = gap <= 3.0 * combined_stderr + bias_term;
    Ok(InvarianceReport {
        per_world_gap: gaps,
        gap,
        mean_abs_gap,
        diff_stderr,
        combined_stderr,
        bias_term,
        value_xi: est_xi,
        value_eta: est_eta,
        pass,
    })
}

/// Exact invariance under a supplied atom permutation of a fixed cloud:
/// returns the (identically zero) gap report.
pub fn permutation_invariance_gap(
    model: &ModelSpec,
    cfg: &McConfig,
    cgrid: Arc<ControlGrid>,
    class: PolicyClass,
    budget: &SearchBudget,
    cloud: &EmpiricalMeasure,
    permutation: &[usize],
) -> Result<InvarianceReport> {
    let d = cloud.dim();
    let mut permuted = Vec::with_capacity(cloud.points().len());
    for &i in permutation {
        permuted.extend_from_slice(cloud.atom(i));
    }
    let eta_cloud = EmpiricalMeasure::new(permuted, d)?;
    let xi_cloud = cloud.clone();
    law_invariance_gap(
        model,
        cfg,
        cgrid,
        class,
        budget,
        move |_| Ok(xi_cloud.clone()),
        move |_| Ok(eta_cloud.clone()),
        0.0,
    )
}
