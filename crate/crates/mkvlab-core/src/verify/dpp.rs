//! Dynamic-programming residual: compare the value at the initial time
//! against the optimised running-cost-plus-continuation at a stopping
//! time,
//!
//! ```text
//! residual = | v̂(t₀, μ) − min_π E[ ∫_{t₀}^{θ} f dt + v̂(θ, ρ̂_θ) ] |,
//! ```
//!
//! with the continuation `v̂(θ, ·)` evaluated through a fitted value table
//! over measure features (cloud mean), estimated on held-out worlds. The
//! easy half of the principle — `v̂(t₀, μ) ≤ RHS(π) + 3σ` for *every*
//! searched π — holds classwise regardless of whether the class is
//! value-dense, and is reported alongside.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::control::{ControlGrid, FeedbackPolicy, StoppingRule};
use crate::error::Result;
use crate::measure::{EmpiricalMeasure, MeasureSummary};
use crate::model::ModelSpec;
use crate::noise::TimeGrid;
use crate::sim::{simulate_mkv_segment, InitialLaw};
use crate::value::{
    map_worlds, mean_of_slice, search_value_on_worlds, McConfig, PolicyClass, SearchBudget,
    ValueEstimate,
};

/// Configuration of one residual check.
#[derive(Debug, Clone)]
pub struct DppConfig {
    pub theta: StoppingRule,
    /// Class for the left-hand value search (full horizon).
    pub class: PolicyClass,
    pub budget: SearchBudget,
    /// Mean-feature bins of the fitted continuation table.
    pub inner_mean_bins: usize,
    /// Held-out worlds per continuation estimate.
    pub inner_worlds: usize,
    /// Class of the continuation estimates.
    pub inner_class: PolicyClass,
    pub inner_budget: SearchBudget,
}

/// Outcome of the check.
#[derive(Debug, Clone)]
pub struct DppReport {
    pub lhs: ValueEstimate,
    pub rhs: ValueEstimate,
    pub residual: f64,
    pub combined_stderr: f64,
    /// max over searched candidates of (lhs − RHS(candidate) − 3σ),
    /// clamped at zero — positive values violate the easy inequality.
    pub easy_half_violation: f64,
    /// Observed range of stopping indices across worlds.
    pub theta_index_range: (usize, usize),
}

/// Terminal evaluation v̂(T, ρ) = (1/n) Σ g(x_i, ρ̂): exact, no search.
fn terminal_value(model: &ModelSpec, cloud: &EmpiricalMeasure, w0feat: &[f64]) -> Result<f64> {
    let summary = MeasureSummary::of(cloud);
    let view = summary.view(cloud);
    cloud.pair(|x| model.coeffs.terminal_cost(x, &view, w0feat))
}

/// Run the residual check.
pub fn dpp_residual(
    model: &ModelSpec,
    cfg: &McConfig,
    init: &InitialLaw,
    cgrid: Arc<ControlGrid>,
    dpp: &DppConfig,
) -> Result<DppReport> {
    let worlds = crate::value::build_worlds(model, cfg, init, false, 0)?;
    let n_steps = cfg.grid.n_steps();

    // Left side: optimised full-horizon value.
    let (lhs, lhs_policy) =
        search_value_on_worlds(model, &worlds, cfg, cgrid.clone(), dpp.class, &dpp.budget)?;

    // Stopping indices per world.
    let theta_idx: Vec<usize> = worlds
        .iter()
        .map(|w| dpp.theta.evaluate(&w.noise.common))
        .collect::<Result<_>>()?;
    let k_min = *theta_idx.iter().min().unwrap();
    let k_max = *theta_idx.iter().max().unwrap();

    // Stage-one candidates: every constant control plus the left-side
    // optimum restricted to the pre-θ leg.
    let mut candidates: Vec<FeedbackPolicy> = (0..cgrid.len())
        .map(|atom| FeedbackPolicy::constant(cgrid.clone(), atom, n_steps))
        .collect::<Result<_>>()?;
    candidates.push(lhs_policy);

    let mut best_rhs: Option<Vec<f64>> = None;
    let mut easy_violation = 0.0f64;
    for cand in &candidates {
        // Pre-θ leg per world.
        let legs = map_worlds(worlds.len(), |w| {
            let sw = &worlds[w];
            let run = simulate_mkv_segment(
                model,
                0,
                theta_idx[w],
                sw.init.points().to_vec(),
                cand,
                &sw.noise,
            )?;
            let cost1 = mean_of_slice(&run.running_cost);
            let cloud = run.final_ensemble().measure()?;
            Ok((cost1, cloud))
        })?;
        // Group worlds by (θ index, mean bin) and fit the continuation
        // table on representatives.
        let means: Vec<f64> = legs.iter().map(|(_, c)| c.mean()[0]).collect();
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        let bins = dpp.inner_mean_bins.max(1);
        let bin_of = |mean: f64| -> usize {
            (((mean - lo) / span * bins as f64).floor() as usize).min(bins - 1)
        };
        // Worlds stopped strictly before the horizon are grouped into the
        // fitted table; worlds stopped at T get the exact terminal
        // functional of their own cloud (no estimation needed there).
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (w, (_, cloud)) in legs.iter().enumerate() {
            if theta_idx[w] < n_steps {
                groups
                    .entry((theta_idx[w], bin_of(cloud.mean()[0])))
                    .or_default()
                    .push(w);
            }
        }
        let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (gi, (&(k_theta, bin), members)) in groups.iter().enumerate() {
            // Representative: member whose mean is closest to the bin
            // centre.
            let centre = lo + span * (bin as f64 + 0.5) / bins as f64;
            let rep = *members
                .iter()
                .min_by(|&&a, &&b| {
                    (means[a] - centre)
                        .abs()
                        .partial_cmp(&(means[b] - centre).abs())
                        .unwrap()
                })
                .unwrap();
            let cloud = legs[rep].1.clone();
            let t_theta = cfg.grid.point(k_theta);
            let inner_grid = TimeGrid::new(t_theta, cfg.grid.t_end(), n_steps - k_theta)?;
            let inner_cfg = McConfig {
                grid: inner_grid,
                n_worlds: dpp.inner_worlds,
                n_particles: cfg.n_particles,
                seed: cfg.seed ^ 0xD1,
            };
            let inner_worlds = crate::value::build_worlds(
                model,
                &inner_cfg,
                &InitialLaw::Cloud(cloud),
                false,
                1_000_000 + (gi * dpp.inner_worlds) as u32,
            )?;
            let (est, _) = search_value_on_worlds(
                model,
                &inner_worlds,
                &inner_cfg,
                cgrid.clone(),
                dpp.inner_class,
                &dpp.inner_budget,
            )?;
            table.insert((k_theta, bin), est.mean);
        }
        // Candidate right side per world.
        let rhs: Vec<f64> = legs
            .iter()
            .enumerate()
            .map(|(w, (cost1, cloud))| -> Result<f64> {
                let continuation = if theta_idx[w] == n_steps {
                    let w0feat = model.w0_features(cfg.grid.t_end(), &worlds[w].noise.common)?;
                    terminal_value(model, cloud, &w0feat)?
                } else {
                    table[&(theta_idx[w], bin_of(cloud.mean()[0]))]
                };
                Ok(cost1 + continuation)
            })
            .collect::<Result<_>>()?;
        let rhs_mean = mean_of_slice(&rhs);
        let rhs_se = stderr_of(&rhs);
        // Easy half: lhs ≤ RHS(candidate) + 3σ for every candidate.
        easy_violation =
            easy_violation.max(lhs.mean - rhs_mean - 3.0 * (lhs.stderr + rhs_se));
        let better = match &best_rhs {
            None => true,
            Some(b) => rhs_mean < mean_of_slice(b),
        };
        if better {
            best_rhs = Some(rhs);
        }
    }
    let rhs_vec = best_rhs.expect("at least one candidate");
    let rhs = ValueEstimate::from_samples(
        rhs_vec,
        cfg.n_particles,
        format!("dpp-rhs(|A|+1 candidates, bins={})", dpp.inner_mean_bins),
        false,
    );
    let combined = lhs.combined_stderr(&rhs);
    Ok(DppReport {
        residual: (lhs.mean - rhs.mean).abs(),
        combined_stderr: combined,
        easy_half_violation: easy_violation.max(0.0),
        theta_index_range: (k_min, k_max),
        lhs,
        rhs,
    })
}

fn stderr_of(v: &[f64]) -> f64 {
    let m = mean_of_slice(v);
    if v.len() < 2 {
        return 0.0;
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}
