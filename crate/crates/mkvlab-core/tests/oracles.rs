//! Independent-oracle pins for the Monte Carlo estimators: a
//! high-resolution direct simulation for the cost functional and the
//! Gaussian-shift Lipschitz budget for the aggregated value.

use std::sync::Arc;

use mkvlab_core::control::{ControlGrid, FeedbackPolicy};
use mkvlab_core::model::ModelSpec;
use mkvlab_core::noise::TimeGrid;
use mkvlab_core::sim::InitialLaw;
use mkvlab_core::value::{
    aggregate_value, estimate_j, estimate_nplayer_value, McConfig, PolicyClass, SearchBudget,
};

fn gaussian_init() -> InitialLaw {
    InitialLaw::Gaussian {
        mean: vec![0.0],
        std: 1.0,
    }
}

#[test]
fn estimate_j_matches_high_resolution_oracle() {
    // Bang-bang with the zero control: J = E[g(X_T, μ̂_T)]. The desk-scale
    // estimate must agree with an independent 10⁶-sample direct
    // simulation within three combined standard errors.
    let model = ModelSpec::bang_bang();
    let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
    let cgrid = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
    let desk = estimate_j(
        &model,
        &McConfig {
            grid,
            n_worlds: 32,
            n_particles: 2048,
            seed: 5,
        },
        &gaussian_init(),
        &FeedbackPolicy::constant(cgrid.clone(), 1, 32).unwrap(), // a = 0
    )
    .unwrap();
    // Oracle: 64 worlds × 16384 particles ≈ 10⁶ samples, fresh seed.
    let oracle = estimate_j(
        &model,
        &McConfig {
            grid,
            n_worlds: 64,
            n_particles: 16384,
            seed: 987_654,
        },
        &gaussian_init(),
        &FeedbackPolicy::constant(cgrid, 1, 32).unwrap(),
    )
    .unwrap();
    let combined = desk.combined_stderr(&oracle);
    assert!(
        (desk.mean - oracle.mean).abs() <= 3.0 * combined,
        "desk {} vs oracle {} (3σ = {})",
        desk.mean,
        oracle.mean,
        3.0 * combined
    );
}

#[test]
fn aggregate_shift_obeys_lipschitz_budget() {
    // |𝔳 − v_n| ≤ K · E|shift| + 3σ with E|shift| = (ε⁰ + ε¹)√(2 t₀/π)
    // for the scalar Gaussian smoothing at initial time t₀ > 0.
    let model = ModelSpec::bang_bang();
    let grid = TimeGrid::new(0.5, 1.0, 16).unwrap();
    let cgrid = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
    let mu = gaussian_init().sample(64, 31, 0).unwrap();
    let cfg = McConfig {
        grid,
        n_worlds: 16,
        n_particles: 64,
        seed: 31,
    };
    let (eps0, eps1) = (0.25, 0.15);
    let (plain, _) = estimate_nplayer_value(
        &model,
        8,
        None,
        eps0,
        eps1,
        &cfg,
        &InitialLaw::Cloud(mu.clone()),
        cgrid.clone(),
        PolicyClass::Constant,
        &SearchBudget::default(),
        0,
    )
    .unwrap();
    let agg = aggregate_value(
        &model,
        8,
        None,
        eps0,
        eps1,
        &cfg,
        &mu,
        24,
        cgrid,
        PolicyClass::Constant,
        &SearchBudget::default(),
    )
    .unwrap();
    let t0 = 0.5;
    // Mean absolute shift: ε⁰|B̄⁰_{t0}| has mean ε⁰√(2t₀/π); the ε¹ part
    // convolves each atom with the same magnitude budget.
    let mean_shift_budget = (eps0 + eps1) * (2.0 * t0 / std::f64::consts::PI).sqrt();
    let gap = (agg.estimate.mean - plain.mean).abs();
    let slack = 3.0 * agg.estimate.combined_stderr(&plain);
    assert!(
        gap <= model.lip_const * mean_shift_budget + slack,
        "gap {gap} vs K·E|shift| + 3σ = {}",
        model.lip_const * mean_shift_budget + slack
    );
    // The sampled mean shift itself concentrates near its analytic value.
    let analytic = eps0 * (2.0 * t0 / std::f64::consts::PI).sqrt();
    assert!(
        (agg.mean_abs_shift - analytic).abs() <= 4.0 * eps0 * t0.sqrt() / (24.0f64).sqrt(),
        "mean |shift| {} vs analytic {analytic}",
        agg.mean_abs_shift
    );
}
