//! The value sandwich of the uniqueness pipeline: the aggregated n-player
//! value plus-or-minus the scalar envelope must bracket the mean-field
//! value,
//!
//! ```text
//! 𝔳 − Y(t₀) − slack  ≤  v̂  ≤  𝔳 + Y(t₀) + slack,
//! ```
//!
//! where the slack collects three components that the continuous theory
//! sends to zero but desk scale cannot: Monte Carlo noise (three combined
//! standard errors), the finite-population bias measured as the n-sample
//! empirical 𝒲₁ distance `ĥ_n` times a fitted dimensional constant, and
//! the smoothing budget `2K M₁ / m`. The gradient constant C_K in the
//! envelope driver is not supplied by the theory; it is fitted here as
//! `n · max_i |∂_{x_i} v̄_n|` from finite differences of the n-player
//! value and reported with the result.

use std::sync::Arc;

use crate::control::ControlGrid;
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeasureSummary};
use crate::model::ModelSpec;
use crate::mollify::{mollification_error_bound, MollifiedCoefficients, MollifierSpec};
use crate::noise::TimeGrid;
use crate::rng::aux_rng;
use crate::sim::InitialLaw;
use crate::transport::wasserstein1_quantile_1d;
use crate::value::{
    aggregate_value, estimate_nplayer_value, estimate_value, McConfig, PolicyClass, SearchBudget,
};
use crate::verify::envelope::{bsde_envelope, ResidualPaths};

/// Tuning of one sandwich run.
#[derive(Debug, Clone)]
pub struct SandwichConfig {
    pub eps: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub n_list: Vec<usize>,
    pub m_list: Vec<u32>,
    pub moll_nodes: usize,
    pub n_reg_samples: usize,
    /// Subsample draws for the ĥ_n measurement.
    pub h_n_draws: usize,
    /// Finite-difference step of the C_K fit.
    pub fd_step: f64,
    pub class: PolicyClass,
    pub budget: SearchBudget,
    /// Worlds per n-player estimate.
    pub np_worlds: usize,
}

/// One (n, m) row of the report.
#[derive(Debug, Clone)]
pub struct SandwichEntry {
    pub n_players: usize,
    pub scale: u32,
    pub v_hat: f64,
    pub v_hat_se: f64,
    pub frak_v: f64,
    pub frak_v_se: f64,
    /// Envelope at the initial time.
    pub y0: f64,
    pub c_k_fit: f64,
    pub h_n_hat: f64,
    pub c_d_fit: f64,
    pub slack: f64,
    pub lower: f64,
    pub upper: f64,
    /// Positive magnitude when v̂ escapes the bracket.
    pub violation: f64,
    pub width: f64,
}

#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub entries: Vec<SandwichEntry>,
    pub eps: f64,
    pub eps0: f64,
    pub eps1: f64,
    /// Human-readable violations (empty when the bracket holds
    /// everywhere).
    pub violations: Vec<String>,
}

impl SandwichReport {
    pub fn max_width(&self) -> f64 {
        self.entries.iter().map(|e| e.width).fold(0.0, f64::max)
    }
}

/// Empirical n-sample 𝒲₁ bias of a reference cloud: the mean distance
/// between an n-atom iid subsample and the cloud itself.
pub fn measure_h_n(mu_ref: &EmpiricalMeasure, n: usize, draws: usize, seed: u64) -> Result<f64> {
    if mu_ref.dim() != 1 {
        return Err(Error::unsupported("h_n measurement is one-dimensional"));
    }
    let mut acc = 0.0;
    for s in 0..draws.max(1) {
        let sub = mu_ref.subsample(n, seed ^ ((s as u64) << 9))?;
        acc += wasserstein1_quantile_1d(&sub, mu_ref)?;
    }
    Ok(acc / draws.max(1) as f64)
}

/// Fit the dimensional constant of the finite-population error: observed
/// averaged smoothed-terminal error against product samples, minus the
/// analytic m-term, normalised by `K · (∫|x|² μ)^{1/2} · ĥ_n`.
pub fn fit_cd(
    model: &ModelSpec,
    mc: &MollifiedCoefficients,
    moll: &MollifierSpec,
    mu_ref: &EmpiricalMeasure,
    h_n_hat: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    use rand::Rng;
    let n = mc.n_players;
    let d = model.d;
    let mut rng = aux_rng(seed, 0xCD);
    let mut smoothed_avg = 0.0;
    for _ in 0..draws.max(1) {
        let mut xbar = Vec::with_capacity(n * d);
        for _ in 0..n {
            let i = rng.gen_range(0..mu_ref.n());
            xbar.extend_from_slice(mu_ref.atom(i));
        }
        let mut per_player = 0.0;
        for i in 0..n {
            per_player += mc.terminal(i, &xbar, &[])?;
        }
        smoothed_avg += per_player / n as f64;
    }
    smoothed_avg /= draws.max(1) as f64;
    let summary = MeasureSummary::of(mu_ref);
    let view = summary.view(mu_ref);
    let exact = mu_ref.pair(|x| model.coeffs.terminal_cost(x, &view, &[]))?;
    let err = (smoothed_avg - exact).abs();
    let m_term = mollification_error_bound(model.lip_const, mc.scale, moll);
    let denom = model.lip_const * mu_ref.second_moment().sqrt() * h_n_hat;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok(((err - m_term).max(0.0)) / denom)
}

/// Fit C_K as `n · max |∂_{x_i} v̄_n|` by central finite differences of
/// the n-player value in one initial atom, at a frozen representative
/// initial vector and a frozen policy class.
#[allow(clippy::too_many_arguments)]
pub fn fit_c_k(
    model: &ModelSpec,
    n_players: usize,
    mollified: Option<&MollifiedCoefficients>,
    eps0: f64,
    eps1: f64,
    cfg: &McConfig,
    mu_ref: &EmpiricalMeasure,
    cgrid: Arc<ControlGrid>,
    fd_step: f64,
) -> Result<f64> {
    // Representative joint state: evenly spaced quantile atoms of the
    // canonical reference cloud, so the probe spans the distribution
    // instead of clustering in one tail (where clipped costs saturate
    // and the derivative degenerates).
    let base_cloud = {
        let canon = mu_ref.canonicalized();
        let mut pts = Vec::with_capacity(n_players * model.d);
        for i in 0..n_players {
            let q = (2 * i + 1) * canon.n() / (2 * n_players);
            pts.extend_from_slice(canon.atom(q.min(canon.n() - 1)));
        }
        EmpiricalMeasure::new(pts, model.d)?
    };
    let budget = SearchBudget::default();
    let values_at = |cloud: EmpiricalMeasure| -> Result<Vec<f64>> {
        let (est, _) = estimate_nplayer_value(
            model,
            n_players,
            mollified,
            eps0,
            eps1,
            cfg,
            &InitialLaw::Cloud(cloud),
            cgrid.clone(),
            PolicyClass::Constant,
            &budget,
            0,
        )?;
        Ok(est.per_world)
    };
    // The bound is per common-noise realization, so the quotient is
    // taken world by world (common random numbers) and the worst world
    // wins; averaging first would let opposite-sign worlds cancel. By
    // exchangeability one atom probe suffices; probe two slots anyway.
    let mut max_grad = 0.0f64;
    for probe_atom in [0usize, n_players / 2] {
        let mut plus = base_cloud.points().to_vec();
        let mut minus = plus.clone();
        plus[probe_atom * model.d] += fd_step;
        minus[probe_atom * model.d] -= fd_step;
        let vp = values_at(EmpiricalMeasure::new(plus, model.d)?)?;
        let vm = values_at(EmpiricalMeasure::new(minus, model.d)?)?;
        for (p, m) in vp.iter().zip(&vm) {
            max_grad = max_grad.max(((p - m) / (2.0 * fd_step)).abs());
        }
    }
    Ok(n_players as f64 * max_grad)
}

/// Run the sandwich over the (n, m) lists at one (ε, ε⁰, ε¹).
pub fn sandwich_check(
    model: &ModelSpec,
    mf_cfg: &McConfig,
    mu_ref: &EmpiricalMeasure,
    cfg: &SandwichConfig,
    cgrid: Arc<ControlGrid>,
) -> Result<SandwichReport> {
    model.require_constant_diffusions()?;
    if cfg.n_list.is_empty() || cfg.m_list.is_empty() {
        return Err(Error::precondition("need at least one (n, m) pair"));
    }
    let moll = MollifierSpec::bump(model.d)?;
    // The mean-field value does not depend on (n, m): estimate once.
    let (v_hat, _) = estimate_value(
        model,
        mf_cfg,
        &InitialLaw::Cloud(mu_ref.clone()),
        cgrid.clone(),
        cfg.class,
        &cfg.budget,
    )?;
    let np_cfg = McConfig {
        grid: mf_cfg.grid,
        n_worlds: cfg.np_worlds,
        n_particles: mf_cfg.n_particles,
        seed: mf_cfg.seed,
    };
    let envelope_grid = TimeGrid::new(mf_cfg.grid.t0().max(0.0), mf_cfg.grid.t_end(), 64)
        .or_else(|_| TimeGrid::new(0.0, mf_cfg.grid.t_end(), 64))?;
    let mut entries = Vec::new();
    let mut violations = Vec::new();
    for &n in &cfg.n_list {
        for &m in &cfg.m_list {
            let mc = MollifiedCoefficients::new(
                model,
                &moll,
                n,
                m,
                cfg.moll_nodes,
                mf_cfg.seed ^ 0x4D,
            )?;
            let agg = aggregate_value(
                model,
                n,
                Some(&mc),
                cfg.eps0,
                cfg.eps1,
                &np_cfg,
                mu_ref,
                cfg.n_reg_samples,
                cgrid.clone(),
                cfg.class,
                &cfg.budget,
            )?;
            let c_k = fit_c_k(
                model,
                n,
                Some(&mc),
                cfg.eps0,
                cfg.eps1,
                &np_cfg,
                mu_ref,
                cgrid.clone(),
                cfg.fd_step,
            )?;
            let h_n = measure_h_n(mu_ref, n, cfg.h_n_draws, mf_cfg.seed ^ 0x48)?;
            let c_d = fit_cd(model, &mc, &moll, mu_ref, h_n, cfg.h_n_draws, mf_cfg.seed ^ 0xCD)?;
            let envelope = bsde_envelope(
                cfg.eps,
                cfg.eps0,
                cfg.eps1,
                model.lip_const,
                c_k,
                &envelope_grid,
                &ResidualPaths::zero(&envelope_grid),
            )?;
            let y0 = envelope.y_at_start();
            let m_term = mollification_error_bound(model.lip_const, m, &moll);
            let h_term = c_d * model.lip_const * mu_ref.second_moment().sqrt() * h_n;
            let slack =
                3.0 * (v_hat.stderr + agg.estimate.stderr) + h_term + m_term;
            let lower = agg.estimate.mean - y0 - slack;
            let upper = agg.estimate.mean + y0 + slack;
            let violation = (lower - v_hat.mean).max(v_hat.mean - upper).max(0.0);
            if violation > 0.0 {
                violations.push(format!(
                    "(n={n}, m={m}): v̂ = {:.6} outside [{lower:.6}, {upper:.6}] by {violation:.3e}",
                    v_hat.mean
                ));
            }
            entries.push(SandwichEntry {
                n_players: n,
                scale: m,
                v_hat: v_hat.mean,
                v_hat_se: v_hat.stderr,
                frak_v: agg.estimate.mean,
                frak_v_se: agg.estimate.stderr,
                y0,
                c_k_fit: c_k,
                h_n_hat: h_n,
                c_d_fit: c_d,
                slack,
                lower,
                upper,
                violation,
                width: upper - lower,
            });
        }
    }
    Ok(SandwichReport {
        entries,
        eps: cfg.eps,
        eps0: cfg.eps0,
        eps1: cfg.eps1,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_cloud(n: usize) -> EmpiricalMeasure {
        InitialLaw::Gaussian {
            mean: vec![0.0],
            std: 0.8,
        }
        .sample(n, 5, 0)
        .unwrap()
    }

    fn base_cfg() -> SandwichConfig {
        SandwichConfig {
            eps: 0.1,
            eps0: 0.1,
            eps1: 0.1,
            n_list: vec![4],
            m_list: vec![4],
            moll_nodes: 128,
            n_reg_samples: 2,
            h_n_draws: 8,
            fd_step: 0.1,
            class: PolicyClass::Constant,
            budget: SearchBudget::default(),
            np_worlds: 6,
        }
    }

    #[test]
    fn unit_running_cost_matches_horizon_on_both_sides() {
        // f ≡ 1, g = 0: every value equals T − t0; the bracket holds with
        // width equal to twice the envelope plus slack.
        let model = ModelSpec {
            name: "unit_f".into(),
            d: 1,
            m: 1,
            control: crate::model::ControlSet::singleton(vec![0.0]),
            lip_const: 1.0,
            anchors: vec![],
            w0_dependence: crate::model::CommonPathDependence::None,
            constant_diffusions: true,
            coeffs: std::sync::Arc::new(crate::model::Scalar1dCoeffs {
                drift_fn: |_, _, _, _| 0.0,
                running_fn: |_, _, _, _| 1.0,
                terminal_fn: |_, _| 0.0,
                sigma: 0.15,
                sigma0: 0.2,
            }),
        };
        let mf_cfg = McConfig {
            grid: TimeGrid::new(0.0, 1.0, 16).unwrap(),
            n_worlds: 4,
            n_particles: 32,
            seed: 71,
        };
        let cgrid = Arc::new(ControlGrid::discretize(&model.control, 1).unwrap());
        let rep = sandwich_check(&model, &mf_cfg, &reference_cloud(32), &base_cfg(), cgrid).unwrap();
        let e = &rep.entries[0];
        assert!((e.v_hat - 1.0).abs() < 1e-12);
        assert!((e.frak_v - 1.0).abs() < 1e-12);
        assert!(rep.violations.is_empty());
        assert!((e.width - 2.0 * (e.y0 + e.slack)).abs() < 1e-12);
    }

    #[test]
    fn bang_bang_small_run_no_violations() {
        let model = ModelSpec::bang_bang();
        let mf_cfg = McConfig {
            grid: TimeGrid::new(0.0, 1.0, 16).unwrap(),
            n_worlds: 8,
            n_particles: 64,
            seed: 73,
        };
        let cgrid = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
        let rep =
            sandwich_check(&model, &mf_cfg, &reference_cloud(64), &base_cfg(), cgrid).unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        let e = &rep.entries[0];
        assert!(e.c_k_fit >= 0.0 && e.h_n_hat > 0.0);
    }

    #[test]
    fn width_shrinks_with_epsilon() {
        let model = ModelSpec::bang_bang();
        let mf_cfg = McConfig {
            grid: TimeGrid::new(0.0, 1.0, 16).unwrap(),
            n_worlds: 6,
            n_particles: 48,
            seed: 79,
        };
        let cgrid = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
        let mu = reference_cloud(48);
        let mut widths = Vec::new();
        for eps in [0.2, 0.1, 0.05] {
            let mut cfg = base_cfg();
            cfg.eps = eps;
            cfg.eps0 = eps;
            cfg.eps1 = eps;
            let rep = sandwich_check(&model, &mf_cfg, &mu, &cfg, cgrid.clone()).unwrap();
            widths.push(rep.max_width());
        }
        assert!(
            widths[0] > widths[1] && widths[1] > widths[2],
            "widths {widths:?} not decreasing"
        );
    }

    #[test]
    fn split_bound_holds_on_held_out_draws() {
        // Fit the dimensional constant on one draw set, then check the
        // averaged smoothed-terminal error against the split budget
        // c_d·K·(∫|x|²μ)^{1/2}·ĥ_n + 2K M₁/m on fresh draws.
        use rand::Rng;
        let model = ModelSpec::bang_bang();
        let moll = MollifierSpec::bump(1).unwrap();
        let mu = reference_cloud(256);
        let n = 6;
        let m_scale = 8u32;
        let mc = MollifiedCoefficients::new(&model, &moll, n, m_scale, 512, 21).unwrap();
        let h_n = measure_h_n(&mu, n, 32, 5).unwrap();
        let c_d = fit_cd(&model, &mc, &moll, &mu, h_n, 64, 7).unwrap();
        let budget = c_d * model.lip_const * mu.second_moment().sqrt() * h_n
            + mollification_error_bound(model.lip_const, m_scale, &moll);
        // Held-out replications: same estimator, fresh product draws.
        let summary = MeasureSummary::of(&mu);
        let view = summary.view(&mu);
        let exact = mu
            .pair(|x| model.coeffs.terminal_cost(x, &view, &[]))
            .unwrap();
        for rep in 0..3u64 {
            let mut rng = crate::rng::aux_rng(1000 + rep, 0xCD);
            let draws = 64;
            let mut smoothed = 0.0;
            for _ in 0..draws {
                let mut xbar = Vec::with_capacity(n);
                for _ in 0..n {
                    let i = rng.gen_range(0..mu.n());
                    xbar.push(mu.atom(i)[0]);
                }
                let mut per = 0.0;
                for i in 0..n {
                    per += mc.terminal(i, &xbar, &[]).unwrap();
                }
                smoothed += per / n as f64;
            }
            smoothed /= draws as f64;
            let err = (smoothed - exact).abs();
            // Allow the Monte Carlo error of the draw average on top of
            // the analytic budget (the bound concerns the expectation).
            let mc_noise = 3.0 * model.lip_const / (draws as f64).sqrt();
            assert!(
                err <= budget + mc_noise,
                "rep {rep}: error {err} vs split budget {budget} + MC {mc_noise}"
            );
        }
    }

    #[test]
    fn c_k_fit_sees_active_gradient() {
        // The quantile representative keeps the clipped costs in their
        // active region, so the fitted gradient constant is positive for
        // the bang-bang terminal coupling.
        let model = ModelSpec::bang_bang();
        let cfg = McConfig {
            grid: TimeGrid::new(0.0, 1.0, 16).unwrap(),
            n_worlds: 8,
            n_particles: 64,
            seed: 99,
        };
        let cgrid = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
        let c_k = fit_c_k(
            &model,
            8,
            None,
            0.0,
            0.0,
            &cfg,
            &reference_cloud(512),
            cgrid,
            0.1,
        )
        .unwrap();
        assert!(c_k > 0.05, "fitted C_K = {c_k} looks degenerate");
    }

    #[test]
    fn h_n_bias_shrinks_with_n() {
        let mu = reference_cloud(512);
        let h4 = measure_h_n(&mu, 4, 16, 3).unwrap();
        let h16 = measure_h_n(&mu, 16, 16, 3).unwrap();
        let h64 = measure_h_n(&mu, 64, 16, 3).unwrap();
        assert!(h16 < h4 && h64 < h16, "h_n not decreasing: {h4} {h16} {h64}");
    }
}
