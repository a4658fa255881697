//! One function per subcommand: build the core inputs from the
//! configuration, run the check, and return the report plus ledger rows.

use std::sync::Arc;

use anyhow::Result;
use serde_json::json;

use mkvlab_core::calculus::{CylindricalFn, Polynomial1d};
use mkvlab_core::control::{ControlGrid, FeatureBins, FeedbackPolicy, StoppingRule};
use mkvlab_core::measure::EmpiricalMeasure;
use mkvlab_core::model::{probe_assumptions, ModelSpec};
use mkvlab_core::noise::TimeGrid;
use mkvlab_core::report::CheckReport;
use mkvlab_core::sim::{check_flow_property, InitialLaw};
use mkvlab_core::transport::{
    wasserstein2, wasserstein2_sorted_1d, entropic_w2, W2Method,
};
use mkvlab_core::value::{
    estimate_nplayer_value, estimate_value, fit_value_lipschitz, McConfig, PolicyClass,
    SearchBudget,
};
use mkvlab_core::verify::{
    compactness_probe, dpp_residual, hamiltonian, ito_weak_error_scaling, law_invariance_gap,
    sample_pl, sandwich_check, DppConfig,
};
use mkvlab_core::noise::NoiseBundle;

use crate::config::{ClassKind, ExperimentConfig, InitKind};
use crate::ledger::LedgerRow;

pub struct Outcome {
    pub report: CheckReport,
    pub rows: Vec<LedgerRow>,
    /// A search stopped on its evaluation budget somewhere.
    pub partial: bool,
}

fn model_of(cfg: &ExperimentConfig) -> Result<ModelSpec> {
    Ok(ModelSpec::by_name(&cfg.model.name, cfg.model.anchor_t1)?)
}

fn grid_of(cfg: &ExperimentConfig) -> Result<TimeGrid> {
    Ok(TimeGrid::new(cfg.grid.t0, cfg.grid.t_end, cfg.grid.n_steps)?)
}

fn mc_of(cfg: &ExperimentConfig) -> Result<McConfig> {
    Ok(McConfig {
        grid: grid_of(cfg)?,
        n_worlds: cfg.mc.worlds,
        n_particles: cfg.mc.particles,
        seed: cfg.mc.seed,
    })
}

fn init_of(cfg: &ExperimentConfig) -> InitialLaw {
    match cfg.init.kind {
        InitKind::Gaussian => InitialLaw::Gaussian {
            mean: vec![cfg.init.mean],
            std: cfg.init.std,
        },
        InitKind::Uniform => InitialLaw::Uniform {
            lo: vec![cfg.init.lo],
            hi: vec![cfg.init.hi],
        },
        InitKind::TwoPoint => InitialLaw::TwoPoint {
            a: cfg.init.lo,
            b: cfg.init.hi,
        },
    }
}

fn cgrid_of(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<Arc<ControlGrid>> {
    Ok(Arc::new(ControlGrid::discretize(
        &model.control,
        cfg.control.atoms,
    )?))
}

fn class_of(cfg: &ExperimentConfig) -> PolicyClass {
    match cfg.control.class {
        ClassKind::Constant => PolicyClass::Constant,
        ClassKind::Table => PolicyClass::Table {
            bins: FeatureBins {
                x_bins: cfg.control.x_bins,
                mean_bins: cfg.control.mean_bins,
                ..FeatureBins::default_1d()
            },
            n_blocks: cfg.control.time_blocks,
        },
    }
}

fn budget_of(cfg: &ExperimentConfig) -> SearchBudget {
    SearchBudget {
        passes: cfg.control.passes,
        max_evals: cfg.control.max_evals,
    }
}

fn base_params(cfg: &ExperimentConfig) -> serde_json::Value {
    json!({
        "model": cfg.model.name,
        "t0": cfg.grid.t0,
        "t_end": cfg.grid.t_end,
        "n_steps": cfg.grid.n_steps,
        "n_worlds": cfg.mc.worlds,
        "n_particles": cfg.mc.particles,
        "seed": cfg.mc.seed,
    })
}

fn row(
    cfg_hash: &str,
    sub: &str,
    statistic: &str,
    value: f64,
    stderr: f64,
    pass: bool,
) -> LedgerRow {
    LedgerRow {
        subcommand: sub.into(),
        config_hash: cfg_hash.into(),
        statistic: statistic.into(),
        value,
        stderr,
        pass,
    }
}

/// `simulate`: run the assumption probes and the flow-property check on
/// one world; dump the conditional-law path.
pub fn run_simulate(
    cfg: &ExperimentConfig,
    hash: &str,
    out_dir: &std::path::Path,
) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let grid = grid_of(cfg)?;
    let noise = NoiseBundle::sample(grid, model.m, cfg.mc.particles, cfg.mc.seed, 0, false)?;
    let init = init_of(cfg).sample(cfg.mc.particles, cfg.mc.seed, 0)?;
    let cgrid = cgrid_of(cfg, &model)?;
    let policy = FeedbackPolicy::constant(cgrid, 0, grid.n_steps())?;
    let restart = grid.point(grid.n_steps() / 2);
    let gap = check_flow_property(&model, grid.t0(), restart, &init, &policy, &noise)?;
    let probes = probe_assumptions(&model, 256, 2.0, cfg.mc.seed)?;
    // Artifacts: the conditional-law path as CSV, the terminal ensemble
    // and the common path in the shared binary layout.
    let run = mkvlab_core::sim::simulate_mkv(&model, grid.t0(), &init, &policy, &noise)?;
    let law = run.law_path()?;
    let mut csv = Vec::new();
    law.write_csv(&mut csv)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("law_path.csv"), csv)?;
    let mut traj = Vec::new();
    run.final_ensemble().measure()?.write_binary(&mut traj)?;
    std::fs::write(out_dir.join("terminal_ensemble.bin"), traj)?;
    let mut w0 = Vec::new();
    noise.common.write_binary(cfg.mc.seed, &mut w0)?;
    std::fs::write(out_dir.join("common_path.bin"), w0)?;
    let pass = gap == 0.0 && probes.pass;
    let report = CheckReport::new(
        "simulate",
        &model.name,
        json!({
            "base": base_params(cfg),
            "k_hat_lip": probes.k_hat_lip,
            "k_hat_bound": probes.k_hat_bound,
            "restart_time": restart,
        }),
        gap,
        0.0,
        pass,
    );
    let rows = vec![
        row(hash, "simulate", "flow_gap", gap, 0.0, gap == 0.0),
        row(hash, "simulate", "k_hat_lip", probes.k_hat_lip, 0.0, probes.pass),
    ];
    Ok(Outcome {
        report,
        rows,
        partial: false,
    })
}

/// `value`: mean-field value over the configured class.
pub fn run_value(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let mc = mc_of(cfg)?;
    let (est, policy) = estimate_value(
        &model,
        &mc,
        &init_of(cfg),
        cgrid_of(cfg, &model)?,
        class_of(cfg),
        &budget_of(cfg),
    )?;
    let bound = model.lip_const * (cfg.grid.t_end + 1.0) + 3.0 * est.stderr;
    let pass = est.mean.abs() <= bound;
    let report = CheckReport::new(
        "value",
        &model.name,
        json!({
            "base": base_params(cfg),
            "class": est.class,
            "mean": est.mean,
            "stderr": est.stderr,
            "policy": policy.class_descriptor(),
            "partial": est.partial,
        }),
        est.mean,
        bound,
        pass,
    );
    let partial = est.partial;
    let rows = vec![
        row(hash, "value", "mean", est.mean, est.stderr, pass),
        row(hash, "value", "stderr", est.stderr, 0.0, true),
    ];
    Ok(Outcome {
        report,
        rows,
        partial,
    })
}

/// `nplayer-value`: the cooperative symmetric n-player value.
pub fn run_nplayer_value(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let mc = McConfig {
        n_worlds: cfg.approx.np_worlds,
        ..mc_of(cfg)?
    };
    let (est, _) = estimate_nplayer_value(
        &model,
        cfg.approx.players,
        None,
        cfg.approx.eps0,
        cfg.approx.eps1,
        &mc,
        &init_of(cfg),
        cgrid_of(cfg, &model)?,
        class_of(cfg),
        &budget_of(cfg),
        0,
    )?;
    let bound = model.lip_const * (cfg.grid.t_end + 1.0) + 3.0 * est.stderr;
    let pass = est.mean.abs() <= bound;
    let report = CheckReport::new(
        "nplayer-value",
        &model.name,
        json!({
            "base": base_params(cfg),
            "players": cfg.approx.players,
            "eps0": cfg.approx.eps0,
            "eps1": cfg.approx.eps1,
            "class": est.class,
            "mean": est.mean,
            "stderr": est.stderr,
        }),
        est.mean,
        bound,
        pass,
    );
    let partial = est.partial;
    let rows = vec![row(hash, "nplayer-value", "mean", est.mean, est.stderr, pass)];
    Ok(Outcome {
        report,
        rows,
        partial,
    })
}

/// `dpp`: dynamic-programming residual at the configured stopping rule.
pub fn run_dpp(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let mc = mc_of(cfg)?;
    let theta = if cfg.dpp.theta_hit_level > 0.0 {
        StoppingRule::FirstHitAbsCommon {
            level: cfg.dpp.theta_hit_level,
        }
    } else {
        StoppingRule::Deterministic(cfg.dpp.theta)
    };
    let rep = dpp_residual(
        &model,
        &mc,
        &init_of(cfg),
        cgrid_of(cfg, &model)?,
        &DppConfig {
            theta,
            class: class_of(cfg),
            budget: budget_of(cfg),
            inner_mean_bins: cfg.dpp.inner_mean_bins,
            inner_worlds: cfg.dpp.inner_worlds,
            inner_class: PolicyClass::Constant,
            inner_budget: SearchBudget::default(),
        },
    )?;
    let threshold = 3.0 * rep.combined_stderr + cfg.dpp.residual_tol;
    let pass = rep.residual <= threshold && rep.easy_half_violation == 0.0;
    let report = CheckReport::new(
        "dpp",
        &model.name,
        json!({
            "base": base_params(cfg),
            "lhs": rep.lhs.mean,
            "rhs": rep.rhs.mean,
            "combined_stderr": rep.combined_stderr,
            "easy_half_violation": rep.easy_half_violation,
            "theta_index_range": [rep.theta_index_range.0, rep.theta_index_range.1],
        }),
        rep.residual,
        threshold,
        pass,
    );
    let rows = vec![
        row(hash, "dpp", "residual", rep.residual, rep.combined_stderr, pass),
        row(
            hash,
            "dpp",
            "easy_half_violation",
            rep.easy_half_violation,
            0.0,
            rep.easy_half_violation == 0.0,
        ),
    ];
    Ok(Outcome {
        report,
        rows,
        partial: false,
    })
}

/// `law-invariance`: permutation (exact) and resampling (statistical)
/// invariance of the value in the initial cloud.
pub fn run_law_invariance(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let mc = mc_of(cfg)?;
    let cgrid = cgrid_of(cfg, &model)?;
    let law = init_of(cfg);
    // Exact permutation case.
    let cloud = law.sample(cfg.mc.particles, cfg.mc.seed ^ 0xA5, 0)?;
    let reversed = {
        let mut pts: Vec<f64> = cloud.points().to_vec();
        pts.reverse();
        EmpiricalMeasure::new(pts, 1)?
    };
    let perm_rep = law_invariance_gap(
        &model,
        &mc,
        cgrid.clone(),
        class_of(cfg),
        &budget_of(cfg),
        {
            let c = cloud.clone();
            move |_| Ok(c.clone())
        },
        move |_| Ok(reversed.clone()),
        0.0,
    )?;
    // Resampled case with a fitted Lipschitz bias allowance.
    let lip = {
        let policy = FeedbackPolicy::constant(cgrid.clone(), 0, cfg.grid.n_steps)?;
        fit_value_lipschitz(&model, &mc, &law, &policy, 1e-2, 2)?
    };
    let law_eta = init_of(cfg);
    let law_xi = init_of(cfg);
    let seed = cfg.mc.seed;
    let n_p = cfg.mc.particles;
    let resample_rep = law_invariance_gap(
        &model,
        &mc,
        cgrid,
        class_of(cfg),
        &budget_of(cfg),
        move |w| law_xi.sample(n_p, seed ^ 0x1111, w),
        move |w| law_eta.sample(n_p, seed ^ 0x2222, w),
        lip.ls.max(lip.max_ratio),
    )?;
    let pass = perm_rep.gap == 0.0 && resample_rep.pass;
    let report = CheckReport::new(
        "law-invariance",
        &model.name,
        json!({
            "base": base_params(cfg),
            "permutation_gap": perm_rep.gap,
            "resampled_gap": resample_rep.gap,
            "resampled_threshold": 3.0 * resample_rep.combined_stderr + resample_rep.bias_term,
            "bias_term": resample_rep.bias_term,
            "lipschitz_fit": lip.ls,
        }),
        resample_rep.gap,
        3.0 * resample_rep.combined_stderr + resample_rep.bias_term,
        pass,
    );
    let rows = vec![
        row(hash, "law-invariance", "permutation_gap", perm_rep.gap, 0.0, perm_rep.gap == 0.0),
        row(
            hash,
            "law-invariance",
            "resampled_gap",
            resample_rep.gap,
            resample_rep.combined_stderr,
            resample_rep.pass,
        ),
    ];
    Ok(Outcome {
        report,
        rows,
        partial: false,
    })
}

/// `hamiltonian`: closed-form spot check plus refinement monotonicity.
pub fn run_hamiltonian(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let mu = init_of(cfg).sample(cfg.mc.particles.min(256), cfg.mc.seed, 0)?;
    let u = CylindricalFn::squared_pairing(Box::new(Polynomial1d::identity()))?;
    let t_probe = cfg.grid.t0;
    let mut values = Vec::new();
    let mut worst_increase = 0.0f64;
    let mut prev = f64::INFINITY;
    for points in [2usize, 3, 5, 9, 17] {
        let grid = ControlGrid::discretize(&model.control, points)?;
        let h = hamiltonian(&model, t_probe, &mu, &u, &grid, None, &[])?;
        values.push(json!({"points": points, "h": h}));
        if h > prev {
            worst_increase = worst_increase.max(h - prev);
        }
        prev = h;
    }
    let pass = worst_increase <= 1e-12;
    let report = CheckReport::new(
        "hamiltonian",
        &model.name,
        json!({
            "base": base_params(cfg),
            "refinements": values,
        }),
        worst_increase,
        1e-12,
        pass,
    );
    let rows = vec![row(
        hash,
        "hamiltonian",
        "refinement_increase",
        worst_increase,
        0.0,
        pass,
    )];
    Ok(Outcome {
        report,
        rows,
        partial: false,
    })
}

/// `ito-wentzell`: step-halving scaling of the expansion residual.
pub fn run_ito(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let u = CylindricalFn::squared_pairing(Box::new(Polynomial1d::identity()))?;
    let atom = cfg.control.atoms - 1; // largest control in the grid
    let points = ito_weak_error_scaling(
        &model,
        &u,
        &init_of(cfg),
        atom,
        cfg.control.atoms,
        cfg.grid.n_steps,
        &[4, 2, 1],
        cfg.mc.worlds,
        cfg.mc.particles,
        cfg.mc.seed,
    )?;
    let mut ratios = Vec::new();
    for w in points.windows(2) {
        ratios.push(w[0].weak_error / w[1].weak_error.max(1e-300));
    }
    // Frozen or additive-exact dynamics leave no residual to scale; an
    // identically zero residual satisfies the expansion trivially.
    let degenerate_zero = points.iter().all(|p| p.weak_error < 1e-14);
    let pass = degenerate_zero || ratios.iter().all(|r| (1.5..=3.0).contains(r));
    let stat = if degenerate_zero {
        0.0
    } else {
        ratios.iter().cloned().fold(f64::NAN, f64::max)
    };
    let report = CheckReport::new(
        "ito-wentzell",
        &model.name,
        json!({
            "base": base_params(cfg),
            "points": points.iter().map(|p| json!({
                "dt": p.dt, "weak_error": p.weak_error, "mean_abs": p.mean_abs,
                "stderr": p.stderr,
            })).collect::<Vec<_>>(),
            "ratios": ratios,
        }),
        stat,
        3.0,
        pass,
    );
    let rows = vec![row(hash, "ito-wentzell", "worst_ratio", stat, 0.0, pass)];
    Ok(Outcome {
        report,
        rows,
        partial: false,
    })
}

/// `sandwich`: the aggregated-value bracket at the configured (ε, n, m).
pub fn run_sandwich(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let mc = mc_of(cfg)?;
    let mu_ref = init_of(cfg).sample(cfg.mc.particles, cfg.mc.seed, 0)?;
    let scfg = mkvlab_core::verify::sandwich::SandwichConfig {
        eps: cfg.approx.eps,
        eps0: cfg.approx.eps0,
        eps1: cfg.approx.eps1,
        n_list: vec![cfg.approx.players],
        m_list: vec![cfg.approx.scale],
        moll_nodes: cfg.approx.nodes,
        n_reg_samples: cfg.approx.reg_samples,
        h_n_draws: cfg.approx.h_n_draws,
        fd_step: cfg.approx.fd_step,
        class: class_of(cfg),
        budget: budget_of(cfg),
        np_worlds: cfg.approx.np_worlds,
    };
    let rep = sandwich_check(&model, &mc, &mu_ref, &scfg, cgrid_of(cfg, &model)?)?;
    let worst = rep
        .entries
        .iter()
        .map(|e| e.violation)
        .fold(0.0f64, f64::max);
    let pass = rep.violations.is_empty();
    let report = CheckReport::new(
        "sandwich",
        &model.name,
        json!({
            "base": base_params(cfg),
            "eps": rep.eps, "eps0": rep.eps0, "eps1": rep.eps1,
            "entries": rep.entries.iter().map(|e| json!({
                "n": e.n_players, "m": e.scale,
                "v_hat": e.v_hat, "frak_v": e.frak_v,
                "y0": e.y0, "slack": e.slack,
                "lower": e.lower, "upper": e.upper,
                "c_k_fit": e.c_k_fit, "h_n_hat": e.h_n_hat, "c_d_fit": e.c_d_fit,
                "width": e.width, "violation": e.violation,
            })).collect::<Vec<_>>(),
            "violations": rep.violations,
        }),
        worst,
        0.0,
        pass,
    );
    let mut rows = vec![row(hash, "sandwich", "max_violation", worst, 0.0, pass)];
    for e in &rep.entries {
        rows.push(row(
            hash,
            "sandwich",
            &format!("width_n{}_m{}", e.n_players, e.scale),
            e.width,
            0.0,
            true,
        ));
    }
    Ok(Outcome {
        report,
        rows,
        partial: false,
    })
}

/// `compactset`: reachable-set diagnostics and ε-net sizes.
pub fn run_compactset(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let grid = grid_of(cfg)?;
    let (elements, diag) = sample_pl(
        cfg.compact.l_bound,
        grid,
        &init_of(cfg),
        0.3,
        cfg.compact.samples,
        cfg.compact.worlds,
        cfg.compact.particles,
        cfg.compact.p,
        &cfg.compact.tail_radii,
        cfg.mc.seed,
    )?;
    let rep = compactness_probe(&elements, &cfg.compact.eps_levels)?;
    let tails_decreasing = diag.tails.windows(2).all(|w| w[1].1 <= w[0].1);
    let pass = tails_decreasing && rep.max_triangle_violation <= 1e-9 && rep.sub_exponential;
    let report = CheckReport::new(
        "compactset",
        &cfg.model.name,
        json!({
            "base": base_params(cfg),
            "c_fit": diag.c_fit,
            "tails": diag.tails,
            "net_sizes": rep.net_sizes,
            "sub_exponential": rep.sub_exponential,
        }),
        rep.max_triangle_violation,
        1e-9,
        pass,
    );
    let mut rows = vec![
        row(
            hash,
            "compactset",
            "max_triangle_violation",
            rep.max_triangle_violation,
            0.0,
            rep.max_triangle_violation <= 1e-9,
        ),
        row(hash, "compactset", "c_fit", diag.c_fit, 0.0, true),
    ];
    for (eps, size) in &rep.net_sizes {
        rows.push(row(
            hash,
            "compactset",
            &format!("net_size_eps_{eps}"),
            *size as f64,
            0.0,
            true,
        ));
    }
    Ok(Outcome {
        report,
        rows,
        partial: false,
    })
}

/// `wasserstein`: solver-vs-oracle agreement at the configured size.
pub fn run_wasserstein(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let n = cfg.wasserstein.atoms;
    let law = init_of(cfg);
    let mu = law.sample(n, cfg.mc.seed ^ 0xAA, 0)?;
    let nu = law.sample(n, cfg.mc.seed ^ 0xBB, 1)?;
    let exact = wasserstein2(&mu, &nu, W2Method::Exact)?;
    let sorted = wasserstein2_sorted_1d(&mu, &nu)?;
    let assignment_gap = (exact - sorted).abs();
    let ent = entropic_w2(
        &mu,
        &nu,
        (cfg.wasserstein.entropic_reg > 0.0).then_some(cfg.wasserstein.entropic_reg),
        500,
    )?;
    let bracket_ok = exact <= ent.value + 1e-9 && exact >= ent.lower - 1e-9;
    let pass = assignment_gap <= 1e-10 && bracket_ok;
    let report = CheckReport::new(
        "wasserstein",
        &cfg.model.name,
        json!({
            "base": base_params(cfg),
            "atoms": n,
            "exact": exact,
            "sorted_oracle": sorted,
            "entropic": ent.value,
            "entropic_gap": ent.gap,
        }),
        assignment_gap,
        1e-10,
        pass,
    );
    let rows = vec![
        row(hash, "wasserstein", "assignment_vs_sorted", assignment_gap, 0.0, assignment_gap <= 1e-10),
        row(hash, "wasserstein", "entropic_gap", ent.gap, 0.0, bracket_ok),
    ];
    Ok(Outcome {
        report,
        rows,
        partial: false,
    })
}
