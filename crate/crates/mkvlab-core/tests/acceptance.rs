//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with its statistic. Tolerances are pinned here, in code.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every
//! line; criteria 9 and 10 are the heavy ones (minutes, not seconds).

use std::sync::Arc;

use mkvlab_core::calculus::{CylindricalFn, Polynomial1d, QuadraticOuter, SineField};
use mkvlab_core::control::{ControlGrid, FeatureBins, FeedbackPolicy, StoppingRule};
use mkvlab_core::measure::{EmpiricalMeasure, MeasureSummary};
use mkvlab_core::model::{ControlSet, ModelSpec};
use mkvlab_core::noise::{NoiseBundle, TimeGrid};
use mkvlab_core::sim::{
    check_flow_property, moment_bounds, simulate_mkv, simulate_mkv_segment, InitialLaw,
};
use mkvlab_core::transport::{wasserstein2, wasserstein2_sorted_1d, W2Method};
use mkvlab_core::value::{
    build_worlds, estimate_nplayer_value, estimate_value, fit_value_lipschitz, mean_of_slice,
    McConfig, PolicyClass, SearchBudget,
};
use mkvlab_core::verify::{
    bsde_envelope, compactness_probe, dpp_residual, envelope_sup_coefficient,
    ito_weak_error_scaling, law_invariance_gap, sample_pl, DppConfig, ResidualPaths,
};

fn gaussian_init() -> InitialLaw {
    InitialLaw::Gaussian {
        mean: vec![0.0],
        std: 1.0,
    }
}

fn bang_grid(model: &ModelSpec, points: usize) -> Arc<ControlGrid> {
    Arc::new(ControlGrid::discretize(&model.control, points).unwrap())
}

fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {n:>2} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

// ── 1 · exact structural invariants ────────────────────────────────

#[test]
fn criterion_01_exact_structure() {
    // Flow-property gap is literally zero.
    let model = ModelSpec::bang_bang();
    let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
    let noise = NoiseBundle::sample(grid, 1, 128, 11, 0, false).unwrap();
    let init = gaussian_init().sample(128, 11, 0).unwrap();
    let policy = FeedbackPolicy::constant(bang_grid(&model, 3), 2, 64).unwrap();
    let flow_gap = check_flow_property(&model, 0.0, 0.5, &init, &policy, &noise).unwrap();

    // Common-noise translation of the conditional law, exact to 1e-12.
    let translate_model = ModelSpec {
        name: "common_only".into(),
        d: 1,
        m: 1,
        control: ControlSet::singleton(vec![0.0]),
        lip_const: 1.0,
        anchors: vec![],
        w0_dependence: mkvlab_core::model::CommonPathDependence::None,
        constant_diffusions: true,
        coeffs: Arc::new(mkvlab_core::model::Scalar1dCoeffs {
            drift_fn: |_, _, _, _| 0.0,
            running_fn: |_, _, _, _| 0.0,
            terminal_fn: |_, _| 0.0,
            sigma: 0.0,
            sigma0: 0.7,
        }),
    };
    let tn = NoiseBundle::sample(grid, 1, 64, 13, 0, false).unwrap();
    let tin = gaussian_init().sample(64, 13, 0).unwrap();
    let tpol = FeedbackPolicy::constant(
        Arc::new(ControlGrid::discretize(&translate_model.control, 1).unwrap()),
        0,
        64,
    )
    .unwrap();
    let run = simulate_mkv(&translate_model, 0.0, &tin, &tpol, &tn).unwrap();
    let mut translation_err = 0.0f64;
    for k in 0..=64 {
        let shift = 0.7 * tn.common.value(k)[0];
        let e = run.ensemble_at(k).unwrap();
        for i in 0..64 {
            translation_err = translation_err.max((e.state(i)[0] - (tin.atom(i)[0] + shift)).abs());
        }
    }

    // Permutation invariance of the value: exactly zero gap.
    let mc = McConfig {
        grid,
        n_worlds: 8,
        n_particles: 64,
        seed: 17,
    };
    let cloud = gaussian_init().sample(64, 17, 0).unwrap();
    let permuted = {
        let mut pts = cloud.points().to_vec();
        pts.reverse();
        pts.swap(3, 40);
        EmpiricalMeasure::new(pts, 1).unwrap()
    };
    let perm_rep = law_invariance_gap(
        &model,
        &mc,
        bang_grid(&model, 3),
        PolicyClass::Constant,
        &SearchBudget::default(),
        {
            let c = cloud.clone();
            move |_| Ok(c.clone())
        },
        move |_| Ok(permuted.clone()),
        0.0,
    )
    .unwrap();

    // f ≡ 1, g = 0: value equals the horizon.
    let unit_model = ModelSpec {
        name: "unit_f".into(),
        d: 1,
        m: 1,
        control: ControlSet::singleton(vec![0.0]),
        lip_const: 1.0,
        anchors: vec![],
        w0_dependence: mkvlab_core::model::CommonPathDependence::None,
        constant_diffusions: true,
        coeffs: Arc::new(mkvlab_core::model::Scalar1dCoeffs {
            drift_fn: |_, _, _, _| 0.0,
            running_fn: |_, _, _, _| 1.0,
            terminal_fn: |_, _| 0.0,
            sigma: 0.2,
            sigma0: 0.3,
        }),
    };
    let (unit_est, _) = estimate_value(
        &unit_model,
        &McConfig {
            grid,
            n_worlds: 4,
            n_particles: 32,
            seed: 19,
        },
        &gaussian_init(),
        Arc::new(ControlGrid::discretize(&unit_model.control, 1).unwrap()),
        PolicyClass::Constant,
        &SearchBudget::default(),
    )
    .unwrap();
    let horizon_err = (unit_est.mean - 1.0).abs();

    let pass = flow_gap == 0.0
        && translation_err <= 1e-12
        && perm_rep.gap == 0.0
        && horizon_err <= 1e-12;
    verdict(
        1,
        "exact structure",
        pass,
        &format!(
            "flow_gap = {flow_gap:.1e}, translation = {translation_err:.2e}, \
             permutation_gap = {:.1e}, horizon_err = {horizon_err:.2e}",
            perm_rep.gap
        ),
    );
}

// ── 2 · Wasserstein oracle equivalence ──────────────────────────────

fn brute_force_w2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            visit(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, visit);
            p.swap(k, i);
        }
    }
    let n = mu.n();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = (0..n)
            .map(|i| {
                mu.atom(i)
                    .iter()
                    .zip(nu.atom(p[i]))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        best = best.min(cost);
    });
    (best / n as f64).sqrt()
}

#[test]
fn criterion_02_wasserstein_oracles() {
    use rand::Rng;
    let mut rng = mkvlab_core::rng::aux_rng(2024, 2);
    let mut worst_bf = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=6);
        let d = rng.gen_range(1..=3);
        let xs: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu = EmpiricalMeasure::new(xs, d).unwrap();
        let nu = EmpiricalMeasure::new(ys, d).unwrap();
        let exact = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
        worst_bf = worst_bf.max((exact - brute_force_w2(&mu, &nu)).abs());
    }
    let mut worst_sort = 0.0f64;
    for n in [8usize, 64, 256, 512] {
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mu = EmpiricalMeasure::from_1d(xs).unwrap();
        let nu = EmpiricalMeasure::from_1d(ys).unwrap();
        let exact = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
        let sorted = wasserstein2_sorted_1d(&mu, &nu).unwrap();
        worst_sort = worst_sort.max((exact - sorted).abs());
    }
    let pass = worst_bf <= 1e-10 && worst_sort <= 1e-10;
    verdict(
        2,
        "wasserstein oracles",
        pass,
        &format!("brute-force gap = {worst_bf:.2e}, sorting gap = {worst_sort:.2e}"),
    );
}

// ── 3 · Lions derivative vs lifted finite differences ───────────────

#[test]
fn criterion_03_lions_finite_difference() {
    let u = CylindricalFn::new(
        vec![
            Box::new(Polynomial1d::new(vec![0.0, 1.0, 0.4, -0.05]))
                as Box<dyn mkvlab_core::calculus::ScalarField>,
            Box::new(SineField {
                weights: vec![0.8],
                bias: 0.2,
            }),
        ],
        Box::new(QuadraticOuter {
            quad: vec![2.0, 0.3, 0.3, -0.6],
            weights: vec![1.0, -0.5],
            constant: 0.1,
            k: 2,
        }),
        mkvlab_core::calculus::TimeFactor::One,
    )
    .unwrap();
    let mu = gaussian_init().sample(32, 3, 0).unwrap();
    let err = u.lifted_fd_error(&mu, 1e-4, 50, 33).unwrap();
    let pass = err < 1e-4;
    verdict(
        3,
        "Lions derivative FD",
        pass,
        &format!("worst relative error = {err:.2e} over 50 probes at h = 1e-4"),
    );
}

// ── 4 · Itô-expansion residual scaling ──────────────────────────────

#[test]
fn criterion_04_ito_residual_scaling() {
    let model = ModelSpec::bang_bang();
    let u = CylindricalFn::squared_pairing(Box::new(Polynomial1d::identity())).unwrap();
    let points = ito_weak_error_scaling(
        &model,
        &u,
        &gaussian_init(),
        2, // constant control a = 1
        3,
        128,
        &[4, 2, 1], // dt = 1/32, 1/64, 1/128
        32,
        512,
        404,
    )
    .unwrap();
    let r1 = points[0].weak_error / points[1].weak_error.max(1e-300);
    let r2 = points[1].weak_error / points[2].weak_error.max(1e-300);
    let pass = (1.5..=3.0).contains(&r1) && (1.5..=3.0).contains(&r2);
    verdict(
        4,
        "Ito residual scaling",
        pass,
        &format!(
            "halving ratios = {r1:.2}, {r2:.2} (errors {:.3e} → {:.3e} → {:.3e})",
            points[0].weak_error, points[1].weak_error, points[2].weak_error
        ),
    );
}

// ── 5 · conditional moment bounds ───────────────────────────────────

#[test]
fn criterion_05_moment_bounds() {
    let model = ModelSpec::pure_diffusion(0.25, 0.35);
    let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
    let policy = FeedbackPolicy::constant(
        Arc::new(ControlGrid::discretize(&model.control, 1).unwrap()),
        0,
        64,
    )
    .unwrap();
    let mut detail = String::new();
    let mut pass = true;
    for p in [2.0, 4.0] {
        let a = moment_bounds(&model, grid, &gaussian_init(), &policy, 32, 256, p, 55).unwrap();
        let b = moment_bounds(&model, grid, &gaussian_init(), &policy, 64, 256, p, 55).unwrap();
        let rel = (a.c_fit - b.c_fit).abs() / a.c_fit.max(b.c_fit);
        let slope_ok = (a.increment_slope - p / 2.0).abs() <= 0.2;
        pass &= a.c_fit.is_finite() && rel <= 0.2 && slope_ok;
        detail.push_str(&format!(
            "[p={p}: C = {:.3} (Δ{:.0}%), slope = {:.3}] ",
            b.c_fit,
            100.0 * rel,
            a.increment_slope
        ));
    }
    verdict(5, "moment bounds", pass, detail.trim());
}

// ── 6 · dynamic-programming residual ────────────────────────────────

/// Per-world two-stage costs of (π₁, π₂) on frozen worlds.
fn two_stage_costs(
    model: &ModelSpec,
    worlds: &[mkvlab_core::value::SearchWorld],
    p1: &FeedbackPolicy,
    p2: &FeedbackPolicy,
    k_theta: usize,
) -> Vec<f64> {
    worlds
        .iter()
        .map(|sw| {
            let grid = sw.noise.grid();
            let leg1 = simulate_mkv_segment(
                model,
                0,
                k_theta,
                sw.init.points().to_vec(),
                p1,
                &sw.noise,
            )
            .unwrap();
            let cost1 = mean_of_slice(&leg1.running_cost);
            let leg2 = simulate_mkv_segment(
                model,
                k_theta,
                grid.n_steps(),
                leg1.final_ensemble().states.clone(),
                p2,
                &sw.noise,
            )
            .unwrap();
            let final_states = &leg2.final_ensemble().states;
            let mu = EmpiricalMeasure::new(final_states.clone(), 1).unwrap();
            let summary = MeasureSummary::of(&mu);
            let view = summary.view(&mu);
            let g_avg = mean_of_slice(
                &(0..mu.n())
                    .map(|i| model.coeffs.terminal_cost(mu.atom(i), &view, &[]))
                    .collect::<Vec<_>>(),
            );
            cost1 + mean_of_slice(&leg2.running_cost) + g_avg
        })
        .collect()
}

#[test]
fn criterion_06_dpp_residual() {
    let model = ModelSpec::bang_bang();
    let grid = TimeGrid::new(0.0, 1.0, 32).unwrap(); // dt = 1/32
    let mc = McConfig {
        grid,
        n_worlds: 16,
        n_particles: 256,
        seed: 606,
    };
    let cgrid = bang_grid(&model, 3);
    let bins = FeatureBins {
        x_lo: -2.0,
        x_hi: 2.0,
        x_bins: 2,
        mean_lo: -1.0,
        mean_hi: 1.0,
        mean_bins: 1,
    };
    let k_theta = 16; // midpoint

    // Exhaustive certification on the same frozen worlds: enumerate all
    // stage policies (3 atoms ^ 2 cells = 9 per stage).
    let worlds = build_worlds(&model, &mc, &gaussian_init(), false, 0).unwrap();
    let mut stage_policies = Vec::new();
    for a0 in 0..3usize {
        for a1 in 0..3usize {
            stage_policies.push(
                FeedbackPolicy::table(cgrid.clone(), bins, 1, 32, vec![a0, a1]).unwrap(),
            );
        }
    }
    let mut lhs_bf = f64::INFINITY;
    let mut rhs_bf = f64::INFINITY;
    for p1 in &stage_policies {
        let mut per_world_best: Vec<f64> = vec![f64::INFINITY; mc.n_worlds];
        for p2 in &stage_policies {
            let costs = two_stage_costs(&model, &worlds, p1, p2, k_theta);
            lhs_bf = lhs_bf.min(mean_of_slice(&costs));
            for (b, c) in per_world_best.iter_mut().zip(&costs) {
                *b = b.min(*c);
            }
        }
        rhs_bf = rhs_bf.min(mean_of_slice(&per_world_best));
    }
    let certified_bound = lhs_bf - rhs_bf;

    // Harness residual over the matching table class.
    let dpp_cfg = DppConfig {
        theta: StoppingRule::Deterministic(0.5),
        class: PolicyClass::Table { bins, n_blocks: 2 },
        budget: SearchBudget {
            passes: 3,
            max_evals: 0,
        },
        inner_mean_bins: 4,
        inner_worlds: 12,
        inner_class: PolicyClass::Constant,
        inner_budget: SearchBudget::default(),
    };
    let rep = dpp_residual(&model, &mc, &gaussian_init(), cgrid.clone(), &dpp_cfg).unwrap();
    let within_bound = rep.residual <= certified_bound + 3.0 * rep.combined_stderr;

    // Refining the class (constants + 1 bin → table + 4 bins) must not
    // worsen the residual beyond noise.
    let coarse_cfg = DppConfig {
        class: PolicyClass::Constant,
        inner_mean_bins: 1,
        ..dpp_cfg.clone()
    };
    let coarse = dpp_residual(&model, &mc, &gaussian_init(), cgrid, &coarse_cfg).unwrap();
    let refinement_ok =
        rep.residual <= coarse.residual + 3.0 * (rep.combined_stderr + coarse.combined_stderr);

    let pass = within_bound && refinement_ok && rep.easy_half_violation == 0.0;
    verdict(
        6,
        "DPP residual",
        pass,
        &format!(
            "residual = {:.4e} ≤ certified {certified_bound:.4e} + 3σ = {:.4e}; \
             coarse residual = {:.4e}; easy-half violation = {:.1e}",
            rep.residual,
            certified_bound + 3.0 * rep.combined_stderr,
            coarse.residual,
            rep.easy_half_violation
        ),
    );
}

// ── 7 · law invariance at Monte Carlo scale ─────────────────────────

#[test]
fn criterion_07_law_invariance_mc() {
    let model = ModelSpec::bang_bang();
    let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
    let mc = McConfig {
        grid,
        n_worlds: 32,
        n_particles: 2048,
        seed: 707,
    };
    let cgrid = bang_grid(&model, 3);
    let lip = {
        let policy = FeedbackPolicy::constant(cgrid.clone(), 2, 32).unwrap();
        let fit_cfg = McConfig {
            n_worlds: 8,
            n_particles: 512,
            ..mc
        };
        fit_value_lipschitz(&model, &fit_cfg, &gaussian_init(), &policy, 1e-2, 2).unwrap()
    };
    let rep = law_invariance_gap(
        &model,
        &mc,
        cgrid,
        PolicyClass::Constant,
        &SearchBudget::default(),
        move |w| gaussian_init().sample(2048, 1111, w),
        move |w| gaussian_init().sample(2048, 2222, w),
        lip.ls.max(lip.max_ratio),
    )
    .unwrap();
    verdict(
        7,
        "law invariance (MC)",
        rep.pass,
        &format!(
            "gap = {:.4e} ≤ 3σ + bias = {:.4e} (σ = {:.2e}, bias = {:.2e})",
            rep.gap,
            3.0 * rep.combined_stderr + rep.bias_term,
            rep.combined_stderr,
            rep.bias_term
        ),
    );
}

// ── 8 · envelope closed form ────────────────────────────────────────

#[test]
fn criterion_08_bsde_envelope() {
    let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
    let (k, ck) = (1.0, 2.5);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut worst = 0.0f64;
    let mut sup_ok = true;
    for (e0, e1) in [(0.2, 0.1), (0.05, 0.0), (0.0, 0.3)] {
        let path = bsde_envelope(0.0, e0, e1, k, ck, &grid, &ResidualPaths::zero(&grid)).unwrap();
        let c = e0 + e1;
        for (idx, &t) in path.times.iter().enumerate() {
            let closed = k * 2.0 * (2.0_f64).sqrt() / sqrt_pi * c
                + 2.0 * k * (1.0 + ck) * c * 2.0 * std::f64::consts::SQRT_2 / sqrt_pi
                    * (2.0 / 3.0)
                    * (1.0 - t.powf(1.5));
            worst = worst.max((path.y[idx] - closed).abs());
        }
        let c_tilde = envelope_sup_coefficient(k, ck, 1.0);
        sup_ok &= path.sup_abs() <= c_tilde * (e0 + e1) + 1e-12;
    }
    let pass = worst <= 1e-8 && sup_ok;
    verdict(
        8,
        "BSDE envelope",
        pass,
        &format!("quadrature vs closed form = {worst:.2e}; sup bound holds: {sup_ok}"),
    );
}

// ── 9 · sandwich pipeline ───────────────────────────────────────────

#[test]
fn criterion_09_sandwich_schedule() {
    use mkvlab_core::verify::sandwich::{sandwich_check, SandwichConfig};
    let model = ModelSpec::bang_bang();
    let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
    let mf_cfg = McConfig {
        grid,
        n_worlds: 16,
        n_particles: 512,
        seed: 909,
    };
    let mu_ref = gaussian_init().sample(512, 909, 0).unwrap();
    let cgrid = bang_grid(&model, 3);
    let mut widths = Vec::new();
    let mut total_violations = 0usize;
    let mut detail = String::new();
    for eps in [0.2, 0.1, 0.05] {
        let cfg = SandwichConfig {
            eps,
            eps0: eps,
            eps1: eps,
            n_list: vec![8],
            m_list: vec![8],
            moll_nodes: 256,
            n_reg_samples: 4,
            h_n_draws: 16,
            fd_step: 0.1,
            class: PolicyClass::Constant,
            budget: SearchBudget::default(),
            np_worlds: 8,
        };
        let rep = sandwich_check(&model, &mf_cfg, &mu_ref, &cfg, cgrid.clone()).unwrap();
        total_violations += rep.violations.len();
        widths.push(rep.max_width());
        detail.push_str(&format!("[ε={eps}: width={:.4}] ", rep.max_width()));
    }
    let decreasing = widths.windows(2).all(|w| w[1] < w[0]);
    let pass = total_violations == 0 && decreasing;
    verdict(
        9,
        "sandwich schedule",
        pass,
        &format!("{detail}violations = {total_violations}, widths decreasing = {decreasing}"),
    );
}

// ── 10 · n-player Cauchy trend ──────────────────────────────────────

#[test]
fn criterion_10_nplayer_cauchy_trend() {
    let model = ModelSpec::bang_bang();
    let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
    let cgrid = bang_grid(&model, 3);
    let mut values = Vec::new();
    for n in [2usize, 4, 8, 16] {
        let mc = McConfig {
            grid,
            n_worlds: 96,
            n_particles: n,
            seed: 1010,
        };
        let (est, _) = estimate_nplayer_value(
            &model,
            n,
            None,
            0.0,
            0.0,
            &mc,
            &gaussian_init(),
            cgrid.clone(),
            PolicyClass::Constant,
            &SearchBudget::default(),
            0,
        )
        .unwrap();
        values.push(est);
    }
    let d1 = (values[0].mean - values[1].mean).abs();
    let d2 = (values[1].mean - values[2].mean).abs();
    let d3 = (values[2].mean - values[3].mean).abs();
    let s1 = values[0].combined_stderr(&values[1]);
    let s2 = values[1].combined_stderr(&values[2]);
    let s3 = values[2].combined_stderr(&values[3]);
    let pass = d2 <= d1 + 3.0 * (s1 + s2) && d3 <= d2 + 3.0 * (s2 + s3);
    verdict(
        10,
        "n-player Cauchy trend",
        pass,
        &format!(
            "|v2−v4| = {d1:.4e}, |v4−v8| = {d2:.4e}, |v8−v16| = {d3:.4e} \
             (σ = {s1:.1e}/{s2:.1e}/{s3:.1e})"
        ),
    );
}

// ── 11 · compact-set diagnostics ────────────────────────────────────

#[test]
fn criterion_11_compact_set() {
    let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
    let rho0 = InitialLaw::Gaussian {
        mean: vec![0.0],
        std: 0.5,
    };
    let (elements, diag) = sample_pl(
        1.0,
        grid,
        &rho0,
        0.3,
        32,
        8,
        64,
        2.0,
        &[1.0, 2.0, 4.0, 8.0],
        1111,
    )
    .unwrap();
    let rep = compactness_probe(&elements, &[0.2, 0.1, 0.05]).unwrap();
    let tails_decreasing = diag.tails.windows(2).all(|w| w[1].1 <= w[0].1);
    // Regression baselines pinned from the first run at this exact
    // configuration and seed (L = 1 separates most sampled elements at
    // these radii; the ladder saturating at the sample count is the
    // recorded behaviour, not a failure).
    let expected_nets: [(f64, usize); 3] = [(0.2, 20), (0.1, 32), (0.05, 32)];
    let nets_match = rep
        .net_sizes
        .iter()
        .zip(expected_nets.iter())
        .all(|(a, b)| a.0 == b.0 && a.1 == b.1);
    let pass = tails_decreasing && rep.max_triangle_violation <= 1e-9 && nets_match;
    verdict(
        11,
        "compact set",
        pass,
        &format!(
            "tails decreasing = {tails_decreasing}, triangle = {:.1e}, nets = {:?} \
             (baseline {:?}), C_fit = {:.3}",
            rep.max_triangle_violation, rep.net_sizes, expected_nets, diag.c_fit
        ),
    );
}
