//! Euler–Maruyama simulation of the controlled interacting-particle
//! system, the measure-valued conditional-law path, and the regularised
//! n-player system.
//!
//! One *world* is one common path W⁰ together with a population of
//! particles; the conditional law given the common noise is represented
//! by the within-world cloud
//!
//! ```text
//! X^i_{k+1} = X^i_k + b(t_k, X^i_k, μ̂_k, a^i_k) Δt + σ(t_k) ΔW^i_k + σ⁰(t_k) ΔW⁰_k,
//! μ̂_k      = (1/n) Σ_i δ_{X^i_k},    a^i_k = policy(k, X^i_k, μ̂_k).
//! ```
//!
//! The n-player variant adds the regularisation increments
//! `ε⁰ ΔB̄⁰ + ε¹ ΔB̄^i` and optionally replaces drift and costs by their
//! mollified versions. Running costs are accumulated per particle during
//! the walk so that the value layer never has to replay a trajectory.

use crate::control::FeedbackPolicy;
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeasureSummary};
use crate::mollify::MollifiedCoefficients;
use crate::model::ModelSpec;
use crate::noise::{NoiseBundle, TimeGrid};
use crate::rng::{stream_rng, StreamId, StreamKind};

use rand::Rng;
use rand_distr::StandardNormal;

/// Hard sanity box; bounded zoo coefficients cannot leave it, so crossing
/// it signals a bug in a user-supplied model.
pub const BLOWUP_GUARD: f64 = 1e6;

/// Particle states at one grid point of one world.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    /// `n × d`, row-major.
    pub states: Vec<f64>,
    pub d: usize,
    pub time_index: usize,
    pub world_id: u32,
}

impl ParticleEnsemble {
    pub fn n(&self) -> usize {
        self.states.len() / self.d
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.d..(i + 1) * self.d]
    }

    pub fn measure(&self) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::new(self.states.clone(), self.d)
    }
}

/// The measure-valued path: one empirical measure per grid point.
#[derive(Debug, Clone)]
pub struct ConditionalLawPath {
    pub measures: Vec<EmpiricalMeasure>,
    pub world_id: u32,
    pub start_index: usize,
}

impl ConditionalLawPath {
    /// CSV dump: one row per (step, atom).
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        for (k, mu) in self.measures.iter().enumerate() {
            for i in 0..mu.n() {
                let coords: Vec<String> =
                    mu.atom(i).iter().map(|v| format!("{v:.17e}")).collect();
                writeln!(out, "{},{},{}", self.start_index + k, i, coords.join(","))?;
            }
        }
        Ok(())
    }
}

/// Output of one world simulation.
#[derive(Debug, Clone)]
pub struct MkvRun {
    /// Ensembles at grid points `start_index ..= n_steps`.
    pub steps: Vec<ParticleEnsemble>,
    pub start_index: usize,
    /// Accumulated running cost Σ f·Δt per particle.
    pub running_cost: Vec<f64>,
    pub world_id: u32,
}

impl MkvRun {
    pub fn final_ensemble(&self) -> &ParticleEnsemble {
        self.steps.last().expect("at least the initial ensemble")
    }

    pub fn ensemble_at(&self, grid_index: usize) -> Result<&ParticleEnsemble> {
        grid_index
            .checked_sub(self.start_index)
            .and_then(|o| self.steps.get(o))
            .ok_or_else(|| Error::precondition(format!("grid index {grid_index} not simulated")))
    }

    pub fn law_path(&self) -> Result<ConditionalLawPath> {
        Ok(ConditionalLawPath {
            measures: self
                .steps
                .iter()
                .map(|e| e.measure())
                .collect::<Result<_>>()?,
            world_id: self.world_id,
            start_index: self.start_index,
        })
    }
}

fn check_finite(states: &[f64], step: usize) -> Result<()> {
    for v in states {
        if !v.is_finite() || v.abs() > BLOWUP_GUARD {
            return Err(Error::BlowUp {
                step,
                detail: format!("state magnitude {v}"),
            });
        }
    }
    Ok(())
}

/// d×m matrix × m-vector increment, accumulated into `out`.
fn add_matvec(mat: &[f64], d: usize, m: usize, inc: impl Fn(usize) -> f64, out: &mut [f64]) {
    for r in 0..d {
        let mut acc = 0.0;
        for c in 0..m {
            acc += mat[r * m + c] * inc(c);
        }
        out[r] += acc;
    }
}

/// Simulate the particle system on the full grid of `noise`.
///
/// `t0` must equal the grid origin; `init` supplies one atom per
/// idiosyncratic path.
pub fn simulate_mkv(
    model: &ModelSpec,
    t0: f64,
    init: &EmpiricalMeasure,
    policy: &FeedbackPolicy,
    noise: &NoiseBundle,
) -> Result<MkvRun> {
    let grid = noise.grid();
    if grid.index_of(t0) != Some(0) {
        return Err(Error::precondition(format!(
            "noise grid starts at {}, not t0 = {t0}",
            grid.t0()
        )));
    }
    simulate_mkv_from(model, 0, init.points().to_vec(), policy, noise)
}

/// Simulate from an arbitrary grid index given raw initial states
/// (restart form used by the flow-property check and the policy-search
/// caches).
pub fn simulate_mkv_from(
    model: &ModelSpec,
    start_index: usize,
    init_states: Vec<f64>,
    policy: &FeedbackPolicy,
    noise: &NoiseBundle,
) -> Result<MkvRun> {
    simulate_mkv_segment(model, start_index, noise.grid().n_steps(), init_states, policy, noise)
}

/// Simulate the grid segment `start_index ..= stop_index` only (the
/// pre-stopping-time leg of the dynamic-programming check).
pub fn simulate_mkv_segment(
    model: &ModelSpec,
    start_index: usize,
    stop_index: usize,
    init_states: Vec<f64>,
    policy: &FeedbackPolicy,
    noise: &NoiseBundle,
) -> Result<MkvRun> {
    let grid = *noise.grid();
    let d = model.d;
    let n = noise.n_particles();
    if init_states.len() != n * d {
        return Err(Error::dimension(format!(
            "initial states: expected {} values ({} particles × {}), got {}",
            n * d,
            n,
            d,
            init_states.len()
        )));
    }
    if start_index > stop_index || stop_index > grid.n_steps() {
        return Err(Error::precondition("segment indices out of range"));
    }
    let dt = grid.dt();
    let mut states = init_states;
    check_finite(&states, start_index)?;
    let mut steps = Vec::with_capacity(stop_index - start_index + 1);
    let mut running_cost = vec![0.0; n];
    let mut drift = vec![0.0; d];
    for k in start_index..stop_index {
        let t = grid.point(k);
        let mu = EmpiricalMeasure::new(states.clone(), d)?;
        let summary = MeasureSummary::of(&mu);
        let view = summary.view(&mu);
        steps.push(ParticleEnsemble {
            states: states.clone(),
            d,
            time_index: k,
            world_id: noise.world,
        });
        let w0feat = model.w0_features(t, &noise.common)?;
        let sigma = model.sigma_matrix(t);
        let sigma0 = model.sigma0_matrix(t);
        let mut next = states.clone();
        for i in 0..n {
            let x = &states[i * d..(i + 1) * d];
            let a = policy.act(k, x, &view);
            running_cost[i] += model.coeffs.running_cost(t, x, &view, a, &w0feat) * dt;
            drift.fill(0.0);
            model.coeffs.drift(t, x, &view, a, &w0feat, &mut drift);
            let out = &mut next[i * d..(i + 1) * d];
            for (o, b) in out.iter_mut().zip(&drift) {
                *o += b * dt;
            }
            let wi = &noise.idiosyncratic[i];
            add_matvec(&sigma, d, model.m, |c| wi.increment(k, c), out);
            add_matvec(&sigma0, d, model.m, |c| noise.common.increment(k, c), out);
        }
        states = next;
        check_finite(&states, k + 1)?;
    }
    steps.push(ParticleEnsemble {
        states,
        d,
        time_index: stop_index,
        world_id: noise.world,
    });
    Ok(MkvRun {
        steps,
        start_index,
        running_cost,
        world_id: noise.world,
    })
}

/// Trajectory of the regularised n-player system.
#[derive(Debug, Clone)]
pub struct NPlayerTrajectory {
    pub steps: Vec<ParticleEnsemble>,
    /// Accumulated (possibly mollified) running cost per player.
    pub running_cost: Vec<f64>,
    pub eps0: f64,
    pub eps1: f64,
    pub world_id: u32,
}

impl NPlayerTrajectory {
    pub fn final_states(&self) -> &ParticleEnsemble {
        self.steps.last().expect("nonempty trajectory")
    }
}

/// Simulate the n-player system. With `mollified` set, drift and running
/// cost use the smoothed coefficients on the joint state; otherwise the
/// raw coefficients read the within-trajectory empirical measure. The
/// regularisation scales add `ε⁰ΔB̄⁰ + ε¹ΔB̄^i`; the bundle must carry
/// regularisation paths when either scale is positive.
pub fn simulate_nplayer(
    model: &ModelSpec,
    n_players: usize,
    mollified: Option<&MollifiedCoefficients>,
    eps0: f64,
    eps1: f64,
    init: &EmpiricalMeasure,
    policy: &FeedbackPolicy,
    noise: &NoiseBundle,
) -> Result<NPlayerTrajectory> {
    if !(eps0 >= 0.0 && eps1 >= 0.0) {
        return Err(Error::precondition("regularisation scales must be ≥ 0"));
    }
    if init.n() != n_players || noise.n_particles() != n_players {
        return Err(Error::precondition(format!(
            "need one atom and one idiosyncratic path per player (n = {n_players})"
        )));
    }
    if let Some(mc) = mollified {
        if mc.n_players != n_players {
            return Err(Error::precondition("mollified coefficients built for another n"));
        }
    }
    let needs_reg = eps0 > 0.0 || eps1 > 0.0;
    if needs_reg && (noise.reg_common.is_none() || noise.reg_idiosyncratic.is_none()) {
        return Err(Error::precondition(
            "regularised run needs a bundle with regularisation paths",
        ));
    }
    let grid = *noise.grid();
    let d = model.d;
    let dt = grid.dt();
    let mut states = init.points().to_vec();
    check_finite(&states, 0)?;
    let mut steps = Vec::with_capacity(grid.n_steps() + 1);
    let mut running_cost = vec![0.0; n_players];
    let mut drift = vec![0.0; d];
    for k in 0..grid.n_steps() {
        let t = grid.point(k);
        let mu = EmpiricalMeasure::new(states.clone(), d)?;
        let summary = MeasureSummary::of(&mu);
        let view = summary.view(&mu);
        steps.push(ParticleEnsemble {
            states: states.clone(),
            d,
            time_index: k,
            world_id: noise.world,
        });
        let w0feat = model.w0_features(t, &noise.common)?;
        let sigma = model.sigma_matrix(t);
        let sigma0 = model.sigma0_matrix(t);
        let mut next = states.clone();
        for i in 0..n_players {
            let x = &states[i * d..(i + 1) * d];
            let a = policy.act(k, x, &view).to_vec();
            drift.fill(0.0);
            match mollified {
                Some(mc) => {
                    running_cost[i] += mc.running(i, t, &states, &a, &w0feat)? * dt;
                    mc.drift(i, t, &states, &a, &w0feat, &mut drift)?;
                }
                None => {
                    running_cost[i] +=
                        model.coeffs.running_cost(t, x, &view, &a, &w0feat) * dt;
                    model.coeffs.drift(t, x, &view, &a, &w0feat, &mut drift);
                }
            }
            let out = &mut next[i * d..(i + 1) * d];
            for (o, b) in out.iter_mut().zip(&drift) {
                *o += b * dt;
            }
            let wi = &noise.idiosyncratic[i];
            add_matvec(&sigma, d, model.m, |c| wi.increment(k, c), out);
            add_matvec(&sigma0, d, model.m, |c| noise.common.increment(k, c), out);
            if needs_reg {
                let rb0 = noise.reg_common.as_ref().unwrap();
                let rbi = &noise.reg_idiosyncratic.as_ref().unwrap()[i];
                for (c, o) in out.iter_mut().enumerate() {
                    // d = m for regularised runs (additive m-dim kicks on
                    // the d-dim state).
                    *o += eps0 * rb0.increment(k, c) + eps1 * rbi.increment(k, c);
                }
            }
        }
        states = next;
        check_finite(&states, k + 1)?;
    }
    steps.push(ParticleEnsemble {
        states,
        d,
        time_index: grid.n_steps(),
        world_id: noise.world,
    });
    Ok(NPlayerTrajectory {
        steps,
        running_cost,
        eps0,
        eps1,
        world_id: noise.world,
    })
}

/// Flow-property gap: simulate the whole horizon, restart at `t1` from
/// the reached states on the same noise, and return the largest absolute
/// state difference over the common steps. Zero for the Euler scheme by
/// construction; any positive value indicates broken restart plumbing.
pub fn check_flow_property(
    model: &ModelSpec,
    t0: f64,
    t1: f64,
    init: &EmpiricalMeasure,
    policy: &FeedbackPolicy,
    noise: &NoiseBundle,
) -> Result<f64> {
    let grid = noise.grid();
    let k1 = grid
        .index_of(t1)
        .ok_or_else(|| Error::precondition(format!("restart time {t1} off grid")))?;
    let full = simulate_mkv(model, t0, init, policy, noise)?;
    let restart = simulate_mkv_from(
        model,
        k1,
        full.ensemble_at(k1)?.states.clone(),
        policy,
        noise,
    )?;
    let mut gap = 0.0f64;
    for k in k1..=grid.n_steps() {
        let a = &full.ensemble_at(k)?.states;
        let b = &restart.ensemble_at(k)?.states;
        for (x, y) in a.iter().zip(b) {
            gap = gap.max((x - y).abs());
        }
    }
    Ok(gap)
}

/// Initial-condition distributions for Monte Carlo runs.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    /// Use the atoms directly when counts match, otherwise resample iid.
    Cloud(EmpiricalMeasure),
    /// Isotropic Gaussian.
    Gaussian { mean: Vec<f64>, std: f64 },
    /// Coordinate-wise uniform box.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Equal-weight two-point law in d = 1 (deterministic alternation).
    TwoPoint { a: f64, b: f64 },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Cloud(c) => c.dim(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::Uniform { lo, .. } => lo.len(),
            InitialLaw::TwoPoint { .. } => 1,
        }
    }

    /// Draw an n-atom cloud on the `(seed, world)` Init stream.
    pub fn sample(&self, n: usize, seed: u64, world: u32) -> Result<EmpiricalMeasure> {
        let mut rng = stream_rng(seed, StreamId::new(world, StreamKind::Init, 0));
        match self {
            InitialLaw::Cloud(c) => {
                if c.n() == n {
                    Ok(c.clone())
                } else {
                    let mut pts = Vec::with_capacity(n * c.dim());
                    for _ in 0..n {
                        let i = rng.gen_range(0..c.n());
                        pts.extend_from_slice(c.atom(i));
                    }
                    EmpiricalMeasure::new(pts, c.dim())
                }
            }
            InitialLaw::Gaussian { mean, std } => {
                let d = mean.len();
                let mut pts = Vec::with_capacity(n * d);
                for _ in 0..n {
                    for mj in mean {
                        let z: f64 = rng.sample(StandardNormal);
                        pts.push(mj + std * z);
                    }
                }
                EmpiricalMeasure::new(pts, d)
            }
            InitialLaw::Uniform { lo, hi } => {
                let d = lo.len();
                let mut pts = Vec::with_capacity(n * d);
                for _ in 0..n {
                    for j in 0..d {
                        pts.push(rng.gen_range(lo[j]..hi[j]));
                    }
                }
                EmpiricalMeasure::new(pts, d)
            }
            InitialLaw::TwoPoint { a, b } => {
                let pts: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { *a } else { *b }).collect();
                EmpiricalMeasure::new(pts, 1)
            }
        }
    }
}

/// Report of the conditional moment and increment bounds.
#[derive(Debug, Clone)]
pub struct MomentReport {
    /// Smallest C with max_s E_w|X_s|^p ≤ C (1 + E_w|ξ|^p) across worlds.
    pub c_sup: f64,
    /// Smallest C with E_w|X_s − X_t|^p ≤ C (1 + E_w|ξ|^p)(s−t)^{p/2}.
    pub c_increment: f64,
    /// Overall fitted constant (max of the two).
    pub c_fit: f64,
    /// Log-log regression slope of E|X_s − X_{t0}|^p against (s − t0).
    pub increment_slope: f64,
    pub p: f64,
    pub n_worlds: usize,
}

/// Estimate the conditional moment bounds over independent worlds.
pub fn moment_bounds(
    model: &ModelSpec,
    grid: TimeGrid,
    init: &InitialLaw,
    policy: &FeedbackPolicy,
    n_worlds: usize,
    n_particles: usize,
    p: f64,
    seed: u64,
) -> Result<MomentReport> {
    if p != 2.0 && p != 4.0 {
        return Err(Error::precondition("moment order p must be 2 or 4"));
    }
    if n_worlds == 0 {
        return Err(Error::precondition("need at least one world"));
    }
    let mut c_sup = 0.0f64;
    let mut c_inc = 0.0f64;
    let n_lags = 5usize.min(grid.n_steps());
    let lags: Vec<usize> = (0..n_lags)
        .map(|j| (grid.n_steps() >> (n_lags - 1 - j)).max(1))
        .collect();
    let mut lag_moments = vec![0.0f64; lags.len()];
    for w in 0..n_worlds {
        let noise = NoiseBundle::sample(grid, model.m, n_particles, seed, w as u32, false)?;
        let cloud = init.sample(n_particles, seed, w as u32)?;
        let run = simulate_mkv(model, grid.t0(), &cloud, policy, &noise)?;
        let mp = |e: &ParticleEnsemble| -> f64 {
            let mut acc = 0.0;
            for i in 0..e.n() {
                let norm2: f64 = e.state(i).iter().map(|v| v * v).sum();
                acc += norm2.powf(p / 2.0);
            }
            acc / e.n() as f64
        };
        let init_moment = mp(&run.steps[0]);
        let denom = 1.0 + init_moment;
        let sup_moment = run.steps.iter().map(mp).fold(0.0f64, f64::max);
        c_sup = c_sup.max(sup_moment / denom);
        for (li, &lag) in lags.iter().enumerate() {
            let e0 = &run.steps[0];
            let e1 = &run.steps[lag];
            let mut acc = 0.0;
            for i in 0..e0.n() {
                let d2: f64 = e0
                    .state(i)
                    .iter()
                    .zip(e1.state(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                acc += d2.powf(p / 2.0);
            }
            let inc_moment = acc / e0.n() as f64;
            lag_moments[li] += inc_moment / n_worlds as f64;
            let dt_pow = (grid.dt() * lag as f64).powf(p / 2.0);
            c_inc = c_inc.max(inc_moment / (denom * dt_pow));
        }
    }
    // Least-squares slope in log-log coordinates.
    let xs: Vec<f64> = lags.iter().map(|&l| (grid.dt() * l as f64).ln()).collect();
    let ys: Vec<f64> = lag_moments.iter().map(|m| m.max(1e-300).ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    Ok(MomentReport {
        c_sup,
        c_increment: c_inc,
        c_fit: c_sup.max(c_inc),
        increment_slope: slope,
        p,
        n_worlds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlGrid;
    use crate::model::ControlSet;
    use std::sync::Arc;

    fn singleton_policy(n_steps: usize) -> FeedbackPolicy {
        let g = Arc::new(ControlGrid::discretize(&ControlSet::singleton(vec![0.0]), 1).unwrap());
        FeedbackPolicy::constant(g, 0, n_steps).unwrap()
    }

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn frozen_dynamics_keep_initial_states() {
        let model = ModelSpec::trivial(3.0);
        let g = grid(16);
        let noise = NoiseBundle::sample(g, 1, 8, 4, 0, false).unwrap();
        let init = InitialLaw::Gaussian {
            mean: vec![0.3],
            std: 0.5,
        }
        .sample(8, 4, 0)
        .unwrap();
        let run = simulate_mkv(&model, 0.0, &init, &singleton_policy(16), &noise).unwrap();
        for e in &run.steps {
            assert_eq!(e.states, init.points());
        }
    }

    #[test]
    fn unit_drift_translates_exactly() {
        // b = 1, σ = σ⁰ = 0: X_T = ξ + (T − t0) exactly under Euler.
        let model = ModelSpec {
            name: "unit_drift".into(),
            d: 1,
            m: 1,
            control: ControlSet::singleton(vec![0.0]),
            lip_const: 1.0,
            anchors: vec![],
            w0_dependence: crate::model::CommonPathDependence::None,
            constant_diffusions: true,
            coeffs: Arc::new(crate::model::Scalar1dCoeffs {
                drift_fn: |_, _, _, _| 1.0,
                running_fn: |_, _, _, _| 0.0,
                terminal_fn: |_, _| 0.0,
                sigma: 0.0,
                sigma0: 0.0,
            }),
        };
        let g = grid(64);
        let noise = NoiseBundle::sample(g, 1, 4, 9, 0, false).unwrap();
        let init = EmpiricalMeasure::from_1d(vec![0.0, 0.5, -1.0, 2.0]).unwrap();
        let run = simulate_mkv(&model, 0.0, &init, &singleton_policy(64), &noise).unwrap();
        for i in 0..4 {
            let x_t = run.final_ensemble().state(i)[0];
            assert!((x_t - (init.atom(i)[0] + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn common_noise_translates_cloud_exactly() {
        // b = σ = 0, σ⁰ = 1: the cloud is rigidly translated by W⁰.
        let model = ModelSpec {
            name: "common_only".into(),
            d: 1,
            m: 1,
            control: ControlSet::singleton(vec![0.0]),
            lip_const: 1.0,
            anchors: vec![],
            w0_dependence: crate::model::CommonPathDependence::None,
            constant_diffusions: true,
            coeffs: Arc::new(crate::model::Scalar1dCoeffs {
                drift_fn: |_, _, _, _| 0.0,
                running_fn: |_, _, _, _| 0.0,
                terminal_fn: |_, _| 0.0,
                sigma: 0.0,
                sigma0: 1.0,
            }),
        };
        let g = grid(32);
        let noise = NoiseBundle::sample(g, 1, 16, 11, 0, false).unwrap();
        let init = InitialLaw::Uniform {
            lo: vec![-1.0],
            hi: vec![1.0],
        }
        .sample(16, 11, 0)
        .unwrap();
        let run = simulate_mkv(&model, 0.0, &init, &singleton_policy(32), &noise).unwrap();
        for k in 0..=32 {
            let shift = noise.common.value(k)[0];
            let e = run.ensemble_at(k).unwrap();
            for i in 0..16 {
                let expect = init.atom(i)[0] + shift;
                assert!(
                    (e.state(i)[0] - expect).abs() < 1e-12,
                    "step {k} particle {i}"
                );
            }
        }
    }

    #[test]
    fn flow_property_gap_is_zero() {
        let model = ModelSpec::bang_bang();
        let g = grid(32);
        let noise = NoiseBundle::sample(g, 1, 32, 5, 0, false).unwrap();
        let init = InitialLaw::Gaussian {
            mean: vec![0.0],
            std: 1.0,
        }
        .sample(32, 5, 0)
        .unwrap();
        let gcg = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
        // A measure-dependent table policy: restart must still be exact.
        let bins = crate::control::FeatureBins::default_1d();
        let choice = vec![1; 4 * bins.n_cells()];
        let policy = FeedbackPolicy::table(gcg, bins, 4, 32, choice).unwrap();
        let gap = check_flow_property(&model, 0.0, 0.5, &init, &policy, &noise).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn tampered_noise_breaks_flow_property() {
        // Negative control: a different idiosyncratic path after restart
        // must produce a positive gap.
        let model = ModelSpec::bang_bang();
        let g = grid(16);
        let noise = NoiseBundle::sample(g, 1, 8, 5, 0, false).unwrap();
        let mut tampered = noise.clone();
        tampered.idiosyncratic[3] =
            crate::noise::BrownianPath::sample_stream(
                g,
                1,
                5,
                crate::rng::StreamId::new(99, StreamKind::Idiosyncratic, 3),
            )
            .unwrap();
        let init = InitialLaw::Gaussian {
            mean: vec![0.0],
            std: 1.0,
        }
        .sample(8, 5, 0)
        .unwrap();
        let policy = singleton_policy(16);
        let full = simulate_mkv(&model, 0.0, &init, &policy, &noise).unwrap();
        let restart = simulate_mkv_from(
            &model,
            8,
            full.ensemble_at(8).unwrap().states.clone(),
            &policy,
            &tampered,
        )
        .unwrap();
        let mut gap = 0.0f64;
        for (a, b) in full
            .final_ensemble()
            .states
            .iter()
            .zip(&restart.final_ensemble().states)
        {
            gap = gap.max((a - b).abs());
        }
        assert!(gap > 0.0);
    }

    #[test]
    fn exchangeability_of_particle_indices() {
        // Permuting (atom, noise-stream) pairs together leaves the law
        // path invariant as a multiset of atoms.
        let model = ModelSpec::bang_bang();
        let g = grid(16);
        let noise = NoiseBundle::sample(g, 1, 4, 13, 0, false).unwrap();
        let mut permuted = noise.clone();
        permuted.idiosyncratic.swap(0, 3);
        permuted.idiosyncratic.swap(1, 2);
        let init = EmpiricalMeasure::from_1d(vec![0.1, -0.4, 0.9, 0.2]).unwrap();
        let perm_init = EmpiricalMeasure::from_1d(vec![0.2, 0.9, -0.4, 0.1]).unwrap();
        let policy = singleton_policy(16);
        let a = simulate_mkv(&model, 0.0, &init, &policy, &noise).unwrap();
        let b = simulate_mkv(&model, 0.0, &perm_init, &policy, &permuted).unwrap();
        for k in 0..=16 {
            let ma = a.ensemble_at(k).unwrap().measure().unwrap().canonicalized();
            let mb = b.ensemble_at(k).unwrap().measure().unwrap().canonicalized();
            assert_eq!(ma.points(), mb.points(), "step {k}");
        }
    }

    #[test]
    fn nplayer_matches_mkv_when_unregularised() {
        // ε = 0, mollification off, identical noise: the two systems are
        // the same scheme, so paths coincide bitwise.
        let model = ModelSpec::bang_bang();
        let g = grid(16);
        let noise = NoiseBundle::sample(g, 1, 6, 21, 0, true).unwrap();
        let init = InitialLaw::Gaussian {
            mean: vec![0.2],
            std: 0.7,
        }
        .sample(6, 21, 0)
        .unwrap();
        let policy = {
            let gcg = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
            FeedbackPolicy::constant(gcg, 2, 16).unwrap()
        };
        let mkv = simulate_mkv(&model, 0.0, &init, &policy, &noise).unwrap();
        let np = simulate_nplayer(&model, 6, None, 0.0, 0.0, &init, &policy, &noise).unwrap();
        for k in 0..=16 {
            assert_eq!(
                mkv.ensemble_at(k).unwrap().states,
                np.steps[k].states,
                "step {k}"
            );
        }
        for i in 0..6 {
            assert!((mkv.running_cost[i] - np.running_cost[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn nplayer_additive_case_is_exact() {
        // b ≡ 0 (singleton control at 0 in the bang-bang family):
        // X̄^i = ξ̄^i + σ W̄^i + σ⁰ W⁰ + ε⁰ B̄⁰ + ε¹ B̄^i exactly.
        let model = ModelSpec::bang_bang();
        let g = grid(8);
        let n = 3;
        let noise = NoiseBundle::sample(g, 1, n, 31, 0, true).unwrap();
        let init = EmpiricalMeasure::from_1d(vec![0.0, 1.0, -1.0]).unwrap();
        let policy = {
            let gcg = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
            FeedbackPolicy::constant(gcg, 1, 8).unwrap() // atom 1 = 0.0
        };
        let (e0, e1) = (0.4, 0.2);
        let run = simulate_nplayer(&model, n, None, e0, e1, &init, &policy, &noise).unwrap();
        for k in 0..=8 {
            for i in 0..n {
                let expect = init.atom(i)[0]
                    + 0.2 * noise.idiosyncratic[i].value(k)[0]
                    + 0.3 * noise.common.value(k)[0]
                    + e0 * noise.reg_common.as_ref().unwrap().value(k)[0]
                    + e1 * noise.reg_idiosyncratic.as_ref().unwrap()[i].value(k)[0];
                assert!(
                    (run.steps[k].states[i] - expect).abs() < 1e-12,
                    "step {k} player {i}"
                );
            }
        }
    }

    #[test]
    fn nplayer_terminal_second_moment_matches_ito_isometry() {
        // Additive case: E|X_T|² = E|ξ|² + (σ² + σ⁰² + ε⁰² + ε¹²) T,
        // within three Monte Carlo standard errors over worlds.
        let model = ModelSpec::bang_bang();
        let g = grid(16);
        let n = 64;
        let (e0, e1) = (0.3, 0.25);
        let policy = {
            let gcg = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
            FeedbackPolicy::constant(gcg, 1, 16).unwrap()
        };
        let n_worlds = 64;
        let mut vals = Vec::with_capacity(n_worlds);
        for w in 0..n_worlds {
            let noise = NoiseBundle::sample(g, 1, n, 77, w as u32, true).unwrap();
            let init = InitialLaw::Gaussian {
                mean: vec![0.0],
                std: 0.5,
            }
            .sample(n, 77, w as u32)
            .unwrap();
            let run = simulate_nplayer(&model, n, None, e0, e1, &init, &policy, &noise).unwrap();
            let m2 = run
                .final_states()
                .measure()
                .unwrap()
                .second_moment();
            let m2_0 = init.second_moment();
            vals.push(m2 - m2_0);
        }
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
        let se = (var / vals.len() as f64).sqrt();
        let expect = (0.2f64.powi(2) + 0.3f64.powi(2) + e0 * e0 + e1 * e1) * 1.0;
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "gain {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn regularised_run_requires_reg_paths() {
        let model = ModelSpec::bang_bang();
        let g = grid(8);
        let noise = NoiseBundle::sample(g, 1, 2, 3, 0, false).unwrap();
        let init = EmpiricalMeasure::from_1d(vec![0.0, 0.1]).unwrap();
        let policy = singleton_policy(8);
        let r = simulate_nplayer(&model, 2, None, 0.1, 0.0, &init, &policy, &noise);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn blow_up_guard_reports_step() {
        let model = ModelSpec {
            name: "explosive".into(),
            d: 1,
            m: 1,
            control: ControlSet::singleton(vec![0.0]),
            lip_const: 1.0,
            anchors: vec![],
            w0_dependence: crate::model::CommonPathDependence::None,
            constant_diffusions: true,
            coeffs: Arc::new(crate::model::Scalar1dCoeffs {
                drift_fn: |_, x, _, _| 1e7 * (x + 1.0),
                running_fn: |_, _, _, _| 0.0,
                terminal_fn: |_, _| 0.0,
                sigma: 0.0,
                sigma0: 0.0,
            }),
        };
        let g = grid(4);
        let noise = NoiseBundle::sample(g, 1, 2, 3, 0, false).unwrap();
        let init = EmpiricalMeasure::from_1d(vec![1.0, 1.0]).unwrap();
        let r = simulate_mkv(&model, 0.0, &init, &singleton_policy(4), &noise);
        assert!(matches!(r, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn euler_is_exact_for_additive_bang_bang() {
        // The bang-bang coefficients are state-free, so the scheme is
        // exact in dt: coarse and fine runs on shared noise agree at the
        // common grid points to rounding.
        let model = ModelSpec::bang_bang();
        let fine_steps = 64;
        let g_fine = grid(fine_steps);
        let gcg = Arc::new(ControlGrid::discretize(&model.control, 3).unwrap());
        let fine = NoiseBundle::sample(g_fine, 1, 32, 2024, 0, false).unwrap();
        let coarse = fine.coarsen(4).unwrap();
        let init = InitialLaw::Gaussian {
            mean: vec![0.0],
            std: 1.0,
        }
        .sample(32, 2024, 0)
        .unwrap();
        let run_f = simulate_mkv(
            &model,
            0.0,
            &init,
            &FeedbackPolicy::constant(gcg.clone(), 2, fine_steps).unwrap(),
            &fine,
        )
        .unwrap();
        let run_c = simulate_mkv(
            &model,
            0.0,
            &init,
            &FeedbackPolicy::constant(gcg, 2, fine_steps / 4).unwrap(),
            &coarse,
        )
        .unwrap();
        for (a, b) in run_f
            .final_ensemble()
            .states
            .iter()
            .zip(&run_c.final_ensemble().states)
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_weak_error_improves_under_halving() {
        // State-dependent drift (mean reversion toward the population
        // mean) gives the scheme a genuine O(dt) weak error; the terminal
        // cost error against a shared-noise fine reference shrinks by a
        // factor in [1.5, 3] per halving.
        let model = ModelSpec {
            name: "mean_revert".into(),
            d: 1,
            m: 1,
            control: ControlSet::singleton(vec![0.0]),
            lip_const: 2.0,
            anchors: vec![],
            w0_dependence: crate::model::CommonPathDependence::None,
            constant_diffusions: true,
            coeffs: Arc::new(crate::model::Scalar1dCoeffs {
                drift_fn: |_, x, mean, _| (mean - x).clamp(-2.0, 2.0) - 0.5 * x.clamp(-2.0, 2.0),
                running_fn: |_, _, _, _| 0.0,
                terminal_fn: |x, _| x.clamp(-1.0, 1.0),
                sigma: 0.3,
                sigma0: 0.2,
            }),
        };
        let fine_steps = 512;
        let g_fine = grid(fine_steps);
        let policy_for = |steps: usize| singleton_policy(steps);
        let n_worlds = 16;
        let n_part = 64;
        let mut values = std::collections::BTreeMap::<usize, f64>::new();
        for &factor in &[1usize, 8, 16] {
            let mut acc = 0.0;
            for w in 0..n_worlds {
                let fine = NoiseBundle::sample(g_fine, 1, n_part, 2024, w as u32, false).unwrap();
                let noise = fine.coarsen(factor).unwrap();
                let steps = fine_steps / factor;
                let init = InitialLaw::Gaussian {
                    mean: vec![0.5],
                    std: 1.0,
                }
                .sample(n_part, 2024, w as u32)
                .unwrap();
                let run = simulate_mkv(&model, 0.0, &init, &policy_for(steps), &noise).unwrap();
                let mu = run.final_ensemble().measure().unwrap();
                let s = MeasureSummary::of(&mu);
                let g_terminal = mu
                    .pair(|x| model.coeffs.terminal_cost(x, &s.view(&mu), &[]))
                    .unwrap();
                acc += g_terminal;
            }
            values.insert(factor, acc / n_worlds as f64);
        }
        let reference = values[&1];
        let err16 = (values[&16] - reference).abs();
        let err8 = (values[&8] - reference).abs();
        let ratio = err16 / err8.max(1e-14);
        assert!(
            (1.5..=3.0).contains(&ratio),
            "weak-error halving ratio {ratio} (errors {err16} vs {err8})"
        );
    }

    #[test]
    fn moment_bounds_frozen_dynamics() {
        let model = ModelSpec::trivial(0.5);
        let g = grid(16);
        let report = moment_bounds(
            &model,
            g,
            &InitialLaw::Gaussian {
                mean: vec![0.0],
                std: 1.0,
            },
            &singleton_policy(16),
            8,
            64,
            2.0,
            5,
        )
        .unwrap();
        // Frozen dynamics: sup moment equals the initial moment, so C ≤ 1.
        assert!(report.c_sup <= 1.0 + 1e-12);
        assert_eq!(report.c_increment, 0.0);
    }

    #[test]
    fn moment_increment_slope_matches_brownian_scaling() {
        for &p in &[2.0, 4.0] {
            let model = ModelSpec::pure_diffusion(0.25, 0.35);
            let g = grid(64);
            let report = moment_bounds(
                &model,
                g,
                &InitialLaw::Gaussian {
                    mean: vec![0.0],
                    std: 1.0,
                },
                &singleton_policy(64),
                32,
                256,
                p,
                7,
            )
            .unwrap();
            assert!(
                (report.increment_slope - p / 2.0).abs() <= 0.2,
                "slope {} for p = {p}",
                report.increment_slope
            );
        }
    }
}
