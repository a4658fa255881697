//! Browser bindings for the laboratory: three interactive operations
//! compiled to WebAssembly and drawn by the static page in `www/`.
//!
//! Everything returns flat `Float64Array` buffers with small headers so
//! the page needs no glue types:
//!
//! * [`simulate_cloud`] — particle population under common plus
//!   idiosyncratic noise, one frame per grid point.
//! * [`wasserstein_matching`] — exact 𝒲₂ between two planar clouds with
//!   the optimal matching for drawing transport lines.
//! * [`envelope_curve`] — the backward error-envelope path Y(t) for the
//!   approximation pipeline.

use wasm_bindgen::prelude::*;

use mkvlab_core::control::{ControlGrid, FeedbackPolicy};
use mkvlab_core::measure::EmpiricalMeasure;
use mkvlab_core::model::{CommonPathDependence, ControlSet, ModelSpec};
use mkvlab_core::noise::{NoiseBundle, TimeGrid};
use mkvlab_core::sim::{simulate_mkv, InitialLaw};
use mkvlab_core::transport::transport_plan;
use mkvlab_core::verify::{bsde_envelope, ResidualPaths};
use std::sync::Arc;

fn text_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// One-dimensional population under
/// `dX = a dt + σ dW^i + σ⁰ dW⁰` from a Gaussian initial cloud.
///
/// Returns `[n_frames, n_particles, states (frame-major), common path]`:
/// header of 2, then `n_frames·n_particles` states, then `n_frames`
/// values of W⁰.
#[wasm_bindgen]
pub fn simulate_cloud(
    n_particles: usize,
    n_steps: usize,
    sigma: f64,
    sigma0: f64,
    drift: f64,
    seed: u64,
) -> Result<Vec<f64>, JsValue> {
    simulate_cloud_impl(n_particles, n_steps, sigma, sigma0, drift, seed)
        .map_err(|e| JsValue::from_str(&e))
}

pub fn simulate_cloud_impl(
    n_particles: usize,
    n_steps: usize,
    sigma: f64,
    sigma0: f64,
    drift: f64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let n_particles = n_particles.clamp(1, 4096);
    let n_steps = n_steps.clamp(1, 1024);
    let model = ModelSpec {
        name: "demo".into(),
        d: 1,
        m: 1,
        control: ControlSet::interval(-2.0, 2.0),
        lip_const: 2.0_f64.max(sigma.abs()).max(sigma0.abs()),
        anchors: vec![],
        w0_dependence: CommonPathDependence::None,
        constant_diffusions: true,
        coeffs: Arc::new(DemoCoeffs { sigma, sigma0 }),
    };
    let grid = TimeGrid::new(0.0, 1.0, n_steps).map_err(text_err)?;
    let noise = NoiseBundle::sample(grid, 1, n_particles, seed, 0, false).map_err(text_err)?;
    let init = InitialLaw::Gaussian {
        mean: vec![0.0],
        std: 0.6,
    }
    .sample(n_particles, seed, 0)
    .map_err(text_err)?;
    let cgrid = Arc::new(
        ControlGrid::new(vec![drift.clamp(-2.0, 2.0)], 1).map_err(text_err)?,
    );
    let policy = FeedbackPolicy::constant(cgrid, 0, n_steps).map_err(text_err)?;
    let run = simulate_mkv(&model, 0.0, &init, &policy, &noise).map_err(text_err)?;
    let frames = n_steps + 1;
    let mut out = Vec::with_capacity(2 + frames * n_particles + frames);
    out.push(frames as f64);
    out.push(n_particles as f64);
    for e in &run.steps {
        out.extend_from_slice(&e.states);
    }
    for k in 0..frames {
        out.push(noise.common.value(k)[0]);
    }
    Ok(out)
}

struct DemoCoeffs {
    sigma: f64,
    sigma0: f64,
}

impl mkvlab_core::model::Coefficients for DemoCoeffs {
    fn drift(
        &self,
        _t: f64,
        _x: &[f64],
        _mu: &mkvlab_core::measure::MeasureView,
        a: &[f64],
        _w0: &[f64],
        out: &mut [f64],
    ) {
        out[0] = a[0];
    }
    fn sigma(&self, _t: f64, out: &mut [f64]) {
        out[0] = self.sigma;
    }
    fn sigma0(&self, _t: f64, out: &mut [f64]) {
        out[0] = self.sigma0;
    }
    fn running_cost(
        &self,
        _t: f64,
        _x: &[f64],
        _mu: &mkvlab_core::measure::MeasureView,
        _a: &[f64],
        _w0: &[f64],
    ) -> f64 {
        0.0
    }
    fn terminal_cost(
        &self,
        _x: &[f64],
        _mu: &mkvlab_core::measure::MeasureView,
        _w0: &[f64],
    ) -> f64 {
        0.0
    }
}

/// Exact 𝒲₂ between two planar clouds given as flat `[x0, y0, x1, y1, …]`
/// buffers of equal length. Returns `[distance, match(0), …, match(n−1)]`
/// where `match(i)` is the target index coupled to source atom `i`.
#[wasm_bindgen]
pub fn wasserstein_matching(source: Vec<f64>, target: Vec<f64>) -> Result<Vec<f64>, JsValue> {
    wasserstein_matching_impl(source, target).map_err(|e| JsValue::from_str(&e))
}

pub fn wasserstein_matching_impl(source: Vec<f64>, target: Vec<f64>) -> Result<Vec<f64>, String> {
    if source.len() != target.len() || source.is_empty() || source.len() % 2 != 0 {
        return Err("source and target must be nonempty, equal-length (x, y) buffers".into());
    }
    let mu = EmpiricalMeasure::new(source, 2).map_err(text_err)?;
    let nu = EmpiricalMeasure::new(target, 2).map_err(text_err)?;
    if mu.n() > 256 {
        return Err("demo capped at 256 atoms".into());
    }
    let plan = transport_plan(&mu, &nu).map_err(text_err)?;
    let n = plan.n;
    let mut out = Vec::with_capacity(1 + n);
    out.push(plan.cost.max(0.0).sqrt());
    for i in 0..n {
        let j = (0..n)
            .find(|&j| plan.coupling[i * n + j] > 0.0)
            .unwrap_or(0);
        out.push(j as f64);
    }
    Ok(out)
}

/// Backward error-envelope path: returns `[t…, Y(t)…]` (two blocks of
/// `points` values each) on `[0, t_end]`.
#[wasm_bindgen]
pub fn envelope_curve(
    eps0: f64,
    eps1: f64,
    k_lip: f64,
    c_k: f64,
    t_end: f64,
    points: usize,
) -> Result<Vec<f64>, JsValue> {
    envelope_curve_impl(eps0, eps1, k_lip, c_k, t_end, points).map_err(|e| JsValue::from_str(&e))
}

pub fn envelope_curve_impl(
    eps0: f64,
    eps1: f64,
    k_lip: f64,
    c_k: f64,
    t_end: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let points = points.clamp(2, 2048);
    let t_end = if t_end > 0.0 { t_end } else { 1.0 };
    let grid = TimeGrid::new(0.0, t_end, points - 1).map_err(text_err)?;
    let path = bsde_envelope(
        0.0,
        eps0.max(0.0),
        eps1.max(0.0),
        k_lip.max(0.0),
        c_k.max(0.0),
        &grid,
        &ResidualPaths::zero(&grid),
    )
    .map_err(text_err)?;
    let mut out = Vec::with_capacity(2 * points);
    out.extend_from_slice(&path.times);
    out.extend_from_slice(&path.y);
    Ok(out)
}
