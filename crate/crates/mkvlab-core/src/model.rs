//! Coefficient sets for the controlled dynamics, a small model zoo, and
//! numerical probes of the standing assumptions.
//!
//! A model supplies `(b, σ, σ⁰, f, g)` with a declared constant `K` such
//! that, uniformly in time, control and the common path,
//!
//! ```text
//! |h(x, μ) − h(x', μ')| ≤ K (|x − x'| + 𝒲₂(μ, μ')),      |h| ≤ K,
//! ```
//!
//! for h ∈ {b, f, g}. The declared constant is *tested*, not assumed:
//! [`probe_assumptions`] samples difference quotients and reports the
//! worst observed Lipschitz and bound estimates.
//!
//! Both diffusions depend on time only (the degenerate-coefficient branch
//! of the uniqueness pipeline); models violating that structure can be
//! declared, and the verifiers that need the structure reject them.
//!
//! Dependence on the common path is restricted to finitely many anchor
//! times: coefficients read the vector `(W⁰_{t₁∧t}, …, W⁰_{t_N∧t})`.
//! Coefficients with genuinely path-dependent ω⁰ dependence are not
//! representable; the anchored-Riemann residual probe quantifies what
//! that restriction costs on integral-type functionals.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeasureSummary, MeasureView};
use crate::noise::{BrownianPath, TimeGrid};
use crate::rng::{stream_rng, StreamId, StreamKind};
use crate::transport::{wasserstein2, W2Method};

/// The compact control set A.
#[derive(Debug, Clone)]
pub enum ControlSet {
    /// A box Π [lo_j, hi_j].
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// An explicit finite subset.
    Finite { atoms: Vec<Vec<f64>>, dim: usize },
}

impl ControlSet {
    pub fn interval(lo: f64, hi: f64) -> Self {
        ControlSet::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn singleton(a: Vec<f64>) -> Self {
        let dim = a.len();
        ControlSet::Finite { atoms: vec![a], dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lo, .. } => lo.len(),
            ControlSet::Finite { dim, .. } => *dim,
        }
    }

    pub fn contains(&self, a: &[f64], tol: f64) -> bool {
        match self {
            ControlSet::Box { lo, hi } => a
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            ControlSet::Finite { atoms, .. } => atoms.iter().any(|b| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max)
                    <= tol
            }),
        }
    }

    /// Uniform draw (probes).
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            ControlSet::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| rng.gen_range(*l..=*h))
                .collect(),
            ControlSet::Finite { atoms, .. } => atoms[rng.gen_range(0..atoms.len())].clone(),
        }
    }
}

/// How the coefficients read the common path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommonPathDependence {
    /// No ω⁰ dependence at all.
    None,
    /// Reads W⁰ only at the declared anchor times (capped at current
    /// time) — the representable class.
    AnchorsOnly,
}

/// Evaluable coefficient set. `w0` carries the anchor feature vector
/// `(W⁰_{t₁∧t}, …, W⁰_{t_N∧t})` flattened as `m × N`.
pub trait Coefficients: Send + Sync {
    /// Drift b(t, x, μ, a) into `out` (length d).
    fn drift(&self, t: f64, x: &[f64], mu: &MeasureView, a: &[f64], w0: &[f64], out: &mut [f64]);
    /// Idiosyncratic diffusion σ(t) into `out` (d × m, row-major).
    fn sigma(&self, t: f64, out: &mut [f64]);
    /// Common-noise diffusion σ⁰(t) into `out` (d × m, row-major).
    fn sigma0(&self, t: f64, out: &mut [f64]);
    /// Running cost f(t, x, μ, a).
    fn running_cost(&self, t: f64, x: &[f64], mu: &MeasureView, a: &[f64], w0: &[f64]) -> f64;
    /// Terminal cost g(x, μ).
    fn terminal_cost(&self, x: &[f64], mu: &MeasureView, w0: &[f64]) -> f64;
}

/// A named coefficient set with its declared constants.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    /// State dimension d.
    pub d: usize,
    /// Brownian dimension m.
    pub m: usize,
    pub control: ControlSet,
    /// Declared Lipschitz/bound constant K.
    pub lip_const: f64,
    /// Anchor times at which coefficients may read W⁰.
    pub anchors: Vec<f64>,
    pub w0_dependence: CommonPathDependence,
    /// True when both diffusions depend on time only (required by the
    /// Hamiltonian evaluator and the uniqueness pipeline).
    pub constant_diffusions: bool,
    pub coeffs: Arc<dyn Coefficients>,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("K", &self.lip_const)
            .finish()
    }
}

impl ModelSpec {
    /// Anchor feature vector at time `t` from a common path: the values
    /// `W⁰_{t_i ∧ t}` for each anchor, flattened (m per anchor). Anchor
    /// times must lie on the grid.
    pub fn w0_features(&self, t: f64, w0: &BrownianPath) -> Result<Vec<f64>> {
        let mut feats = Vec::with_capacity(self.anchors.len() * self.m);
        let grid = w0.grid();
        let kt = grid
            .index_of(t.min(grid.t_end()))
            .ok_or_else(|| Error::precondition(format!("time {t} off grid for anchor features")))?;
        for &ta in &self.anchors {
            let ka = grid
                .index_of(ta)
                .ok_or_else(|| Error::precondition(format!("anchor {ta} off grid")))?;
            feats.extend_from_slice(w0.value(ka.min(kt)));
        }
        Ok(feats)
    }

    /// Number of anchor feature components.
    pub fn w0_feature_len(&self) -> usize {
        self.anchors.len() * self.m
    }

    pub fn sigma_matrix(&self, t: f64) -> Vec<f64> {
        let mut s = vec![0.0; self.d * self.m];
        self.coeffs.sigma(t, &mut s);
        s
    }

    pub fn sigma0_matrix(&self, t: f64) -> Vec<f64> {
        let mut s = vec![0.0; self.d * self.m];
        self.coeffs.sigma0(t, &mut s);
        s
    }

    /// Fails unless both diffusions are declared time-only.
    pub fn require_constant_diffusions(&self) -> Result<()> {
        if self.constant_diffusions {
            Ok(())
        } else {
            Err(Error::unsupported(format!(
                "model {} has state- or control-dependent diffusions",
                self.name
            )))
        }
    }
}

// ── Model zoo ───────────────────────────────────────────────────────

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}

struct TrivialCoeffs {
    g_const: f64,
}

impl Coefficients for TrivialCoeffs {
    fn drift(&self, _t: f64, _x: &[f64], _mu: &MeasureView, _a: &[f64], _w0: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn sigma(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn sigma0(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn running_cost(&self, _t: f64, _x: &[f64], _mu: &MeasureView, _a: &[f64], _w0: &[f64]) -> f64 {
        0.0
    }
    fn terminal_cost(&self, _x: &[f64], _mu: &MeasureView, _w0: &[f64]) -> f64 {
        self.g_const
    }
}

struct BangBangCoeffs {
    sigma: f64,
    sigma0: f64,
}

impl Coefficients for BangBangCoeffs {
    fn drift(&self, _t: f64, _x: &[f64], _mu: &MeasureView, a: &[f64], _w0: &[f64], out: &mut [f64]) {
        out[0] = a[0];
    }
    fn sigma(&self, _t: f64, out: &mut [f64]) {
        out[0] = self.sigma;
    }
    fn sigma0(&self, _t: f64, out: &mut [f64]) {
        out[0] = self.sigma0;
    }
    fn running_cost(&self, _t: f64, _x: &[f64], _mu: &MeasureView, a: &[f64], _w0: &[f64]) -> f64 {
        0.5 * a[0] * a[0]
    }
    fn terminal_cost(&self, x: &[f64], mu: &MeasureView, _w0: &[f64]) -> f64 {
        clip(x[0], -1.0, 1.0) * clip(mu.mean_1d(), -1.0, 1.0)
    }
}

struct AnchoredCoeffs {
    inner: BangBangCoeffs,
}

impl Coefficients for AnchoredCoeffs {
    fn drift(&self, t: f64, x: &[f64], mu: &MeasureView, a: &[f64], w0: &[f64], out: &mut [f64]) {
        self.inner.drift(t, x, mu, a, w0, out);
    }
    fn sigma(&self, t: f64, out: &mut [f64]) {
        self.inner.sigma(t, out);
    }
    fn sigma0(&self, t: f64, out: &mut [f64]) {
        self.inner.sigma0(t, out);
    }
    fn running_cost(&self, t: f64, x: &[f64], mu: &MeasureView, a: &[f64], w0: &[f64]) -> f64 {
        self.inner.running_cost(t, x, mu, a, w0)
    }
    fn terminal_cost(&self, x: &[f64], mu: &MeasureView, w0: &[f64]) -> f64 {
        self.inner.terminal_cost(x, mu, w0) * w0[0].tanh()
    }
}

/// Scalar coefficients from plain function pointers; handy for oracle
/// models in tests and probes. Diffusions constant in time.
pub struct Scalar1dCoeffs {
    pub drift_fn: fn(f64, f64, f64, f64) -> f64,
    pub running_fn: fn(f64, f64, f64, f64) -> f64,
    pub terminal_fn: fn(f64, f64) -> f64,
    pub sigma: f64,
    pub sigma0: f64,
}

impl Coefficients for Scalar1dCoeffs {
    fn drift(&self, t: f64, x: &[f64], mu: &MeasureView, a: &[f64], _w0: &[f64], out: &mut [f64]) {
        out[0] = (self.drift_fn)(t, x[0], mu.mean_1d(), a[0]);
    }
    fn sigma(&self, _t: f64, out: &mut [f64]) {
        out[0] = self.sigma;
    }
    fn sigma0(&self, _t: f64, out: &mut [f64]) {
        out[0] = self.sigma0;
    }
    fn running_cost(&self, t: f64, x: &[f64], mu: &MeasureView, a: &[f64], _w0: &[f64]) -> f64 {
        (self.running_fn)(t, x[0], mu.mean_1d(), a[0])
    }
    fn terminal_cost(&self, x: &[f64], mu: &MeasureView, _w0: &[f64]) -> f64 {
        (self.terminal_fn)(x[0], mu.mean_1d())
    }
}

impl ModelSpec {
    /// b = f = 0, g constant, singleton control.
    pub fn trivial(g_const: f64) -> Self {
        ModelSpec {
            name: "trivial".into(),
            d: 1,
            m: 1,
            control: ControlSet::singleton(vec![0.0]),
            lip_const: g_const.abs().max(1e-12),
            anchors: vec![],
            w0_dependence: CommonPathDependence::None,
            constant_diffusions: true,
            coeffs: Arc::new(TrivialCoeffs { g_const }),
        }
    }

    /// d = m = 1, A = [−1, 1], b = a, σ = 0.2, σ⁰ = 0.3, f = ½a²,
    /// g(x, μ) = clip(x) · clip(mean μ). K = 1.
    pub fn bang_bang() -> Self {
        ModelSpec {
            name: "bang_bang".into(),
            d: 1,
            m: 1,
            control: ControlSet::interval(-1.0, 1.0),
            lip_const: 1.0,
            anchors: vec![],
            w0_dependence: CommonPathDependence::None,
            constant_diffusions: true,
            coeffs: Arc::new(BangBangCoeffs {
                sigma: 0.2,
                sigma0: 0.3,
            }),
        }
    }

    /// Bang-bang dynamics whose terminal cost additionally multiplies by
    /// tanh(W⁰_{t₁}); exercises anchored random coefficients.
    pub fn common_noise_anchored(t1: f64) -> Self {
        ModelSpec {
            name: "common_noise_anchored".into(),
            d: 1,
            m: 1,
            control: ControlSet::interval(-1.0, 1.0),
            lip_const: 1.0,
            anchors: vec![t1],
            w0_dependence: CommonPathDependence::AnchorsOnly,
            constant_diffusions: true,
            coeffs: Arc::new(AnchoredCoeffs {
                inner: BangBangCoeffs {
                    sigma: 0.2,
                    sigma0: 0.3,
                },
            }),
        }
    }

    /// Uncontrolled diffusion with a clipped terminal cost (singleton
    /// control), used as an oracle model.
    pub fn pure_diffusion(sigma: f64, sigma0: f64) -> Self {
        ModelSpec {
            name: "pure_diffusion".into(),
            d: 1,
            m: 1,
            control: ControlSet::singleton(vec![0.0]),
            lip_const: 1.0,
            anchors: vec![],
            w0_dependence: CommonPathDependence::None,
            constant_diffusions: true,
            coeffs: Arc::new(Scalar1dCoeffs {
                drift_fn: |_, _, _, _| 0.0,
                running_fn: |_, _, _, _| 0.0,
                terminal_fn: |x, _| clip(x, -1.0, 1.0),
                sigma,
                sigma0,
            }),
        }
    }

    /// Look a model up by zoo name.
    pub fn by_name(name: &str, t1: f64) -> Result<ModelSpec> {
        match name {
            "trivial" => Ok(ModelSpec::trivial(1.0)),
            "bang_bang" => Ok(ModelSpec::bang_bang()),
            "common_noise_anchored" => Ok(ModelSpec::common_noise_anchored(t1)),
            "pure_diffusion" => Ok(ModelSpec::pure_diffusion(0.2, 0.3)),
            other => Err(Error::config(format!("unknown model {other:?}"))),
        }
    }
}

// ── Assumption probes ───────────────────────────────────────────────

/// Result of [`probe_assumptions`].
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    /// Worst observed Lipschitz quotient over all coefficients.
    pub k_hat_lip: f64,
    /// Worst observed absolute value over all coefficients.
    pub k_hat_bound: f64,
    pub n_probe: usize,
    pub pass: bool,
}

/// Sample random `(t, x, x', μ, μ', a)` tuples and estimate the joint
/// Lipschitz constant and bound of (b, f, g). Probes are addressed by
/// index, so enlarging `n_probe` extends (never replaces) the probe set
/// and the estimates are monotone in `n_probe`.
pub fn probe_assumptions(
    model: &ModelSpec,
    n_probe: usize,
    radius: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_probe < 2 {
        return Err(Error::precondition("need at least two probes"));
    }
    let d = model.d;
    let mut k_lip = 0.0f64;
    let mut k_bound = 0.0f64;
    for p in 0..n_probe {
        let mut rng = stream_rng(seed, StreamId::new(0, StreamKind::Aux, p as u32));
        let t: f64 = rng.gen_range(0.0..1.0);
        let a = model.control.sample(&mut rng);
        let w0: Vec<f64> = (0..model.w0_feature_len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let draw_point = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| rng.gen_range(-radius..radius)).collect()
        };
        let draw_cloud = |rng: &mut rand_chacha::ChaCha8Rng| -> EmpiricalMeasure {
            let atoms = 16;
            let pts: Vec<f64> = (0..atoms * d).map(|_| rng.gen_range(-radius..radius)).collect();
            EmpiricalMeasure::new(pts, d).expect("probe cloud")
        };
        let x = draw_point(&mut rng);
        let xp = draw_point(&mut rng);
        let mu = draw_cloud(&mut rng);
        let mup = draw_cloud(&mut rng);
        let sum_mu = MeasureSummary::of(&mu);
        let sum_mup = MeasureSummary::of(&mup);
        let vmu = sum_mu.view(&mu);
        let vmup = sum_mup.view(&mup);
        let dist = {
            let dx: f64 = x
                .iter()
                .zip(&xp)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            dx + wasserstein2(&mu, &mup, W2Method::Exact)?
        };
        let c = model.coeffs.as_ref();
        let mut bx = vec![0.0; d];
        let mut bxp = vec![0.0; d];
        c.drift(t, &x, &vmu, &a, &w0, &mut bx);
        c.drift(t, &xp, &vmup, &a, &w0, &mut bxp);
        let mut evals: Vec<(f64, f64)> = (0..d).map(|j| (bx[j], bxp[j])).collect();
        evals.push((
            c.running_cost(t, &x, &vmu, &a, &w0),
            c.running_cost(t, &xp, &vmup, &a, &w0),
        ));
        evals.push((
            c.terminal_cost(&x, &vmu, &w0),
            c.terminal_cost(&xp, &vmup, &w0),
        ));
        for (h, hp) in evals {
            if !h.is_finite() || !hp.is_finite() {
                return Err(Error::evaluation("coefficient returned non-finite value"));
            }
            k_bound = k_bound.max(h.abs()).max(hp.abs());
            if dist > 1e-12 {
                k_lip = k_lip.max((h - hp).abs() / dist);
            }
        }
    }
    let tol = 1e-9 * model.lip_const.max(1.0);
    Ok(AssumptionReport {
        k_hat_lip: k_lip,
        k_hat_bound: k_bound,
        n_probe,
        pass: k_lip <= model.lip_const + tol && k_bound <= model.lip_const + tol,
    })
}

// ── Anchored-approximation residuals ───────────────────────────────

/// Residual report of the anchored (piecewise-Markovian) representation.
#[derive(Debug, Clone)]
pub struct MarkovianResiduals {
    /// L² residual of the terminal coefficient.
    pub g_eps: f64,
    /// L² residual path of the running cost (per probe time).
    pub f_eps_path: Vec<f64>,
    /// L² residual path of the drift (per probe time).
    pub b_eps_path: Vec<f64>,
}

impl MarkovianResiduals {
    pub fn zero(n_times: usize) -> Self {
        MarkovianResiduals {
            g_eps: 0.0,
            f_eps_path: vec![0.0; n_times],
            b_eps_path: vec![0.0; n_times],
        }
    }

    pub fn total(&self) -> f64 {
        self.g_eps
            + self.f_eps_path.iter().cloned().fold(0.0f64, f64::max)
            + self.b_eps_path.iter().cloned().fold(0.0f64, f64::max)
    }
}

/// Residuals of the model's own anchored representation. Zoo coefficients
/// read W⁰ only at anchor times, so their anchored version is exact and
/// the residuals vanish identically; genuinely path-dependent
/// coefficients are not representable in a [`ModelSpec`] in the first
/// place.
pub fn markovian_residuals(model: &ModelSpec, n_probe_times: usize) -> MarkovianResiduals {
    debug_assert!(matches!(
        model.w0_dependence,
        CommonPathDependence::None | CommonPathDependence::AnchorsOnly
    ));
    MarkovianResiduals::zero(n_probe_times)
}

/// L² error of an N-point left-endpoint Riemann anchor approximation of
/// the path functional `g(ω⁰) = ∫₀^T W⁰_s ds`, estimated over `n_samples`
/// sampled paths. The fine-grid trapezoid value stands in for the exact
/// integral. This measures the anchored-class truncation error for a
/// functional outside the representable class; the error is O(1/N).
pub fn riemann_anchor_residual(
    grid: TimeGrid,
    n_anchors: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_anchors == 0 || grid.n_steps() % n_anchors != 0 {
        return Err(Error::precondition(format!(
            "anchor count {n_anchors} must divide {} steps",
            grid.n_steps()
        )));
    }
    let stride = grid.n_steps() / n_anchors;
    let dt = grid.dt();
    let mut sq_sum = 0.0;
    for s in 0..n_samples {
        let w = BrownianPath::sample_stream(
            grid,
            1,
            seed,
            StreamId::new(s as u32, StreamKind::Common, 0),
        )?;
        let mut exact = 0.0;
        for k in 0..grid.n_steps() {
            exact += 0.5 * (w.value(k)[0] + w.value(k + 1)[0]) * dt;
        }
        let coarse_dt = dt * stride as f64;
        let mut anchored = 0.0;
        for j in 0..n_anchors {
            anchored += w.value(j * stride)[0] * coarse_dt;
        }
        sq_sum += (exact - anchored) * (exact - anchored);
    }
    Ok((sq_sum / n_samples as f64).sqrt())
}
