//! Cylindrical test functions on the space of measures and their measure
//! derivatives in closed form.
//!
//! A cylindrical function has the shape
//!
//! ```text
//! u(t, μ) = ψ(t) · F(μ(φ₁), …, μ(φ_k)),
//! ```
//!
//! a smooth outer function of finitely many integral functionals. Lifting
//! to random variables and differentiating gives the derivative in
//! measure and its companions explicitly:
//!
//! ```text
//! ∂_μ u(μ)(x)        = ψ(t) Σ_i ∂_i F · ∇φ_i(x),
//! ∂_x ∂_μ u(μ)(x)    = ψ(t) Σ_i ∂_i F · ∇²φ_i(x),
//! ∂²_μ u(μ)(x, x')   = ψ(t) Σ_{ij} ∂²_{ij} F · ∇φ_i(x) ∇φ_j(x')ᵀ,
//! ∂_t u(t, μ)        = ψ'(t) F(…).
//! ```
//!
//! This is the one class where the full measure calculus is machine
//! checkable, which is why the Hamiltonian and Itô-expansion verifiers
//! take their test functions from here. All functions are deterministic
//! in ω⁰, so the Doob–Meyer pair degenerates: the time operator is the
//! plain time derivative and the martingale operator vanishes.

use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::rng::aux_rng;

/// A smooth scalar field φ: ℝ^d → ℝ with explicit gradient and Hessian.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    /// Gradient into `out` (length d).
    fn grad(&self, x: &[f64], out: &mut [f64]);
    /// Hessian into `out` (length d·d, row-major).
    fn hess(&self, x: &[f64], out: &mut [f64]);
}

/// A smooth outer function F: ℝ^k → ℝ with explicit derivatives.
pub trait OuterFunction: Send + Sync {
    fn arity(&self) -> usize;
    fn eval(&self, v: &[f64]) -> f64;
    fn grad(&self, v: &[f64], out: &mut [f64]);
    fn hess(&self, v: &[f64], out: &mut [f64]);
}

/// Deterministic time factor ψ(t) with derivative.
#[derive(Debug, Clone, Copy)]
pub enum TimeFactor {
    One,
    /// ψ(t) = a + b·t.
    Affine { a: f64, b: f64 },
    /// ψ(t) = exp(λ t).
    Exp { lambda: f64 },
}

impl TimeFactor {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::One => 1.0,
            TimeFactor::Affine { a, b } => a + b * t,
            TimeFactor::Exp { lambda } => (lambda * t).exp(),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            TimeFactor::One => 0.0,
            TimeFactor::Affine { b, .. } => b,
            TimeFactor::Exp { lambda } => lambda * (lambda * t).exp(),
        }
    }
}

// ── Concrete inner fields ───────────────────────────────────────────

/// φ(x) = Σ_j c_j x^j in one dimension.
#[derive(Debug, Clone)]
pub struct Polynomial1d {
    pub coeffs: Vec<f64>,
}

impl Polynomial1d {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial1d { coeffs }
    }

    /// φ(x) = x.
    pub fn identity() -> Self {
        Polynomial1d::new(vec![0.0, 1.0])
    }

    /// φ(x) = x².
    pub fn square() -> Self {
        Polynomial1d::new(vec![0.0, 0.0, 1.0])
    }

    fn deriv_eval(&self, x: f64, order: usize) -> f64 {
        let mut acc = 0.0;
        for (j, &c) in self.coeffs.iter().enumerate().rev() {
            if j < order {
                break;
            }
            let mut fac = 1.0;
            for l in 0..order {
                fac *= (j - l) as f64;
            }
            acc = acc * x + c * fac;
        }
        acc
    }
}

impl ScalarField for Polynomial1d {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.deriv_eval(x[0], 0)
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.deriv_eval(x[0], 1);
    }
    fn hess(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.deriv_eval(x[0], 2);
    }
}

/// φ(x) = sin(⟨w, x⟩ + b) — a bounded smooth field for probe diversity.
#[derive(Debug, Clone)]
pub struct SineField {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ScalarField for SineField {
    fn dim(&self) -> usize {
        self.weights.len()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (dot(&self.weights, x) + self.bias).sin()
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        let c = (dot(&self.weights, x) + self.bias).cos();
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = c * w;
        }
    }
    fn hess(&self, x: &[f64], out: &mut [f64]) {
        let d = self.weights.len();
        let s = -(dot(&self.weights, x) + self.bias).sin();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = s * self.weights[i] * self.weights[j];
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ── Concrete outer functions ────────────────────────────────────────

/// F(v) = c + ⟨w, v⟩.
#[derive(Debug, Clone)]
pub struct AffineOuter {
    pub constant: f64,
    pub weights: Vec<f64>,
}

impl OuterFunction for AffineOuter {
    fn arity(&self) -> usize {
        self.weights.len()
    }
    fn eval(&self, v: &[f64]) -> f64 {
        self.constant + dot(&self.weights, v)
    }
    fn grad(&self, _v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.weights);
    }
    fn hess(&self, _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// F(v) = ½ vᵀ Q v + ⟨w, v⟩ + c (Q symmetrised internally).
#[derive(Debug, Clone)]
pub struct QuadraticOuter {
    pub quad: Vec<f64>,
    pub weights: Vec<f64>,
    pub constant: f64,
    pub k: usize,
}

impl QuadraticOuter {
    /// F(v₁) = v₁² in arity one.
    pub fn square() -> Self {
        QuadraticOuter {
            quad: vec![2.0],
            weights: vec![0.0],
            constant: 0.0,
            k: 1,
        }
    }
}

impl OuterFunction for QuadraticOuter {
    fn arity(&self) -> usize {
        self.k
    }
    fn eval(&self, v: &[f64]) -> f64 {
        let mut acc = self.constant + dot(&self.weights, v);
        for i in 0..self.k {
            for j in 0..self.k {
                acc += 0.5 * self.quad[i * self.k + j] * v[i] * v[j];
            }
        }
        acc
    }
    fn grad(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.k {
            let mut g = self.weights[i];
            for j in 0..self.k {
                g += 0.5 * (self.quad[i * self.k + j] + self.quad[j * self.k + i]) * v[j];
            }
            out[i] = g;
        }
    }
    fn hess(&self, _v: &[f64], out: &mut [f64]) {
        for i in 0..self.k {
            for j in 0..self.k {
                out[i * self.k + j] = 0.5 * (self.quad[i * self.k + j] + self.quad[j * self.k + i]);
            }
        }
    }
}

// ── The cylindrical function ────────────────────────────────────────

/// `u(t, μ) = ψ(t) F(μ(φ₁), …, μ(φ_k))` with explicit measure calculus.
pub struct CylindricalFn {
    bases: Vec<Box<dyn ScalarField>>,
    outer: Box<dyn OuterFunction>,
    time: TimeFactor,
    dim: usize,
}

impl CylindricalFn {
    pub fn new(
        bases: Vec<Box<dyn ScalarField>>,
        outer: Box<dyn OuterFunction>,
        time: TimeFactor,
    ) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::config(
                "cylindrical function needs at least one basis field",
            ));
        }
        if outer.arity() != bases.len() {
            return Err(Error::config(format!(
                "outer arity {} does not match {} basis fields",
                outer.arity(),
                bases.len()
            )));
        }
        let dim = bases[0].dim();
        if bases.iter().any(|b| b.dim() != dim) {
            return Err(Error::config("all basis fields must share one dimension"));
        }
        Ok(CylindricalFn {
            bases,
            outer,
            time,
            dim,
        })
    }

    /// `u(μ) = μ(φ)` for a single field.
    pub fn linear(phi: Box<dyn ScalarField>) -> Result<Self> {
        CylindricalFn::new(
            vec![phi],
            Box::new(AffineOuter {
                constant: 0.0,
                weights: vec![1.0],
            }),
            TimeFactor::One,
        )
    }

    /// `u(μ) = (μ(φ))²`.
    pub fn squared_pairing(phi: Box<dyn ScalarField>) -> Result<Self> {
        CylindricalFn::new(vec![phi], Box::new(QuadraticOuter::square()), TimeFactor::One)
    }

    /// `u ≡ c` in dimension `dim`.
    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        CylindricalFn::new(
            vec![Box::new(SineField {
                weights: vec![0.0; dim],
                bias: 0.0,
            })],
            Box::new(AffineOuter {
                constant: c,
                weights: vec![0.0],
            }),
            TimeFactor::One,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arity(&self) -> usize {
        self.bases.len()
    }

    /// Pairings v_i = μ(φ_i).
    pub fn pairings(&self, mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
        self.bases
            .iter()
            .map(|phi| mu.pair(|x| phi.eval(x)))
            .collect()
    }

    pub fn value(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
        let v = self.pairings(mu)?;
        Ok(self.time.eval(t) * self.outer.eval(&v))
    }

    /// ∂_t u(t, μ) — the full time-operator term for deterministic fields.
    pub fn time_deriv(&self, t: f64, mu: &EmpiricalMeasure) -> Result<f64> {
        let v = self.pairings(mu)?;
        Ok(self.time.deriv(t) * self.outer.eval(&v))
    }

    /// Derivative in measure ∂_μ u(t, μ)(x) into `out` (length d), given
    /// precomputed pairings.
    pub fn lions_grad(&self, t: f64, pairings: &[f64], x: &[f64], out: &mut [f64]) {
        let k = self.bases.len();
        let mut fg = vec![0.0; k];
        self.outer.grad(pairings, &mut fg);
        out.fill(0.0);
        let mut tmp = vec![0.0; self.dim];
        for (i, phi) in self.bases.iter().enumerate() {
            phi.grad(x, &mut tmp);
            for (o, g) in out.iter_mut().zip(&tmp) {
                *o += fg[i] * g;
            }
        }
        let psi = self.time.eval(t);
        for o in out.iter_mut() {
            *o *= psi;
        }
    }

    /// Space derivative of the measure derivative, ∂_x ∂_μ u(t, μ)(x),
    /// into `out` (length d·d).
    pub fn lions_grad_x(&self, t: f64, pairings: &[f64], x: &[f64], out: &mut [f64]) {
        let k = self.bases.len();
        let d = self.dim;
        let mut fg = vec![0.0; k];
        self.outer.grad(pairings, &mut fg);
        out.fill(0.0);
        let mut tmp = vec![0.0; d * d];
        for (i, phi) in self.bases.iter().enumerate() {
            phi.hess(x, &mut tmp);
            for (o, h) in out.iter_mut().zip(&tmp) {
                *o += fg[i] * h;
            }
        }
        let psi = self.time.eval(t);
        for o in out.iter_mut() {
            *o *= psi;
        }
    }

    /// Second derivative in measure ∂²_μ u(t, μ)(x, x') into `out`
    /// (length d·d).
    pub fn lions_hess2(&self, t: f64, pairings: &[f64], x: &[f64], xp: &[f64], out: &mut [f64]) {
        let k = self.bases.len();
        let d = self.dim;
        let mut fh = vec![0.0; k * k];
        self.outer.hess(pairings, &mut fh);
        let mut gx = vec![0.0; d];
        let mut gy = vec![0.0; d];
        out.fill(0.0);
        for i in 0..k {
            self.bases[i].grad(x, &mut gx);
            for j in 0..k {
                let w = fh[i * k + j];
                if w == 0.0 {
                    continue;
                }
                self.bases[j].grad(xp, &mut gy);
                for a in 0..d {
                    for b in 0..d {
                        out[a * d + b] += w * gx[a] * gy[b];
                    }
                }
            }
        }
        let psi = self.time.eval(t);
        for o in out.iter_mut() {
            *o *= psi;
        }
    }

    /// Double atom average ÊẼ tr(∂²_μu(t, μ)(·, ·) · C) for a d×d matrix
    /// C. The cylindrical second derivative factorises through the
    /// atom-averaged basis gradients, so this costs O(n·k·d) instead of
    /// the O(n²) double sum.
    pub fn pair_average_hess_trace(
        &self,
        t: f64,
        pairings: &[f64],
        mu: &EmpiricalMeasure,
        c_mat: &[f64],
    ) -> Result<f64> {
        let k = self.bases.len();
        let d = self.dim;
        if c_mat.len() != d * d {
            return Err(Error::config("C must be d×d"));
        }
        let mut fh = vec![0.0; k * k];
        self.outer.hess(pairings, &mut fh);
        let mut gbar = vec![0.0; k * d];
        let mut tmp = vec![0.0; d];
        for x in mu.iter_atoms() {
            for (i, phi) in self.bases.iter().enumerate() {
                phi.grad(x, &mut tmp);
                for a in 0..d {
                    gbar[i * d + a] += tmp[a];
                }
            }
        }
        for v in gbar.iter_mut() {
            *v /= mu.n() as f64;
        }
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                let w = fh[i * k + j];
                if w == 0.0 {
                    continue;
                }
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += gbar[i * d + a] * gbar[j * d + b] * c_mat[b * d + a];
                    }
                }
                acc += w * s;
            }
        }
        Ok(acc * self.time.eval(t))
    }

    /// Lifted finite-difference check of ∂_μ u: moving atom `i` of `μ` by
    /// `h·e_j` changes `u` by `(1/n) ∂_μu(μ)(x_i)_j · h + O(h²)`. Returns
    /// the worst relative error against central differences over
    /// `n_probes` random (atom, direction) pairs.
    pub fn lifted_fd_error(
        &self,
        mu: &EmpiricalMeasure,
        h: f64,
        n_probes: usize,
        seed: u64,
    ) -> Result<f64> {
        let mut rng = aux_rng(seed, 0xF0);
        let n = mu.n();
        let d = self.dim;
        let pairings = self.pairings(mu)?;
        let mut worst: f64 = 0.0;
        let mut grad = vec![0.0; d];
        for _ in 0..n_probes {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..d);
            self.lions_grad(0.0, &pairings, mu.atom(i), &mut grad);
            let predicted = grad[j] / n as f64;
            let mut plus = mu.points().to_vec();
            let mut minus = mu.points().to_vec();
            plus[i * d + j] += h;
            minus[i * d + j] -= h;
            let up = self.value(0.0, &EmpiricalMeasure::new(plus, d)?)?;
            let um = self.value(0.0, &EmpiricalMeasure::new(minus, d)?)?;
            let fd = (up - um) / (2.0 * h);
            let scale = predicted.abs().max(fd.abs()).max(1e-12);
            worst = worst.max((predicted - fd).abs() / scale);
        }
        Ok(worst)
    }

    /// Internal finite-difference consistency of the supplied gradients
    /// and Hessians (fields and outer function) at random probes.
    pub fn derivative_consistency_error(&self, n_probes: usize, seed: u64) -> f64 {
        let mut rng = aux_rng(seed, 0xF1);
        let d = self.dim;
        let k = self.bases.len();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut g = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for _ in 0..n_probes {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for phi in &self.bases {
                phi.grad(&x, &mut g);
                phi.hess(&x, &mut hess);
                for j in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (phi.eval(&xp) - phi.eval(&xm)) / (2.0 * h);
                    let scale = g[j].abs().max(fd.abs()).max(1.0);
                    worst = worst.max((fd - g[j]).abs() / scale);
                    let mut gp = vec![0.0; d];
                    let mut gm = vec![0.0; d];
                    phi.grad(&xp, &mut gp);
                    phi.grad(&xm, &mut gm);
                    for a in 0..d {
                        let fd2 = (gp[a] - gm[a]) / (2.0 * h);
                        let scale = hess[a * d + j].abs().max(fd2.abs()).max(1.0);
                        worst = worst.max((fd2 - hess[a * d + j]).abs() / scale);
                    }
                }
            }
            let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut fg = vec![0.0; k];
            self.outer.grad(&v, &mut fg);
            for j in 0..k {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[j] += h;
                vm[j] -= h;
                let fd = (self.outer.eval(&vp) - self.outer.eval(&vm)) / (2.0 * h);
                let scale = fg[j].abs().max(fd.abs()).max(1.0);
                worst = worst.max((fd - fg[j]).abs() / scale);
            }
        }
        worst
    }
}
