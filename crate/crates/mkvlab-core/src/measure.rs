//! Empirical probability measures on ℝ^d with uniform atom weights — the
//! computational stand-in for the Wasserstein space P₂(ℝ^d).
//!
//! The paper-level objects carried here are the pairings
//!
//! ```text
//! μ(φ)    = ∫ φ(x) μ(dx)          →  (1/n) Σ_i φ(x_i),
//! μ⊗μ(ψ)  = ∫∫ ψ(x, x') μ μ       →  (1/n²) Σ_{i,j} ψ(x_i, x_j),
//! ```
//!
//! moments, translations and the Gaussian convolution
//! `μ ∗ N(mean, var·I)` used by the aggregated value function.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::noise::{read_matrix_binary, write_matrix_binary};
use crate::rng::aux_rng;

/// A uniform-weight point cloud in ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<f64>,
    n: usize,
    d: usize,
}

impl EmpiricalMeasure {
    /// Build from row-major `n × d` coordinates.
    pub fn new(points: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("measure dimension must be positive"));
        }
        if points.is_empty() || points.len() % d != 0 {
            return Err(Error::config(format!(
                "point buffer of length {} is not a nonempty multiple of d = {d}",
                points.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("all atom coordinates must be finite"));
        }
        let n = points.len() / d;
        Ok(EmpiricalMeasure { points, n, d })
    }

    /// One-dimensional cloud from a list of scalars.
    pub fn from_1d(xs: impl Into<Vec<f64>>) -> Result<Self> {
        EmpiricalMeasure::new(xs.into(), 1)
    }

    /// A single atom at `x`.
    pub fn dirac(x: &[f64]) -> Result<Self> {
        EmpiricalMeasure::new(x.to_vec(), x.len())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Recover the coordinate buffer (hot loops rebuild measures from a
    /// scratch buffer without reallocating).
    pub fn into_points(self) -> Vec<f64> {
        self.points
    }

    pub fn iter_atoms(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.d)
    }

    /// Pairing μ(φ) = (1/n) Σ φ(x_i). Non-finite values of φ are an
    /// evaluation error.
    pub fn pair<F: Fn(&[f64]) -> f64>(&self, phi: F) -> Result<f64> {
        let mut acc = 0.0;
        for x in self.iter_atoms() {
            let v = phi(x);
            if !v.is_finite() {
                return Err(Error::evaluation(format!("φ({x:?}) is not finite")));
            }
            acc += v;
        }
        Ok(acc / self.n as f64)
    }

    /// Double pairing μ⊗μ(ψ) = (1/n²) Σ_{i,j} ψ(x_i, x_j), diagonal
    /// included. Terms are accumulated by symmetric pairs, so the value of
    /// an antisymmetric ψ cancels exactly rather than up to rounding.
    pub fn pair2<F: Fn(&[f64], &[f64]) -> f64>(&self, psi: F) -> Result<f64> {
        let check = |x: &[f64], y: &[f64]| -> Result<f64> {
            let v = psi(x, y);
            if !v.is_finite() {
                return Err(Error::evaluation(format!("ψ({x:?}, {y:?}) is not finite")));
            }
            Ok(v)
        };
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += check(self.atom(i), self.atom(i))?;
            for j in i + 1..self.n {
                acc += check(self.atom(i), self.atom(j))? + check(self.atom(j), self.atom(i))?;
            }
        }
        Ok(acc / (self.n * self.n) as f64)
    }

    /// Coordinate-wise mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for x in self.iter_atoms() {
            for (mj, xj) in m.iter_mut().zip(x) {
                *mj += xj;
            }
        }
        for mj in &mut m {
            *mj /= self.n as f64;
        }
        m
    }

    /// Raw p-th absolute moment (1/n) Σ |x_i|^p of the Euclidean norm.
    pub fn moment(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for x in self.iter_atoms() {
            let norm2: f64 = x.iter().map(|v| v * v).sum();
            acc += norm2.powf(p / 2.0);
        }
        acc / self.n as f64
    }

    /// Second moment (1/n) Σ |x_i|².
    pub fn second_moment(&self) -> f64 {
        self.moment(2.0)
    }

    /// Cloud translated by `shift`.
    pub fn translate(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.d {
            return Err(Error::dimension("translation vector has wrong dimension"));
        }
        let mut points = self.points.clone();
        for x in points.chunks_exact_mut(self.d) {
            for (xj, s) in x.iter_mut().zip(shift) {
                *xj += s;
            }
        }
        EmpiricalMeasure::new(points, self.d)
    }

    /// Atoms sorted lexicographically — the canonical representative of
    /// the underlying multiset. Estimators that should depend on the
    /// measure only (not the atom order) sort first.
    pub fn canonicalized(&self) -> Self {
        let mut rows: Vec<&[f64]> = self.iter_atoms().collect();
        rows.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        let mut points = Vec::with_capacity(self.points.len());
        for r in rows {
            points.extend_from_slice(r);
        }
        EmpiricalMeasure {
            points,
            n: self.n,
            d: self.d,
        }
    }

    /// Gaussian convolution by resampling:
    /// atom k of the output is `x_{I_k} + mean + √var · Z_k` with
    /// `Z_k ~ N(0, I)`. When `n_out == n` the resampling order is the
    /// identity, so `var = 0` reproduces the translated cloud exactly.
    pub fn convolve_gaussian(
        &self,
        mean: &[f64],
        var: f64,
        n_out: usize,
        seed: u64,
    ) -> Result<Self> {
        if mean.len() != self.d {
            return Err(Error::dimension("convolution mean has wrong dimension"));
        }
        if !(var >= 0.0) {
            return Err(Error::precondition("convolution variance must be ≥ 0"));
        }
        if n_out == 0 {
            return Err(Error::precondition("n_out must be positive"));
        }
        let mut rng = aux_rng(seed, 0xC0);
        let sd = var.sqrt();
        let mut points = Vec::with_capacity(n_out * self.d);
        for k in 0..n_out {
            let i = if n_out == self.n {
                k
            } else {
                rng.gen_range(0..self.n)
            };
            let x = self.atom(i);
            for j in 0..self.d {
                let z: f64 = if sd > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                points.push(x[j] + mean[j] + sd * z);
            }
        }
        EmpiricalMeasure::new(points, self.d)
    }

    /// Draw `k` atoms uniformly with replacement (subsampling bias probes).
    pub fn subsample(&self, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::precondition("subsample size must be positive"));
        }
        let mut rng = aux_rng(seed, 0xC1);
        let mut points = Vec::with_capacity(k * self.d);
        for _ in 0..k {
            let i = rng.gen_range(0..self.n);
            points.extend_from_slice(self.atom(i));
        }
        EmpiricalMeasure::new(points, self.d)
    }

    /// CSV dump: one atom per row, plain decimal columns.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        for x in self.iter_atoms() {
            let row: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: &mut R, d: usize) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let mut points = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| Error::config(format!("bad CSV float {field:?}: {e}")))?;
                points.push(v);
            }
        }
        EmpiricalMeasure::new(points, d)
    }

    /// Binary dump in the shared matrix layout (header `n, d, 0`).
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        write_matrix_binary(out, self.n as u64, self.d as u64, 0, &self.points)
    }

    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let (rows, cols, _seed, data) = read_matrix_binary(input)?;
        let _ = rows;
        EmpiricalMeasure::new(data, cols as usize)
    }
}

/// Per-step summary passed to coefficients alongside the full cloud.
/// Coefficients in the zoo read features only; custom code may read the
/// atoms.
#[derive(Debug, Clone, Copy)]
pub struct MeasureView<'a> {
    pub measure: &'a EmpiricalMeasure,
    pub mean: &'a [f64],
    pub second_moment: f64,
}

impl<'a> MeasureView<'a> {
    pub fn mean_1d(&self) -> f64 {
        self.mean[0]
    }
}

/// Owned companion of [`MeasureView`]: precomputes the features once.
#[derive(Debug, Clone)]
pub struct MeasureSummary {
    pub mean: Vec<f64>,
    pub second_moment: f64,
}

impl MeasureSummary {
    pub fn of(mu: &EmpiricalMeasure) -> Self {
        MeasureSummary {
            mean: mu.mean(),
            second_moment: mu.second_moment(),
        }
    }

    pub fn view<'a>(&'a self, mu: &'a EmpiricalMeasure) -> MeasureView<'a> {
        MeasureView {
            measure: mu,
            mean: &self.mean,
            second_moment: self.second_moment,
        }
    }
}
