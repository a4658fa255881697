//! The scalar backward envelope that dominates every approximation error
//! in the uniqueness pipeline.
//!
//! With residual processes `f^ε, b^ε` (time paths), terminal residual
//! `g^ε`, Lipschitz constant K and gradient constant C_K, the envelope
//! solves
//!
//! ```text
//! Y(t) = g^ε + K·(2√(2T)/√π)(ε⁰+ε¹)
//!        + ∫_t^T [ f^ε_s + C_K b^ε_s + 2K(1+C_K)·(2√(2s)/√π)(ε⁰+ε¹) ] ds,
//! ```
//!
//! with martingale part Z ≡ 0 when the residuals are deterministic (the
//! only case carried here — zoo models have vanishing residuals). The
//! residual paths are integrated by the trapezoid rule on their grid; the
//! smooth `√s` driver term is integrated by adaptive quadrature so the
//! closed-form comparison is a genuine two-route check.

use crate::error::{Error, Result};
use crate::noise::TimeGrid;
use crate::quad::integrate;

/// Deterministic residual processes on a grid.
#[derive(Debug, Clone)]
pub struct ResidualPaths {
    /// f^ε at each grid point.
    pub f_eps: Vec<f64>,
    /// b^ε at each grid point.
    pub b_eps: Vec<f64>,
    /// Terminal residual g^ε.
    pub g_eps: f64,
}

impl ResidualPaths {
    pub fn zero(grid: &TimeGrid) -> Self {
        ResidualPaths {
            f_eps: vec![0.0; grid.n_points()],
            b_eps: vec![0.0; grid.n_points()],
            g_eps: 0.0,
        }
    }

    /// L¹-style budget `g^ε + ∫f^ε + ∫b^ε` (trapezoid).
    pub fn budget(&self, grid: &TimeGrid) -> f64 {
        let dt = grid.dt();
        let trap = |v: &[f64]| -> f64 {
            let mut acc = 0.0;
            for k in 0..v.len() - 1 {
                acc += 0.5 * (v[k] + v[k + 1]) * dt;
            }
            acc
        };
        self.g_eps + trap(&self.f_eps) + trap(&self.b_eps)
    }
}

/// Envelope path with its inputs.
#[derive(Debug, Clone)]
pub struct BsdePath {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    /// The martingale integrand vanishes for deterministic residuals.
    pub z_is_zero: bool,
    pub eps: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub k_lip: f64,
    pub c_k: f64,
}

impl BsdePath {
    pub fn y_at_start(&self) -> f64 {
        self.y[0]
    }

    pub fn sup_abs(&self) -> f64 {
        self.y.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

const SQRT_PI: f64 = 1.772453850905516;

/// Solve the envelope backward on `grid`. `eps` is the recorded residual
/// budget (the residual paths themselves drive the integral); all inputs
/// must be nonnegative.
pub fn bsde_envelope(
    eps: f64,
    eps0: f64,
    eps1: f64,
    k_lip: f64,
    c_k: f64,
    grid: &TimeGrid,
    residuals: &ResidualPaths,
) -> Result<BsdePath> {
    for (name, v) in [
        ("eps", eps),
        ("eps0", eps0),
        ("eps1", eps1),
        ("K", k_lip),
        ("C_K", c_k),
    ] {
        if !(v >= 0.0) {
            return Err(Error::precondition(format!("{name} must be ≥ 0, got {v}")));
        }
    }
    if residuals.f_eps.len() != grid.n_points() || residuals.b_eps.len() != grid.n_points() {
        return Err(Error::dimension("residual paths must live on the grid"));
    }
    if residuals.g_eps < 0.0
        || residuals.f_eps.iter().any(|v| *v < 0.0)
        || residuals.b_eps.iter().any(|v| *v < 0.0)
    {
        return Err(Error::precondition("residual processes must be nonnegative"));
    }
    let t_end = grid.t_end();
    let c_reg = eps0 + eps1;
    let terminal = residuals.g_eps + k_lip * 2.0 * (2.0 * t_end).sqrt() / SQRT_PI * c_reg;
    // Smooth driver coefficient of √s.
    let c_smooth = 2.0 * k_lip * (1.0 + c_k) * 2.0 * std::f64::consts::SQRT_2 / SQRT_PI * c_reg;
    let n = grid.n_points();
    let dt = grid.dt();
    let mut y = vec![0.0; n];
    y[n - 1] = terminal;
    for k in (0..n - 1).rev() {
        let a = grid.point(k);
        let b = grid.point(k + 1);
        let resid_cell = 0.5
            * dt
            * ((residuals.f_eps[k] + c_k * residuals.b_eps[k])
                + (residuals.f_eps[k + 1] + c_k * residuals.b_eps[k + 1]));
        let smooth_cell = if c_smooth > 0.0 {
            c_smooth * integrate(&|s: f64| s.max(0.0).sqrt(), a, b, 1e-12)
        } else {
            0.0
        };
        y[k] = y[k + 1] + resid_cell + smooth_cell;
    }
    Ok(BsdePath {
        times: (0..n).map(|k| grid.point(k)).collect(),
        y,
        z_is_zero: true,
        eps,
        eps0,
        eps1,
        k_lip,
        c_k,
    })
}

/// The constant C̃ with `sup_t |Y(t)| ≤ C̃ (ε + ε⁰ + ε¹)` whenever the
/// residual budget `g^ε + ∫f^ε + ∫b^ε` is at most ε:
///
/// ```text
/// C̃ = max{ max(1, C_K),  K·2√(2T)/√π + (8√2 / 3√π)·K(1+C_K)·T^{3/2} }.
/// ```
pub fn envelope_sup_coefficient(k_lip: f64, c_k: f64, t_end: f64) -> f64 {
    let reg_coef = k_lip * 2.0 * (2.0 * t_end).sqrt() / SQRT_PI
        + 8.0 * std::f64::consts::SQRT_2 / (3.0 * SQRT_PI)
            * k_lip
            * (1.0 + c_k)
            * t_end.powf(1.5);
    c_k.max(1.0).max(reg_coef)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(0.0, 1.0, 64).unwrap()
    }

    #[test]
    fn zero_inputs_give_zero_path() {
        let g = grid();
        let path = bsde_envelope(0.0, 0.0, 0.0, 1.0, 2.0, &g, &ResidualPaths::zero(&g)).unwrap();
        assert!(path.y.iter().all(|v| *v == 0.0));
        assert!(path.z_is_zero);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        // Zero residuals: Y(t) = K(2√(2T)/√π)c + 2K(1+C_K)c(2√2/√π)(2/3)(T^{3/2} − t^{3/2}).
        let g = grid();
        let (k, ck, e0, e1) = (1.0, 2.5, 0.15, 0.05);
        let c = e0 + e1;
        let path = bsde_envelope(0.0, e0, e1, k, ck, &g, &ResidualPaths::zero(&g)).unwrap();
        let t_end = g.t_end();
        for (idx, &t) in path.times.iter().enumerate() {
            let closed = k * 2.0 * (2.0 * t_end).sqrt() / SQRT_PI * c
                + 2.0 * k * (1.0 + ck) * c * 2.0 * std::f64::consts::SQRT_2 / SQRT_PI
                    * (2.0 / 3.0)
                    * (t_end.powf(1.5) - t.powf(1.5));
            assert!(
                (path.y[idx] - closed).abs() < 1e-8,
                "t = {t}: {} vs {closed}",
                path.y[idx]
            );
        }
    }

    #[test]
    fn path_decreasing_for_nonnegative_driver() {
        let g = grid();
        let mut res = ResidualPaths::zero(&g);
        res.f_eps.iter_mut().for_each(|v| *v = 0.2);
        let path = bsde_envelope(0.3, 0.1, 0.1, 1.0, 1.5, &g, &res).unwrap();
        for w in path.y.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn sup_bound_holds_with_closed_form_constant() {
        let g = grid();
        let (k, ck) = (1.0, 3.0);
        for (e, e0, e1, f_level) in [
            (0.0, 0.2, 0.1, 0.0),
            (0.25, 0.05, 0.0, 0.2),
            (0.5, 0.0, 0.0, 0.4),
        ] {
            let mut res = ResidualPaths::zero(&g);
            res.f_eps.iter_mut().for_each(|v| *v = f_level);
            res.g_eps = (e - res.budget(&g)).max(0.0);
            let budget = res.budget(&g);
            assert!(budget <= e + 1e-12, "constructed budget exceeds ε");
            let path = bsde_envelope(e, e0, e1, k, ck, &g, &res).unwrap();
            let c_tilde = envelope_sup_coefficient(k, ck, g.t_end());
            assert!(
                path.sup_abs() <= c_tilde * (e + e0 + e1) + 1e-12,
                "sup {} vs C̃(ε+ε⁰+ε¹) = {}",
                path.sup_abs(),
                c_tilde * (e + e0 + e1)
            );
        }
    }

    #[test]
    fn rejects_negative_inputs() {
        let g = grid();
        let r = ResidualPaths::zero(&g);
        assert!(bsde_envelope(-0.1, 0.0, 0.0, 1.0, 1.0, &g, &r).is_err());
        assert!(bsde_envelope(0.0, -0.1, 0.0, 1.0, 1.0, &g, &r).is_err());
        let mut bad = ResidualPaths::zero(&g);
        bad.f_eps[3] = -1.0;
        assert!(bsde_envelope(0.0, 0.0, 0.0, 1.0, 1.0, &g, &bad).is_err());
    }
}
