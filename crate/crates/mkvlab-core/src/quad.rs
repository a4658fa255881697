//! Small adaptive quadrature toolbox used for mollifier moments and the
//! deterministic part of the envelope driver.

/// Adaptive Simpson integration of `f` on `[a, b]` to absolute tolerance
/// `tol`. The integrands here are smooth away from isolated endpoints
/// (bump kernels, `√s`), for which adaptive bisection is entirely
/// adequate.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    simpson_rec(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 52)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Surface area of the unit sphere S^{d-1} in ℝ^d: `2 π^{d/2} / Γ(d/2)`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    assert!(dim >= 1);
    2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma_half(dim)
}

/// Γ(d/2) for integer d ≥ 1 via the recursion Γ(x+1) = xΓ(x) with
/// Γ(1/2) = √π and Γ(1) = 1.
fn gamma_half(d: usize) -> f64 {
    let mut x = if d % 2 == 1 {
        std::f64::consts::PI.sqrt()
    } else {
        1.0
    };
    let mut k = if d % 2 == 1 { 1 } else { 2 };
    while k < d {
        x *= k as f64 / 2.0;
        k += 2;
    }
    x
}
