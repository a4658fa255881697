//! Wasserstein-2 distances between equal-weight empirical measures.
//!
//! ```text
//! 𝒲₂(μ, ν)² = inf_{π ∈ Π(μ,ν)} ∫ |x − y|² π(dx, dy)
//! ```
//!
//! For matched atom counts the infimum is attained at a permutation
//! (Birkhoff), so the exact method solves the assignment problem on the
//! squared-distance matrix with a Kuhn–Munkres / shortest-augmenting-path
//! solver. For `n > EXACT_CAP` a log-domain Sinkhorn iteration provides an
//! entropic value bracketed by a rigorous primal/dual sandwich. In one
//! dimension the optimal matching is the monotone (sorted) one; the
//! sorting routine is kept separate and serves as an independent oracle
//! for the assignment solver.

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

/// Largest atom count accepted by the exact method.
pub const EXACT_CAP: usize = 512;

/// Method selector for [`wasserstein2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum W2Method {
    /// Assignment on the squared-distance matrix; requires equal atom
    /// counts `n = m ≤ EXACT_CAP`.
    Exact,
    /// Log-domain Sinkhorn with regularisation `reg` (`None` → default
    /// `10⁻² ×` mean squared distance).
    Entropic { reg: Option<f64> },
}

/// Squared Euclidean distance matrix, row-major `n × m`.
fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<f64> {
    let (n, m) = (mu.n(), nu.n());
    let mut c = vec![0.0; n * m];
    for i in 0..n {
        let x = mu.atom(i);
        for j in 0..m {
            let y = nu.atom(j);
            c[i * m + j] = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    c
}

/// 𝒲₂ between two empirical measures.
pub fn wasserstein2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, method: W2Method) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::dimension(format!(
            "measures live in ℝ^{} and ℝ^{}",
            mu.dim(),
            nu.dim()
        )));
    }
    match method {
        W2Method::Exact => {
            if mu.n() != nu.n() {
                return Err(Error::precondition(format!(
                    "exact method needs equal atom counts, got {} vs {}",
                    mu.n(),
                    nu.n()
                )));
            }
            if mu.n() > EXACT_CAP {
                return Err(Error::precondition(format!(
                    "exact method capped at {EXACT_CAP} atoms, got {}",
                    mu.n()
                )));
            }
            let cost = cost_matrix(mu, nu);
            let (_, total) = solve_assignment(&cost, mu.n())?;
            Ok((total / mu.n() as f64).max(0.0).sqrt())
        }
        W2Method::Entropic { reg } => Ok(entropic_w2(mu, nu, reg, 500)?.value),
    }
}

/// Exact 𝒲₂ in d = 1 by monotone (sorted) matching — provably optimal,
/// used as the independent oracle for the assignment solver.
pub fn wasserstein2_sorted_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    sorted_1d_p(mu, nu, 2.0)
}

/// Exact 𝒲₁ in d = 1 by sorted matching (used for empirical-measure bias
/// measurements).
pub fn wasserstein1_sorted_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    sorted_1d_p(mu, nu, 1.0)
}

/// Exact 𝒲₁ in d = 1 for *any* atom counts via the quantile coupling
/// ∫₀¹ |F⁻¹(u) − G⁻¹(u)| du (both inverse CDFs are piecewise constant).
pub fn wasserstein1_quantile_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::precondition("quantile matching requires d = 1"));
    }
    let mut xs: Vec<f64> = mu.points().to_vec();
    let mut ys: Vec<f64> = nu.points().to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut u = 0.0f64;
    let mut total = 0.0f64;
    while i < n && j < m {
        let bp_x = (i + 1) as f64 / n as f64;
        let bp_y = (j + 1) as f64 / m as f64;
        let bp = bp_x.min(bp_y);
        total += (xs[i] - ys[j]).abs() * (bp - u);
        u = bp;
        if bp_x <= bp {
            i += 1;
        }
        if bp_y <= bp {
            j += 1;
        }
    }
    Ok(total)
}

fn sorted_1d_p(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::precondition("sorted matching requires d = 1"));
    }
    if mu.n() != nu.n() {
        return Err(Error::precondition("sorted matching requires equal atom counts"));
    }
    let mut xs: Vec<f64> = mu.points().to_vec();
    let mut ys: Vec<f64> = nu.points().to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum();
    Ok((total / mu.n() as f64).powf(1.0 / p))
}

// ── Assignment solver ───────────────────────────────────────────────

/// Minimum-cost perfect matching on a square `n × n` cost matrix
/// (row-major). Returns `(perm, total)` with `perm[i]` the column matched
/// to row `i`. Shortest-augmenting-path Kuhn–Munkres, O(n³).
pub fn solve_assignment(cost: &[f64], n: usize) -> Result<(Vec<usize>, f64)> {
    if cost.len() != n * n {
        return Err(Error::dimension("assignment needs a square cost matrix"));
    }
    if n == 0 {
        return Err(Error::precondition("assignment needs at least one row"));
    }
    // 1-indexed potentials; p[j] = row matched to column j (0 = free).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[i * n + perm[i]]).sum();
    Ok((perm, total))
}

/// Atom count up to which optimal ties are broken lexicographically.
/// The refinement re-solves shrinking subproblems, which is O(n⁴) in the
/// worst case; beyond the cap the (deterministic) solver output is
/// returned unrefined.
pub const LEX_REFINE_CAP: usize = 128;

/// Lexicographically smallest optimal permutation. Fixes rows in order,
/// choosing the smallest column whose forced assignment keeps the optimal
/// total (within a relative tolerance on the cost scale).
pub fn lexicographic_optimal_assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    let (perm0, best) = solve_assignment(cost, n)?;
    if n > LEX_REFINE_CAP {
        return Ok(perm0);
    }
    let scale: f64 = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-9 * scale * n as f64;
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let rows: Vec<usize> = (i + 1..n).collect();
        let mut picked = None;
        for (slot, &j) in free_cols.iter().enumerate() {
            let cand = fixed_cost + cost[i * n + j];
            if cand - best > tol {
                continue;
            }
            // Optimal completion on the remaining rows × columns.
            let rest: f64 = if rows.is_empty() {
                0.0
            } else {
                let m = rows.len();
                let mut sub = Vec::with_capacity(m * m);
                for &r in &rows {
                    for (s, &c) in free_cols.iter().enumerate() {
                        if s != slot {
                            sub.push(cost[r * n + c]);
                        }
                    }
                }
                solve_assignment(&sub, m)?.1
            };
            if (cand + rest - best).abs() <= tol {
                picked = Some((slot, j));
                break;
            }
        }
        let (slot, j) =
            picked.ok_or_else(|| Error::evaluation("lexicographic refinement lost the optimum"))?;
        fixed_cost += cost[i * n + j];
        chosen.push(j);
        free_cols.remove(slot);
    }
    Ok(chosen)
}

/// A coupling between two empirical measures with the marginal structure
/// of Π(μ, ν): rows sum to 1/n, columns to 1/m.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub coupling: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub cost: f64,
}

impl TransportPlan {
    /// Largest marginal violation (for validation).
    pub fn marginal_error(&self) -> f64 {
        let mut err = 0.0f64;
        for i in 0..self.n {
            let row: f64 = self.coupling[i * self.m..(i + 1) * self.m].iter().sum();
            err = err.max((row - 1.0 / self.n as f64).abs());
        }
        for j in 0..self.m {
            let col: f64 = (0..self.n).map(|i| self.coupling[i * self.m + j]).sum();
            err = err.max((col - 1.0 / self.m as f64).abs());
        }
        err
    }
}

/// Optimal exact plan (equal atom counts), ties broken lexicographically.
pub fn transport_plan(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<TransportPlan> {
    if mu.dim() != nu.dim() {
        return Err(Error::dimension("transport plan needs matching dimensions"));
    }
    if mu.n() != nu.n() {
        return Err(Error::precondition("exact plan needs equal atom counts"));
    }
    let n = mu.n();
    let cost = cost_matrix(mu, nu);
    let perm = lexicographic_optimal_assignment(&cost, n)?;
    let mut coupling = vec![0.0; n * n];
    let mut total = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        coupling[i * n + j] = 1.0 / n as f64;
        total += cost[i * n + j];
    }
    Ok(TransportPlan {
        coupling,
        n,
        m: n,
        cost: total / n as f64,
    })
}

/// Feasible coupling from the entropic route (any atom counts): the
/// Sinkhorn plan rounded onto Π(μ, ν).
pub fn entropic_transport_plan(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    reg: Option<f64>,
    max_iter: usize,
) -> Result<TransportPlan> {
    if mu.dim() != nu.dim() {
        return Err(Error::dimension("transport plan needs matching dimensions"));
    }
    let (n, m) = (mu.n(), nu.n());
    let cost = cost_matrix(mu, nu);
    let mean_cost = cost.iter().sum::<f64>() / cost.len() as f64;
    let reg = reg.unwrap_or(1e-2 * mean_cost).max(1e-300);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    sinkhorn_iterate(&cost, n, m, reg, &mut f, &mut g, max_iter);
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    let mut plan = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            plan[i * m + j] = a * b * ((f[i] + g[j] - cost[i * m + j]) / reg).exp();
        }
    }
    round_to_coupling(&mut plan, n, m);
    let total: f64 = plan.iter().zip(&cost).map(|(p, c)| p * c).sum();
    Ok(TransportPlan {
        coupling: plan,
        n,
        m,
        cost: total,
    })
}

// ── Entropic (Sinkhorn) route ───────────────────────────────────────

/// Entropic 𝒲₂ result: `value` is the square root of the cost of a
/// *feasible* (rounded) plan, `lower` comes from a dual-feasible pair via
/// c-transform, so the exact distance lies in `[lower, value]` and
/// `gap = value − lower` is a rigorous bracket width.
#[derive(Debug, Clone)]
pub struct EntropicW2 {
    pub value: f64,
    pub lower: f64,
    pub gap: f64,
    pub iterations: usize,
    pub reg: f64,
}

/// Log-domain Sinkhorn with at most `max_iter` iterations.
pub fn entropic_w2(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    reg: Option<f64>,
    max_iter: usize,
) -> Result<EntropicW2> {
    if mu.dim() != nu.dim() {
        return Err(Error::dimension("entropic method needs matching dimensions"));
    }
    let cost = cost_matrix(mu, nu);
    let mean_cost = cost.iter().sum::<f64>() / cost.len() as f64;
    let reg = reg.unwrap_or(1e-2 * mean_cost).max(1e-300);
    let mut f = vec![0.0; mu.n()];
    let mut g = vec![0.0; nu.n()];
    let iterations = sinkhorn_iterate(&cost, mu.n(), nu.n(), reg, &mut f, &mut g, max_iter);
    finish_entropic(&cost, mu.n(), nu.n(), reg, &f, &g, iterations)
}

/// Sinkhorn along a decreasing regularisation schedule with warm-started
/// potentials; the last entry dominates the final accuracy.
pub fn entropic_w2_schedule(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    regs: &[f64],
    max_iter_per_stage: usize,
) -> Result<EntropicW2> {
    if regs.is_empty() {
        return Err(Error::precondition("schedule must be nonempty"));
    }
    let cost = cost_matrix(mu, nu);
    let mut f = vec![0.0; mu.n()];
    let mut g = vec![0.0; nu.n()];
    let mut total_iter = 0;
    for &reg in regs {
        total_iter += sinkhorn_iterate(&cost, mu.n(), nu.n(), reg, &mut f, &mut g, max_iter_per_stage);
    }
    finish_entropic(&cost, mu.n(), nu.n(), *regs.last().unwrap(), &f, &g, total_iter)
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = terms.collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn sinkhorn_iterate(
    cost: &[f64],
    n: usize,
    m: usize,
    reg: f64,
    f: &mut [f64],
    g: &mut [f64],
    max_iter: usize,
) -> usize {
    let ln_a = -(n as f64).ln();
    let ln_b = -(m as f64).ln();
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        for (i, fi) in f.iter_mut().enumerate() {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost[i * m + j]) / reg + ln_b));
            *fi = -reg * lse;
        }
        let mut marg_err = 0.0f64;
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[i * m + j]) / reg + ln_a));
            let new_g = -reg * lse;
            marg_err = marg_err.max((new_g - g[j]).abs());
            g[j] = new_g;
        }
        if marg_err < 1e-12 * reg.max(1.0) {
            break;
        }
    }
    iterations
}

fn finish_entropic(
    cost: &[f64],
    n: usize,
    m: usize,
    reg: f64,
    f: &[f64],
    g: &[f64],
    iterations: usize,
) -> Result<EntropicW2> {
    // Primal side: plan from the potentials, rounded onto Π(μ, ν).
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    let mut plan = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            plan[i * m + j] = a * b * ((f[i] + g[j] - cost[i * m + j]) / reg).exp();
        }
    }
    round_to_coupling(&mut plan, n, m);
    let primal: f64 = plan.iter().zip(cost).map(|(p, c)| p * c).sum();
    // Dual side: c-transform of g is dual-feasible for the unregularised
    // problem: f°(i) = min_j (c_ij − g_j).
    let mut dual = 0.0;
    for i in 0..n {
        let fi = (0..m)
            .map(|j| cost[i * m + j] - g[j])
            .fold(f64::INFINITY, f64::min);
        dual += a * fi;
    }
    dual += b * g.iter().sum::<f64>();
    let value = primal.max(0.0).sqrt();
    let lower = dual.max(0.0).sqrt();
    Ok(EntropicW2 {
        value,
        lower,
        gap: (value - lower).max(0.0),
        iterations,
        reg,
    })
}

/// Rounding of an almost-coupling onto the transport polytope
/// (scale rows, scale columns, then spread the residual mass as a
/// rank-one correction).
fn round_to_coupling(plan: &mut [f64], n: usize, m: usize) {
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    for i in 0..n {
        let row: f64 = plan[i * m..(i + 1) * m].iter().sum();
        if row > a {
            let s = a / row;
            for v in &mut plan[i * m..(i + 1) * m] {
                *v *= s;
            }
        }
    }
    let mut col_sums = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            col_sums[j] += plan[i * m + j];
        }
    }
    for j in 0..m {
        if col_sums[j] > b {
            let s = b / col_sums[j];
            for i in 0..n {
                plan[i * m + j] *= s;
            }
        }
    }
    let mut row_def = vec![0.0; n];
    let mut col_def = vec![0.0; m];
    let mut total_def = 0.0;
    for i in 0..n {
        let row: f64 = plan[i * m..(i + 1) * m].iter().sum();
        row_def[i] = (a - row).max(0.0);
        total_def += row_def[i];
    }
    let mut col_sums = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            col_sums[j] += plan[i * m + j];
        }
    }
    for j in 0..m {
        col_def[j] = (b - col_sums[j]).max(0.0);
    }
    if total_def > 0.0 {
        for i in 0..n {
            for j in 0..m {
                plan[i * m + j] += row_def[i] * col_def[j] / total_def;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_1d(xs.to_vec()).unwrap()
    }

    #[test]
    fn identical_measures_distance_zero() {
        let mu = m1(&[0.0, 2.0, -1.0]);
        assert_eq!(wasserstein2(&mu, &mu, W2Method::Exact).unwrap(), 0.0);
    }

    #[test]
    fn single_atom_distance() {
        let mu = m1(&[0.0]);
        let nu = m1(&[1.0]);
        assert!((wasserstein2(&mu, &nu, W2Method::Exact).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_atom_example() {
        // {0, 2} vs {1, 3}: sorted matching costs (1² + 1²)/2 → 𝒲₂ = 1.
        let mu = m1(&[0.0, 2.0]);
        let nu = m1(&[1.0, 3.0]);
        let d = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
        assert!((d - 1.0).abs() < 1e-12, "got {d}");
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let mu = m1(&[0.0, 1.0]);
        let nu = m1(&[0.0]);
        assert!(matches!(
            wasserstein2(&mu, &nu, W2Method::Exact),
            Err(Error::Precondition(_))
        ));
        let mu2 = EmpiricalMeasure::new(vec![0.0, 0.0], 2).unwrap();
        assert!(matches!(
            wasserstein2(&mu2, &nu, W2Method::Exact),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(7, 1);
        for trial in 0..50 {
            let n = rng.gen_range(1..=5);
            let d = rng.gen_range(1..=3);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for _ in 0..n * d {
                xs.push(rng.gen_range(-2.0..2.0));
                ys.push(rng.gen_range(-2.0..2.0));
            }
            let mu = EmpiricalMeasure::new(xs, d).unwrap();
            let nu = EmpiricalMeasure::new(ys, d).unwrap();
            let exact = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
            let brute = brute_force_w2(&mu, &nu);
            assert!(
                (exact - brute).abs() < 1e-10,
                "trial {trial}: exact {exact} vs brute {brute}"
            );
        }
    }

    fn brute_force_w2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
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

    #[test]
    fn agrees_with_sorting_in_1d() {
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(8, 2);
        for &n in &[2usize, 16, 64] {
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mu = m1(&xs);
            let nu = m1(&ys);
            let exact = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
            let sorted = wasserstein2_sorted_1d(&mu, &nu).unwrap();
            assert!((exact - sorted).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_invariance() {
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(9, 3);
        let xs: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mu = m1(&xs);
        let nu = m1(&ys);
        let base = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
        let shifted = wasserstein2(
            &mu.translate(&[1.37]).unwrap(),
            &nu.translate(&[1.37]).unwrap(),
            W2Method::Exact,
        )
        .unwrap();
        assert!((base - shifted).abs() < 1e-12);
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(10, 4);
        for _ in 0..100 {
            let n = 16;
            let gen = |rng: &mut rand_chacha::ChaCha8Rng| {
                m1(&(0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>())
            };
            let a = gen(&mut rng);
            let b = gen(&mut rng);
            let c = gen(&mut rng);
            let dab = wasserstein2(&a, &b, W2Method::Exact).unwrap();
            let dba = wasserstein2(&b, &a, W2Method::Exact).unwrap();
            let dbc = wasserstein2(&b, &c, W2Method::Exact).unwrap();
            let dac = wasserstein2(&a, &c, W2Method::Exact).unwrap();
            assert!((dab - dba).abs() < 1e-12, "symmetry");
            assert!(dac <= dab + dbc + 1e-9, "triangle: {dac} vs {} + {}", dab, dbc);
        }
    }

    #[test]
    fn lexicographic_tie_break() {
        // Two identical atoms: every permutation is optimal; the plan must
        // pick the identity.
        let mu = m1(&[1.0, 1.0, 0.0]);
        let nu = m1(&[1.0, 0.0, 1.0]);
        let plan = transport_plan(&mu, &nu).unwrap();
        // Row 0 (atom 1.0) must match column 0 (the first 1.0), row 1 the
        // next 1.0 at column 2, row 2 the 0.0 at column 1.
        let n = 3;
        assert!(plan.coupling[0] > 0.0);
        assert!(plan.coupling[n + 2] > 0.0);
        assert!(plan.coupling[2 * n + 1] > 0.0);
        assert!(plan.marginal_error() < 1e-15);
    }

    #[test]
    fn entropic_brackets_exact() {
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(11, 5);
        let n = 24;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu = m1(&xs);
        let nu = m1(&ys);
        let exact = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
        let ent = entropic_w2(&mu, &nu, None, 500).unwrap();
        assert!(
            exact <= ent.value + 1e-9 && exact >= ent.lower - 1e-9,
            "exact {exact} outside [{}, {}]",
            ent.lower,
            ent.value
        );
    }

    #[test]
    fn entropic_schedule_converges_to_exact() {
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(12, 6);
        for trial in 0..10 {
            let n = 32;
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mu = m1(&xs);
            let nu = m1(&ys);
            let exact = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
            let mean_cost = {
                let c = cost_matrix(&mu, &nu);
                c.iter().sum::<f64>() / c.len() as f64
            };
            let regs: Vec<f64> = (0..8).map(|k| mean_cost * 1e-2 * 0.5f64.powi(k)).collect();
            let ent = entropic_w2_schedule(&mu, &nu, &regs, 2000).unwrap();
            assert!(
                (ent.value - exact).abs() <= 1e-3,
                "trial {trial}: entropic {} vs exact {exact}",
                ent_value_str(&ent)
            );
        }
    }

    fn ent_value_str(e: &EntropicW2) -> String {
        format!("{:.6} (gap {:.2e})", e.value, e.gap)
    }

    #[test]
    fn quantile_w1_agrees_with_sorted_on_equal_counts() {
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(14, 8);
        let n = 20;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu = m1(&xs);
        let nu = m1(&ys);
        let a = wasserstein1_sorted_1d(&mu, &nu).unwrap();
        let b = wasserstein1_quantile_1d(&mu, &nu).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn quantile_w1_unequal_counts_simple_case() {
        // {0} vs {−1, 1}: F⁻¹ ≡ 0, G⁻¹ = −1 on [0, ½), 1 on [½, 1) → 1.
        let mu = m1(&[0.0]);
        let nu = m1(&[-1.0, 1.0]);
        let d = wasserstein1_quantile_1d(&mu, &nu).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropic_plan_has_coupling_marginals_for_unequal_counts() {
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(15, 9);
        let xs: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mu = m1(&xs);
        let nu = m1(&ys);
        let plan = entropic_transport_plan(&mu, &nu, None, 500).unwrap();
        assert_eq!((plan.n, plan.m), (12, 20));
        assert!(plan.marginal_error() < 1e-9, "marginal error {}", plan.marginal_error());
        assert!(plan.cost >= 0.0);
    }

    #[test]
    fn marginal_projection_contracts() {
        // Product-form atoms in ℝ²: dropping the last coordinate can only
        // decrease the distance (projections are 1-Lipschitz).
        use rand::Rng;
        let mut rng = crate::rng::aux_rng(13, 7);
        for _ in 0..20 {
            let n = 12;
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for _ in 0..n {
                xs.extend_from_slice(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
                ys.extend_from_slice(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            }
            let mu = EmpiricalMeasure::new(xs.clone(), 2).unwrap();
            let nu = EmpiricalMeasure::new(ys.clone(), 2).unwrap();
            let proj = |v: &[f64]| -> EmpiricalMeasure {
                m1(&v.chunks(2).map(|c| c[0]).collect::<Vec<_>>())
            };
            let full = wasserstein2(&mu, &nu, W2Method::Exact).unwrap();
            let marg = wasserstein2(&proj(&xs), &proj(&ys), W2Method::Exact).unwrap();
            assert!(marg <= full + 1e-9, "marginal {marg} vs full {full}");
        }
    }
}
