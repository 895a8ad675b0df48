//! Convergence-order estimation and the quantities behind the error bound
//! of the linear-reconstruction scheme.
//!
//! The error recurrence of the scheme has the form
//! `e_n ≤ (μ/n) Σ_{i<n} e_i + δ`, whose solution is bounded by `δ f_n` with
//! [`gronwall_f`]. For the diffusion kernels `μ = μ_m = 4K₊/((m+1)V₋)`, and
//! the scheme is guaranteed to converge with order `min{2, 3 - μ_m}`.

use serde::{Deserialize, Serialize};

use crate::diffusion::{self, BoundaryCondition, BOUNDS_GRID};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::spfun::{self, QuadConfig};
use crate::volterra::{self, Method, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub base_n: usize,
    pub value: f64,
    /// Terminal values at `N`, `2N`, `4N`.
    pub triple: [f64; 3],
}

/// `log₂(|v_2N - v_N| / |v_4N - v_2N|)` from three runs of `runner`.
pub fn aitken_order<F>(mut runner: F, base_n: usize) -> Result<OrderEstimate>
where
    F: FnMut(usize) -> Result<f64>,
{
    if base_n < 10 || base_n % 2 != 0 {
        return Err(Error::Config(format!("base_n must be even and at least 10, got {base_n}")));
    }
    let triple = [runner(base_n)?, runner(2 * base_n)?, runner(4 * base_n)?];
    order_from_triple(base_n, triple)
}

pub fn order_from_triple(base_n: usize, triple: [f64; 3]) -> Result<OrderEstimate> {
    let coarse = (triple[1] - triple[0]).abs();
    let fine = (triple[2] - triple[1]).abs();
    if fine == 0.0 || coarse == 0.0 {
        return Err(Error::Unstable(format!("successive differences {coarse:e}, {fine:e}")));
    }
    let value = (coarse / fine).log2();
    if !value.is_finite() {
        return Err(Error::Unstable(format!("non-finite order from {triple:?}")));
    }
    Ok(OrderEstimate { base_n, value, triple })
}

/// `f_n = Γ(n+μ)/n! · Σ_{k<n} k!/Γ(k+1+μ)`.
///
/// Evaluated as `Σ t_k` with `t_{n-1} = 1/n` and `t_{k-1} = t_k (k+μ)/k`,
/// which never forms the gamma functions themselves.
pub fn gronwall_f(n: usize, mu: f64) -> Result<f64> {
    if n == 0 || !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::domain("gronwall_f", format!("n = {n}, mu = {mu}")));
    }
    let mut t = 1.0 / n as f64;
    let mut sum = t;
    for k in (1..n).rev() {
        t *= (k as f64 + mu) / k as f64;
        sum += t;
    }
    if !sum.is_finite() {
        return Err(Error::NonFinite(format!("gronwall_f({n}, {mu}) overflowed")));
    }
    Ok(sum)
}

/// The defining recurrence `f_n = (1 + (μ-1)/n) f_{n-1} + 1/n`, `f_1 = 1`.
pub fn gronwall_recurrence(n: usize, mu: f64) -> Vec<f64> {
    let mut f = Vec::with_capacity(n);
    let mut prev = 1.0;
    f.push(prev);
    for k in 2..=n {
        let kf = k as f64;
        prev = (1.0 + (mu - 1.0) / kf) * prev + 1.0 / kf;
        f.push(prev);
    }
    f
}

/// `lim f_n / n^(μ-1) = 1/((μ-1)Γ(μ))` for `μ > 1`.
pub fn gronwall_growth_constant(mu: f64) -> Result<f64> {
    if !(mu > 1.0) {
        return Err(Error::domain("gronwall_growth_constant", format!("mu = {mu} must exceed 1")));
    }
    Ok(1.0 / ((mu - 1.0) * spfun::gamma_fn(mu)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuReport {
    pub alpha: f64,
    pub m: f64,
    pub k_plus: f64,
    pub v_minus: f64,
    pub mu_m: f64,
    pub guaranteed_order: f64,
}

impl MuReport {
    fn new(alpha: f64, m: f64, k_plus: f64, v_minus: f64) -> Self {
        let mu_m = 4.0 * k_plus / ((m + 1.0) * v_minus);
        MuReport {
            alpha,
            m,
            k_plus,
            v_minus,
            mu_m,
            guaranteed_order: guaranteed_order(mu_m),
        }
    }
}

/// `min{2, 3 - μ}`; nonpositive values mean no convergence guarantee.
pub fn guaranteed_order(mu: f64) -> f64 {
    2.0_f64.min(3.0 - mu)
}

/// `μ_m` with `V₋ = K₋(β(γ+1, (γ+1)/m + 1) - eps)` and empirical `K±`.
pub fn mu_report(alpha: f64, m: f64, bc: BoundaryCondition, eps: f64) -> Result<MuReport> {
    let p = diffusion::params_from_bc(alpha, m, bc)?;
    let beta = spfun::beta_fn(p.gamma + 1.0, (p.gamma + 1.0) / m + 1.0)?;
    if !(0.0..0.5 * beta).contains(&eps) {
        return Err(Error::domain("mu_report", format!("eps = {eps} outside [0, {})", 0.5 * beta)));
    }
    let (k_minus, k_plus) = diffusion::kernel_bounds_empirical(&p, BOUNDS_GRID);
    Ok(MuReport::new(alpha, m, k_plus, k_minus * (beta - eps)))
}

/// `μ_m` with `V₋ = min_n v_n^m` taken from a computed solution instead of
/// the kernel bound. The empirical `K₋` of the diffusion kernels is tiny
/// (the kernel is only linear in `1-u` at `z = 1`), which makes the
/// lemma-based value very pessimistic; this variant is a diagnostic.
pub fn mu_report_from_solution(alpha: f64, m: f64, bc: BoundaryCondition, n_steps: usize) -> Result<MuReport> {
    let p = diffusion::params_from_bc(alpha, m, bc)?;
    let problem = diffusion::build_problem(&p, &QuadConfig::default())?;
    let sol = volterra::solve(&problem, &SolverConfig::new(n_steps, Method::Trapezoid))?;
    let v_min = sol.v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MuReport::new(alpha, m, problem.kernel.k_plus, v_min.powf(m)))
}

pub const M0_BRACKET: (f64, f64) = (1.0, 10.0);

/// Zero of `m ↦ μ_m - 3` on `[1, 10]` with `eps = 0`, by bisection.
pub fn m0_of_alpha(alpha: f64, bc: BoundaryCondition) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.99) {
        return Err(Error::domain("m0_of_alpha", format!("alpha = {alpha} not in (0, 0.99]")));
    }
    let g = |m: f64| mu_report(alpha, m, bc, 0.0).map(|r| r.mu_m - 3.0);
    let (mut lo, mut hi) = M0_BRACKET;
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NoCriticalM { lo, hi });
    }
    let mut g_lo = g_lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid)?;
        if g_mid.abs() <= 1e-3 || hi - lo < 1e-12 {
            return Ok(mid);
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        last: 0.5 * (lo + hi),
        iterations: 200,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCell {
    pub alpha: f64,
    pub m: f64,
    pub estimate: std::result::Result<OrderEstimate, String>,
}

/// Aitken orders of the linear-reconstruction scheme on the diffusion
/// problems, one independent job per `(α, m)` cell. Rows follow `ms`.
pub fn order_table_diffusion(
    alphas: &[f64],
    ms: &[f64],
    bc: BoundaryCondition,
    base_n: usize,
    exec: Execution,
) -> Vec<Vec<OrderCell>> {
    let cells: Vec<(f64, f64)> = ms.iter().flat_map(|&m| alphas.iter().map(move |&a| (a, m))).collect();
    let results = exec::map_slice(exec, &cells, |&(alpha, m)| OrderCell {
        alpha,
        m,
        estimate: diffusion_order(alpha, m, bc, base_n, exec).map_err(|e| e.to_string()),
    });
    let mut rows = Vec::with_capacity(ms.len());
    let mut it = results.into_iter();
    for _ in ms {
        rows.push(it.by_ref().take(alphas.len()).collect());
    }
    rows
}

pub fn diffusion_order(alpha: f64, m: f64, bc: BoundaryCondition, base_n: usize, exec: Execution) -> Result<OrderEstimate> {
    let p = diffusion::params_from_bc(alpha, m, bc)?;
    let problem = diffusion::build_problem(&p, &QuadConfig::default())?;
    aitken_order(
        |n| {
            let cfg = SolverConfig::new(n, Method::Trapezoid).with_exec(exec);
            volterra::solve(&problem, &cfg).map(|s| s.v_terminal())
        },
        base_n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn aitken_on_synthetic_family() {
        for p in [1.0, 2.0] {
            let est = aitken_order(|n| Ok(3.0 + 0.7 * (n as f64).powf(-p)), 20).unwrap();
            assert!((est.value - p).abs() < 0.01);
            assert_eq!(est.base_n, 20);
        }
        assert!(matches!(aitken_order(|_| Ok(1.0), 20), Err(Error::Unstable(_))));
        assert!(aitken_order(|_| Ok(1.0), 11).is_err());
        assert!(aitken_order(|_| Ok(1.0), 8).is_err());
    }

    #[test]
    fn gronwall_examples() {
        for mu in [0.3, 1.0, 2.5] {
            assert_eq!(gronwall_f(1, mu).unwrap(), 1.0);
        }
        // μ = 2 gives f_n = n exactly
        assert_relative_eq!(gronwall_f(1000, 2.0).unwrap(), 1000.0, max_relative = 1e-13);
        assert_relative_eq!(gronwall_growth_constant(2.0).unwrap(), 1.0);
        // μ = 1 gives the harmonic numbers
        let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
        assert_relative_eq!(gronwall_f(10, 1.0).unwrap(), h10, max_relative = 1e-15);
        assert!(gronwall_f(0, 1.0).is_err());
        assert!(gronwall_f(3, 0.0).is_err());
    }

    #[test]
    fn gronwall_closed_form_solves_recurrence() {
        for mu in [0.3, 1.0, 1.7, 2.5] {
            let rec = gronwall_recurrence(2000, mu);
            for n in [1usize, 2, 7, 100, 2000] {
                assert_relative_eq!(gronwall_f(n, mu).unwrap(), rec[n - 1], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn guaranteed_order_caps_at_two() {
        assert_eq!(guaranteed_order(0.5), 2.0);
        assert_eq!(guaranteed_order(1.0), 2.0);
        assert_eq!(guaranteed_order(2.5), 0.5);
    }

    #[test]
    fn mu_decreases_with_m() {
        let mus: Vec<f64> = [2.0, 4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&m| mu_report(0.5, m, BoundaryCondition::Dirichlet, 0.0).unwrap().mu_m)
            .collect();
        assert!(mus.windows(2).all(|w| w[1] < w[0]), "{mus:?}");
        let r = mu_report(0.5, 2.0, BoundaryCondition::Dirichlet, 0.0).unwrap();
        assert_relative_eq!(r.mu_m, 4.0 * r.k_plus / (3.0 * r.v_minus), max_relative = 1e-14);
        assert!(mu_report(0.5, 2.0, BoundaryCondition::Dirichlet, 1.0).is_err());
    }

    #[test]
    fn m0_rejects_bad_alpha() {
        assert!(m0_of_alpha(1.0, BoundaryCondition::Dirichlet).is_err());
        assert!(m0_of_alpha(0.0, BoundaryCondition::Dirichlet).is_err());
    }
}
