//! Product-integration solver for `y(z)^(m+1) = ∫₀^z K(z,s) y(s) ds` on `[0, 1]`.
//!
//! The power-law behaviour `y ~ z^((γ+1)/m)` is peeled off, `y = z^p v` with
//! `p = (γ+1)/m`, and the bounded unknown `v` is advanced by the explicit
//! recurrence
//!
//! ```text
//! v_n^(m+1) = z_n^-(m+1)p · Σ_{i<n} w_{n,i} v_i
//! ```
//!
//! Weights integrate the kernel exactly (to quadrature tolerance) against a
//! piecewise constant ([`Method::Rectangle`]) or piecewise linear
//! ([`Method::Trapezoid`]) reconstruction of `v`. The linear reconstruction is
//! built on two-step panels using only the first two nodes of each panel, so
//! `v_n` never enters its own quadrature.
//!
//! Internally every row is computed in scaled form, `ŵ_{n,i} = z_n^-(m+1)p w_{n,i}`,
//! which keeps the weights `O(1/n)` regardless of `m` and `γ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::spfun::{self, QuadConfig};

pub type KernelFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Weakly singular kernel with `K₋(z-s)^γ ≤ K(z,s) ≤ K₊(z-s)^γ`.
#[derive(Clone)]
pub struct KernelSpec {
    pub gamma: f64,
    pub k_minus: f64,
    pub k_plus: f64,
    eval: Arc<KernelFn>,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("gamma", &self.gamma)
            .field("k_minus", &self.k_minus)
            .field("k_plus", &self.k_plus)
            .finish_non_exhaustive()
    }
}

impl KernelSpec {
    pub fn new<F>(gamma: f64, k_minus: f64, k_plus: f64, eval: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_arc(gamma, k_minus, k_plus, Arc::new(eval))
    }

    pub fn from_arc(gamma: f64, k_minus: f64, k_plus: f64, eval: Arc<KernelFn>) -> Result<Self> {
        if !(gamma >= 0.0) || !(k_minus >= 0.0) || !(k_plus >= k_minus) || !k_plus.is_finite() {
            return Err(Error::Config(format!(
                "kernel constants must satisfy gamma >= 0, 0 <= k_minus <= k_plus (got {gamma}, {k_minus}, {k_plus})"
            )));
        }
        Ok(KernelSpec {
            gamma,
            k_minus,
            k_plus,
            eval,
        })
    }

    /// `K(z,s) = k (z-s)^γ`, the kernel with an exactly constant peeled solution.
    pub fn power(k: f64, gamma: f64) -> Result<Self> {
        Self::new(gamma, k, k, move |z, s| k * (z - s).max(0.0).powf(gamma))
    }

    #[inline]
    pub fn eval(&self, z: f64, s: f64) -> f64 {
        (self.eval)(z, s)
    }

    pub fn eval_fn(&self) -> Arc<KernelFn> {
        Arc::clone(&self.eval)
    }

    /// Checks the power-law sandwich on a `grid × grid` sample of the simplex
    /// and returns the worst relative violation (0 when it holds).
    pub fn sandwich_violation(&self, grid: usize) -> f64 {
        let mut worst = 0.0_f64;
        for i in 1..=grid {
            let z = i as f64 / grid as f64;
            for j in 0..i {
                let s = j as f64 / grid as f64;
                let k = self.eval(z, s);
                let base = (z - s).powf(self.gamma);
                let lo = self.k_minus * base;
                let hi = self.k_plus * base;
                if k < lo {
                    worst = worst.max((lo - k) / lo);
                }
                if k > hi {
                    worst = worst.max((k - hi) / hi);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct VolterraProblem {
    pub m: f64,
    pub kernel: KernelSpec,
}

impl VolterraProblem {
    pub fn new(m: f64, kernel: KernelSpec) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Config(format!("nonlinearity power m must be positive, got {m}")));
        }
        Ok(VolterraProblem { m, kernel })
    }

    /// Exponent `p = (γ+1)/m` of the peeled power law.
    pub fn peel(&self) -> f64 {
        (self.kernel.gamma + 1.0) / self.m
    }

    /// `β(γ+1, (γ+1)/m + 1)`, the integral of `(1-σ)^γ σ^p` over `[0,1]`.
    pub fn power_beta(&self) -> Result<f64> {
        spfun::beta_fn(self.kernel.gamma + 1.0, self.peel() + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rectangle,
    Trapezoid,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangle" | "rect" => Ok(Method::Rectangle),
            "trapezoid" | "trap" => Ok(Method::Trapezoid),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rectangle => "rectangle",
            Method::Trapezoid => "trapezoid",
        })
    }
}

/// Where the `v_0` integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartRule {
    /// At `h = LIMIT_STEP`, a stand-in for the `h → 0` limit.
    #[default]
    Limit,
    /// At the grid step itself; carries an `O(h)` error into the recurrence.
    FiniteStep,
}

pub const LIMIT_STEP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_steps: usize,
    pub method: Method,
    pub quad: QuadConfig,
    pub newton_tol: f64,
    #[serde(default)]
    pub start: StartRule,
    #[serde(default)]
    pub exec: Execution,
}

impl SolverConfig {
    pub fn new(n_steps: usize, method: Method) -> Self {
        SolverConfig {
            n_steps,
            method,
            quad: QuadConfig::default(),
            newton_tol: 1e-13,
            start: StartRule::default(),
            exec: Execution::default(),
        }
    }

    pub fn with_start(mut self, start: StartRule) -> Self {
        self.start = start;
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::Config(format!("n_steps must be at least 2, got {}", self.n_steps)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Config("newton_tol must be positive".into()));
        }
        self.quad.validate()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_steps as f64
    }
}

/// Nodal values of the peeled unknown on `z_n = n/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub n_steps: usize,
    pub gamma: f64,
    pub m: f64,
    pub v: Vec<f64>,
    pub y: Vec<f64>,
}

impl GridSolution {
    pub fn from_v(gamma: f64, m: f64, v: Vec<f64>) -> Self {
        let n_steps = v.len() - 1;
        let p = (gamma + 1.0) / m;
        let y = v
            .iter()
            .enumerate()
            .map(|(n, &vn)| if n == 0 { 0.0 } else { node(n, n_steps).powf(p) * vn })
            .collect();
        GridSolution {
            n_steps,
            gamma,
            m,
            v,
            y,
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    pub fn z(&self, n: usize) -> f64 {
        node(n, self.n_steps)
    }

    pub fn v_terminal(&self) -> f64 {
        self.v[self.n_steps]
    }

    pub fn y_terminal(&self) -> f64 {
        self.y[self.n_steps]
    }

    /// Piecewise linear interpolant of `y`, clamped to `[0, 1]`.
    pub fn y_at(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return self.y_terminal();
        }
        let t = z * self.n_steps as f64;
        let k = (t.floor() as usize).min(self.n_steps - 1);
        let frac = t - k as f64;
        self.y[k] * (1.0 - frac) + self.y[k + 1] * frac
    }
}

#[inline]
fn node(n: usize, n_steps: usize) -> f64 {
    n as f64 / n_steps as f64
}

/// `(K₊ β(γ+1, (γ+1)/m + 1))^(1/m)`, the exact solution for `K = K₊(z-s)^γ`.
pub fn constant_solution(k_plus: f64, gamma: f64, m: f64) -> Result<f64> {
    if !(k_plus > 0.0) || !(gamma >= 0.0) || !(m > 0.0) {
        return Err(Error::domain(
            "constant_solution",
            format!("k_plus = {k_plus}, gamma = {gamma}, m = {m}"),
        ));
    }
    let b = spfun::beta_fn(gamma + 1.0, (gamma + 1.0) / m + 1.0)?;
    Ok((k_plus * b).powf(1.0 / m))
}

/// Lower and upper nodal bounds `(K∓ (β ∓ ε))^(1/m)` with `ε = eps_frac·β`.
pub fn v_sandwich(problem: &VolterraProblem, eps_frac: f64) -> Result<(f64, f64)> {
    let b = problem.power_beta()?;
    let eps = eps_frac * b;
    let inv = 1.0 / problem.m;
    Ok((
        (problem.kernel.k_minus * (b - eps)).max(0.0).powf(inv),
        (problem.kernel.k_plus * (b + eps)).powf(inv),
    ))
}

/// `x^(1/(m+1))`, through logarithms for very large `m`.
fn root_m1(x: f64, m: f64) -> f64 {
    if m >= 500.0 {
        (x.ln() / (m + 1.0)).exp()
    } else {
        x.powf(1.0 / (m + 1.0))
    }
}

/// Moments of one unit cell `[z_j, z_{j+1}]` of row `n`, in scaled form:
/// `[∫ g, ∫ g·(s - z_j)/h]` with `g(s) = K(z_n, s) (s/z_n)^p / z_n^(γ+1)`.
fn cell_moments<const D: usize>(
    problem: &VolterraProblem,
    n: usize,
    j: usize,
    n_steps: usize,
    quad: &QuadConfig,
) -> Result<[f64; D]> {
    let h = 1.0 / n_steps as f64;
    let zn = node(n, n_steps);
    let zj = node(j, n_steps);
    let p = problem.peel();
    let scale = zn.powf(-(problem.kernel.gamma + 1.0));
    let kernel = &problem.kernel;
    spfun::integrate(
        |s| {
            let g = kernel.eval(zn, s) * (s / zn).powf(p) * scale;
            let mut out = [0.0; D];
            out[0] = g;
            if D > 1 {
                out[1] = g * (s - zj) / h;
            }
            out
        },
        zj,
        node(j + 1, n_steps),
        quad,
    )
    .map_err(|e| Error::Weight {
        n,
        i: j,
        source: Box::new(e),
    })
}

fn first_err<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

/// Scaled rectangle row: `ŵ_{n,i} = z_n^-(m+1)p ∫_{z_i}^{z_{i+1}} K(z_n,s) s^p ds`.
fn scaled_rectangle_row(problem: &VolterraProblem, n: usize, n_steps: usize, quad: &QuadConfig, exec: Execution) -> Result<Vec<f64>> {
    let cells = exec::map_range(exec, n, |j| cell_moments::<1>(problem, n, j, n_steps, quad).map(|m| m[0]));
    first_err(cells)
}

/// Adds the contribution of the two-step panel starting at node `base` to `w`.
///
/// The panel covers cells `base` and `base+1`; `v` is reconstructed linearly
/// from its values at `z_base` and `z_{base+1}` (extrapolating over the second cell).
fn add_panel(w: &mut [f64], moments: &[[f64; 2]], base: usize) {
    let [m0a, m1a] = moments[base];
    let [m0b, m1b] = moments[base + 1];
    // local coordinate t = (s - z_base)/h is t on the first cell, 1 + t on the second
    w[base] += (m0a - m1a) - m1b;
    w[base + 1] += m1a + m0b + m1b;
}

/// Scaled linear-reconstruction row for `n ≥ 1`.
///
/// Even `n`: panels `[z_{2i}, z_{2i+2}]`. Odd `n`: an initial single cell
/// `[0, z_1]` interpolated between `v_0` and `v_1`, then panels
/// `[z_{2i-1}, z_{2i+1}]`. For `n = 1` the row is the single initial cell and
/// references `v_1` itself; the recurrence only uses rows with `n ≥ 2`.
fn scaled_trapezoid_row(problem: &VolterraProblem, n: usize, n_steps: usize, quad: &QuadConfig, exec: Execution) -> Result<Vec<f64>> {
    let moments = first_err(exec::map_range(exec, n, |j| cell_moments::<2>(problem, n, j, n_steps, quad)))?;
    Ok(assemble_trapezoid(n, &moments))
}

fn assemble_trapezoid(n: usize, moments: &[[f64; 2]]) -> Vec<f64> {
    let mut w = vec![0.0; n.max(2)];
    if n % 2 == 0 {
        for i in 0..n / 2 {
            add_panel(&mut w, moments, 2 * i);
        }
    } else {
        let [m0, m1] = moments[0];
        w[0] += m0 - m1;
        w[1] += m1;
        for i in 1..=(n - 1) / 2 {
            add_panel(&mut w, moments, 2 * i - 1);
        }
    }
    w.truncate(if n == 1 { 2 } else { n });
    w
}

fn check_row(problem: &VolterraProblem, n: usize, n_steps: usize) -> Result<()> {
    let _ = problem;
    if n == 0 || n > n_steps {
        return Err(Error::Config(format!("row index {n} outside 1..={n_steps}")));
    }
    Ok(())
}

fn unscale(n: usize, n_steps: usize, problem: &VolterraProblem, w: Vec<f64>) -> Vec<f64> {
    let zn = node(n, n_steps);
    let factor = zn.powf(problem.kernel.gamma + 1.0 + problem.peel());
    w.into_iter().map(|x| x * factor).collect()
}

/// Rectangle-method weights of row `n`: `w_{n,i} = ∫_{z_i}^{z_{i+1}} K(z_n,s) s^p ds`.
pub fn weights_rectangle(n: usize, problem: &VolterraProblem, n_steps: usize, quad: &QuadConfig) -> Result<Vec<f64>> {
    check_row(problem, n, n_steps)?;
    let w = scaled_rectangle_row(problem, n, n_steps, quad, Execution::default())?;
    Ok(unscale(n, n_steps, problem, w))
}

/// Linear-reconstruction weights of row `n` (`n` entries; two for `n = 1`,
/// where the second multiplies `v_1` itself).
pub fn weights_trapezoid(n: usize, problem: &VolterraProblem, n_steps: usize, quad: &QuadConfig) -> Result<Vec<f64>> {
    check_row(problem, n, n_steps)?;
    let w = scaled_trapezoid_row(problem, n, n_steps, quad, Execution::default())?;
    Ok(unscale(n, n_steps, problem, w))
}

/// Lower-terminal rectangle weights `h K(z_n, z_i) z_i^p`, which do not
/// reproduce the constant solution. Kept as a reference for that failure.
pub fn weights_naive_rectangle(n: usize, problem: &VolterraProblem, n_steps: usize) -> Result<Vec<f64>> {
    check_row(problem, n, n_steps)?;
    let h = 1.0 / n_steps as f64;
    let zn = node(n, n_steps);
    let p = problem.peel();
    Ok((0..n)
        .map(|i| {
            let zi = node(i, n_steps);
            h * problem.kernel.eval(zn, zi) * zi.powf(p)
        })
        .collect())
}

/// Starting value `v_0 = (h^-γ ∫₀¹ K(h, hσ) σ^p dσ)^(1/m)` at the finite step `h`.
pub fn initial_v0(problem: &VolterraProblem, h: f64, quad: &QuadConfig) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain("initial_v0", format!("h = {h}")));
    }
    let p = problem.peel();
    let gamma = problem.kernel.gamma;
    let scale = h.powf(-gamma);
    let base = spfun::adaptive_quad(|sigma| scale * problem.kernel.eval(h, h * sigma) * sigma.powf(p), 0.0, 1.0, quad)?;
    if !base.is_finite() || base < 0.0 {
        return Err(Error::NonFinite(format!("v0 integral evaluated to {base}")));
    }
    if base == 0.0 {
        log::warn!("initial_v0: kernel integral vanishes, only the trivial solution is reachable");
        return Ok(0.0);
    }
    let v0 = base.powf(1.0 / problem.m);
    if !v0.is_finite() {
        return Err(Error::NonFinite(format!("v0 = {v0}")));
    }
    Ok(v0)
}

/// Second starting value for the linear reconstruction: the positive root of
/// `h^((m+1)p) v^(m+1) - b v - c v_0 = 0` with `b`, `c` the two hat-function
/// integrals over `[0, h]`. Solved in scaled form (divided by `h^((m+1)p)`).
pub fn initial_v1(problem: &VolterraProblem, h: f64, v0: f64, quad: &QuadConfig, newton_tol: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain("initial_v1", format!("h = {h}")));
    }
    if !(v0 > 0.0) {
        return Err(Error::TrivialCollapse { step: 1 });
    }
    let p = problem.peel();
    let scale = h.powf(-(problem.kernel.gamma + 1.0));
    let [m0, m1] = spfun::integrate(
        |s| {
            let g = problem.kernel.eval(h, s) * (s / h).powf(p) * scale;
            [g, g * s / h]
        },
        0.0,
        h,
        quad,
    )?;
    let b = m1;
    let c = (m0 - m1) * v0;
    solve_power_equation(b, c, problem.m, v0, newton_tol)
}

/// Positive root of `x^(m+1) = b x + c`, Newton from `seed` with a bisection fallback.
fn solve_power_equation(b: f64, c: f64, m: f64, seed: f64, tol: f64) -> Result<f64> {
    if !(b >= 0.0 && c >= 0.0) || !(b > 0.0 || c > 0.0) {
        return Err(Error::TrivialCollapse { step: 1 });
    }
    let scaled_tol = tol * (1.0 + c);
    match spfun::newton_root_power(1.0, b, c, m, seed, scaled_tol) {
        Ok(x) => Ok(x),
        Err(e) => {
            log::debug!("newton failed for v1 ({e}), falling back to bisection");
            spfun::bisect_root_power(1.0, b, c, m, seed / 10.0, seed * 10.0, scaled_tol)
        }
    }
}

/// Computes `v_n` from the prefix `history = [v_0, .., v_{n-1}]` alone.
pub fn next_value(problem: &VolterraProblem, cfg: &SolverConfig, n: usize, history: &[f64]) -> Result<f64> {
    if history.len() != n {
        return Err(Error::Config(format!("history must hold exactly {n} values, got {}", history.len())));
    }
    let min_row = match cfg.method {
        Method::Rectangle => 1,
        Method::Trapezoid => 2,
    };
    if n < min_row || n > cfg.n_steps {
        return Err(Error::Config(format!("step {n} is not produced by the recurrence")));
    }
    let w = match cfg.method {
        Method::Rectangle => scaled_rectangle_row(problem, n, cfg.n_steps, &cfg.quad, cfg.exec)?,
        Method::Trapezoid => scaled_trapezoid_row(problem, n, cfg.n_steps, &cfg.quad, cfg.exec)?,
    };
    let sum: f64 = w.iter().zip(history).map(|(wi, vi)| wi * vi).sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::TrivialCollapse { step: n });
    }
    Ok(root_m1(sum, problem.m))
}

pub fn solve(problem: &VolterraProblem, cfg: &SolverConfig) -> Result<GridSolution> {
    cfg.validate()?;
    let h = cfg.h();
    let v0_step = match cfg.start {
        StartRule::Limit => LIMIT_STEP.min(h),
        StartRule::FiniteStep => h,
    };
    let v0 = initial_v0(problem, v0_step, &cfg.quad)?;
    if !(v0 > 0.0) {
        return Err(Error::TrivialCollapse { step: 0 });
    }
    let mut v = Vec::with_capacity(cfg.n_steps + 1);
    v.push(v0);
    let first = match cfg.method {
        Method::Rectangle => 1,
        Method::Trapezoid => {
            v.push(initial_v1(problem, h, v0, &cfg.quad, cfg.newton_tol)?);
            2
        }
    };
    for n in first..=cfg.n_steps {
        let vn = next_value(problem, cfg, n, &v)?;
        v.push(vn);
    }
    Ok(GridSolution::from_v(problem.kernel.gamma, problem.m, v))
}
