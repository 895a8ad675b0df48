//! θ-weighted finite differences for `D_t^α u = (u^m u_x)_x` on `[0, x_max]`
//! with zero initial data, used to cross-check the self-similar solutions and
//! as the baseline in the cost comparison.
//!
//! The Caputo derivative uses the L1 discretization
//!
//! ```text
//! Γ(2-α) Δt^α D^α u(t_{i+1}) ≈ u^{i+1} + Σ_{k=1}^{i} a_{k,i} u^k - b_i u^0
//! a_{k,i} = (i-k+2)^(1-α) - 2(i-k+1)^(1-α) + (i-k)^(1-α),   b_i = (i+1)^(1-α) - i^(1-α)
//! ```
//!
//! and the flux is `D_{j+1/2}(u_{j+1} - u_j)/Δx` with a diffusivity linearized
//! by one-step extrapolation of `u^m`. `θ` weights the new time level, so
//! `θ = 1` is fully implicit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffusion::BoundaryCondition;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::spfun;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub theta: f64,
    pub dt: f64,
    pub dx: f64,
    pub t_final: f64,
    pub x_max: f64,
    pub zero_threshold: f64,
    #[serde(default)]
    pub exec: Execution,
}

impl FdConfig {
    pub fn new(dt: f64, dx: f64, t_final: f64, x_max: f64) -> Self {
        FdConfig {
            theta: 1.0,
            dt,
            dx,
            t_final,
            x_max,
            zero_threshold: 1e-10,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.theta)
            && self.dt > 0.0
            && self.dx > 0.0
            && self.t_final >= self.dt
            && self.x_max >= 4.0 * self.dx
            && self.zero_threshold >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid finite-difference configuration {self:?}")));
        }
        Ok(())
    }

    pub fn n_time(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn n_space(&self) -> usize {
        (self.x_max / self.dx).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdProblem {
    pub alpha: f64,
    pub m: f64,
    pub bc: BoundaryCondition,
}

impl FdProblem {
    pub fn new(alpha: f64, m: f64, bc: BoundaryCondition) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain("FdProblem", format!("alpha = {alpha} not in (0, 1]")));
        }
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::domain("FdProblem", format!("m = {m} must be positive")));
        }
        Ok(FdProblem { alpha, m, bc })
    }
}

/// Time levels `u^i_j`, `x_j = j Δx`, `t_i = i Δt`. Row `i` holds `J + 1` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdField {
    pub dt: f64,
    pub dx: f64,
    pub rows: Vec<Vec<f64>>,
    /// Floating-point operations spent in the history sums and solves.
    pub flops: u64,
}

impl FdField {
    pub fn zeros(dt: f64, dx: f64, n_space: usize) -> Self {
        FdField {
            dt,
            dx,
            rows: vec![vec![0.0; n_space + 1]],
            flops: 0,
        }
    }

    pub fn levels(&self) -> usize {
        self.rows.len()
    }

    pub fn last(&self) -> &[f64] {
        &self.rows[self.rows.len() - 1]
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

/// `a_{k,i}` for `k = 1..=i`.
pub fn l1_weights(i: usize, alpha: f64) -> Result<Vec<f64>> {
    if i == 0 || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("l1_weights", format!("i = {i}, alpha = {alpha}")));
    }
    let pw = |n: usize| l1_power(n, alpha);
    Ok((1..=i)
        .map(|k| {
            let d = i - k;
            pw(d + 2) - 2.0 * pw(d + 1) + pw(d)
        })
        .collect())
}

/// `b_i = (i+1)^(1-α) - i^(1-α)`, the weight of the initial level.
pub fn l1_initial_weight(i: usize, alpha: f64) -> f64 {
    l1_power(i + 1, alpha) - l1_power(i, alpha)
}

// n^(1-α) with 0^0 = 0, so that α = 1 gives backward Euler
fn l1_power(n: usize, alpha: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64).powf(1.0 - alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// `w^m + m w^(m-1) (w - w_prev)`, clamped at zero.
fn extrapolated_power(w: f64, w_prev: f64, m: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    (w.powf(m) + m * w.powf(m - 1.0) * (w - w_prev)).max(0.0)
}

/// Diffusivity at `x_{j±1/2}`: the mean of the extrapolated `u^m` at node `j`
/// and at the half node, where half-node values are arithmetic means.
/// At `i = 0` there is no previous level and no extrapolation.
pub fn linearized_diffusivity(field: &FdField, i: usize, j: usize, m: f64, side: Side) -> f64 {
    let cur = &field.rows[i];
    let prev = if i == 0 { cur } else { &field.rows[i - 1] };
    let nb = match side {
        Side::Left => j - 1,
        Side::Right => j + 1,
    };
    let node = extrapolated_power(cur[j], prev[j], m);
    let half = extrapolated_power(0.5 * (cur[j] + cur[nb]), 0.5 * (prev[j] + prev[nb]), m);
    0.5 * (node + half)
}

/// Face value shared by both neighbours, so the flux form stays conservative.
fn face_diffusivity(field: &FdField, i: usize, j: usize, m: f64) -> f64 {
    0.5 * (linearized_diffusivity(field, i, j, m, Side::Right) + linearized_diffusivity(field, i, j + 1, m, Side::Left))
}

/// Face value at `x_{j+1/2}` from a single level, no extrapolation.
fn level_face(row: &[f64], j: usize, m: f64) -> f64 {
    let p = |w: f64| if w > 0.0 { w.powf(m) } else { 0.0 };
    0.25 * (p(row[j]) + 2.0 * p(0.5 * (row[j] + row[j + 1])) + p(row[j + 1]))
}

/// Thomas algorithm for `lower[k] x[k-1] + diag[k] x[k] + upper[k] x[k+1] = rhs[k]`.
pub(crate) fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], row_offset: usize) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    // pivots this small relative to their row carry no significant digits
    let degenerate = |pivot: f64, k: usize| !pivot.is_finite() || pivot.abs() <= 1e-14 * (diag[k].abs() + lower[k].abs() + upper[k].abs());
    let mut pivot = diag[0];
    if degenerate(pivot, 0) {
        return Err(Error::TridiagonalBreakdown { row: row_offset, pivot });
    }
    c[0] = upper[0] / pivot;
    rhs[0] /= pivot;
    for k in 1..n {
        pivot = diag[k] - lower[k] * c[k - 1];
        if degenerate(pivot, k) {
            return Err(Error::TridiagonalBreakdown { row: row_offset + k, pivot });
        }
        c[k] = upper[k] / pivot;
        rhs[k] = (rhs[k] - lower[k] * rhs[k - 1]) / pivot;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= c[k] * rhs[k + 1];
    }
    Ok(())
}

const HISTORY_CHUNK: usize = 256;

/// `Σ_{k=1}^{i} a_{k,i} u^k_j` for every `j`, accumulated level by level.
fn history_sum(field: &FdField, weights: &[f64], exec: Execution) -> Vec<f64> {
    let width = field.rows[0].len();
    let mut hist = vec![0.0; width];
    exec::for_each_chunk_mut(exec, &mut hist, HISTORY_CHUNK, |off, out| {
        for (k, a) in weights.iter().enumerate() {
            let row = &field.rows[k + 1][off..off + out.len()];
            for (h, u) in out.iter_mut().zip(row) {
                *h += a * u;
            }
        }
    });
    hist
}

/// Initial level: zero, except the Dirichlet boundary value.
pub fn initial_field(problem: &FdProblem, cfg: &FdConfig) -> FdField {
    let mut field = FdField::zeros(cfg.dt, cfg.dx, cfg.n_space());
    if problem.bc == BoundaryCondition::Dirichlet {
        field.rows[0][0] = 1.0;
    }
    field
}

/// Advances `field` by one time level.
pub fn step(field: &mut FdField, problem: &FdProblem, cfg: &FdConfig) -> Result<()> {
    let i = field.levels() - 1;
    let width = field.rows[0].len();
    let last = width - 1;
    let (alpha, m, theta) = (problem.alpha, problem.m, cfg.theta);
    let c = spfun::gamma_fn(2.0 - alpha)? * cfg.dt.powf(alpha);
    let mu = c / (cfg.dx * cfg.dx);

    let weights = if i == 0 { Vec::new() } else { l1_weights(i, alpha)? };
    let b_i = l1_initial_weight(i, alpha);
    let hist = history_sum(field, &weights, cfg.exec);
    field.flops += 2 * (i as u64) * width as u64;

    let cur = &field.rows[i];
    let u0 = &field.rows[0];
    let d_right: Vec<f64> = (0..last).map(|j| face_diffusivity(field, i, j, m)).collect();
    let d_left = |j: usize| d_right[j - 1];
    let explicit = |j: usize| -> f64 {
        if theta == 1.0 {
            return 0.0;
        }
        let dl = level_face(cur, j - 1, m);
        let dr = level_face(cur, j, m);
        (1.0 - theta) * mu * (dl * cur[j - 1] - (dl + dr) * cur[j] + dr * cur[j + 1])
    };

    // unknowns u_first..u_{J-1}; u_J = 0
    let first = if problem.bc == BoundaryCondition::Dirichlet { 1 } else { 0 };
    let n = last - first;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for j in first.max(1)..last {
        let k = j - first;
        let (dl, dr) = (d_left(j), d_right[j]);
        lower[k] = -theta * mu * dl;
        diag[k] = 1.0 + theta * mu * (dl + dr);
        upper[k] = -theta * mu * dr;
        rhs[k] = -hist[j] + b_i * u0[j] + explicit(j);
    }
    match problem.bc {
        BoundaryCondition::Dirichlet => {
            rhs[0] += theta * mu * d_left(1) * 1.0;
        }
        BoundaryCondition::Neumann | BoundaryCondition::Robin => {
            // half cell [0, Δx/2]: D^α u_0 = 2 D_{1/2}(u_1 - u_0)/Δx² + 2 g/Δx
            let dr = d_right[0];
            let robin = problem.bc == BoundaryCondition::Robin;
            let src = 2.0 * c / cfg.dx;
            diag[0] = 1.0 + theta * 2.0 * mu * dr - if robin { theta * src } else { 0.0 };
            upper[0] = -theta * 2.0 * mu * dr;
            let mut r = -hist[0] + b_i * u0[0];
            if robin {
                if theta < 1.0 {
                    let d0 = level_face(cur, 0, m);
                    r += (1.0 - theta) * (2.0 * mu * d0 * (cur[1] - cur[0]) + src * cur[0]);
                }
            } else {
                r += src;
                if theta < 1.0 {
                    let d0 = level_face(cur, 0, m);
                    r += (1.0 - theta) * 2.0 * mu * d0 * (cur[1] - cur[0]);
                }
            }
            rhs[0] = r;
        }
    }
    thomas(&lower, &diag, &upper, &mut rhs, first)?;
    field.flops += 8 * n as u64;

    let mut next = vec![0.0; width];
    if first == 1 {
        next[0] = 1.0;
    }
    for (k, v) in rhs.into_iter().enumerate() {
        next[first + k] = v.max(0.0);
    }
    if next[last - 1] > cfg.zero_threshold {
        return Err(Error::DomainTooSmall { x_max: cfg.x_max });
    }
    field.rows.push(next);
    Ok(())
}

pub fn run(problem: &FdProblem, cfg: &FdConfig) -> Result<FdField> {
    cfg.validate()?;
    let mut field = initial_field(problem, cfg);
    for _ in 0..cfg.n_time() {
        step(&mut field, problem, cfg)?;
    }
    Ok(field)
}

/// `x_{j*}` for the first `j*` with `u_{j*} > threshold ≥ u_{j*+1}` on the last level.
pub fn wetting_front_fd(field: &FdField, cfg: &FdConfig) -> Result<f64> {
    let u = field.last();
    let thr = cfg.zero_threshold;
    for j in 0..u.len() - 1 {
        if u[j] > thr && u[j + 1] <= thr {
            if j + 2 >= u.len() {
                break;
            }
            return Ok(field.x(j));
        }
    }
    if u.iter().all(|&v| v <= thr) {
        return Ok(0.0);
    }
    Err(Error::DomainTooSmall { x_max: cfg.x_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    /// Time steps (finite differences) or grid steps (Volterra).
    pub n: usize,
    pub ops: u64,
    pub seconds: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub eps: f64,
    pub volterra: Option<CostSample>,
    pub fd: Option<CostSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub alpha: f64,
    pub m: f64,
    pub reference_front: f64,
    pub rows: Vec<BenchRow>,
    /// Least-squares slopes of `log ops` against `log(1/ε)`.
    pub volterra_slope: Option<f64>,
    pub fd_slope: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub t_final: f64,
    /// Per-method wall-clock budget; rows still unmet when it runs out are censored.
    pub budget_seconds: f64,
    /// Ratio between successive resolutions tried.
    pub ladder_ratio: f64,
    /// Fixed `Δx/Δt` for the finite-difference runs.
    pub dx_over_dt: f64,
    /// The reference front is extrapolated from Volterra runs at this `N` and `2N`.
    pub reference_n: usize,
    pub exec: Execution,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            t_final: 1.0,
            budget_seconds: 120.0,
            ladder_ratio: 1.25,
            dx_over_dt: 5.0,
            reference_n: 256,
            exec: Execution::default(),
        }
    }
}

const VOLTERRA_LADDER_START: usize = 8;
const FD_LADDER_START: usize = 16;

pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        let dx = x.ln() - mx;
        (a + dx * (y.ln() - my), b + dx * dx)
    });
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// Walks a geometric ladder of resolutions, recording for each tolerance the
/// first resolution whose error meets it.
fn climb<F>(rows: &mut [BenchRow], start: usize, opts: &BenchOptions, pick: fn(&mut BenchRow) -> &mut Option<CostSample>, mut run_at: F) -> Result<()>
where
    F: FnMut(usize) -> Result<(u64, f64)>,
{
    let started = Instant::now();
    let mut pending = 0;
    let mut rung = start as f64;
    while pending < rows.len() && started.elapsed().as_secs_f64() <= opts.budget_seconds {
        let n = rung.round() as usize;
        rung *= opts.ladder_ratio;
        let t0 = Instant::now();
        let (ops, error) = run_at(n)?;
        let seconds = t0.elapsed().as_secs_f64();
        while pending < rows.len() && error <= rows[pending].eps {
            *pick(&mut rows[pending]) = Some(CostSample { n, ops, seconds, error });
            pending += 1;
        }
    }
    Ok(())
}

/// Slope over the samples above the ladder floor; tolerances already met by
/// the coarsest rung say nothing about asymptotic cost.
fn cost_slope(rows: &[BenchRow], start: usize, pick: fn(&BenchRow) -> Option<CostSample>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| pick(r).filter(|c| c.n > start).map(|c| (1.0 / r.eps, c.ops as f64)))
        .collect();
    log_log_slope(&pts)
}

/// Cost of locating the Dirichlet front `x*(T) = η* T^(α/2)` to within each
/// tolerance, for the Volterra scheme and for finite differences.
///
/// Volterra cost counts kernel evaluations plus the `N(N+1)` history
/// multiply-adds; finite-difference cost counts flops in the history sums and
/// tridiagonal solves.
pub fn complexity_benchmark(tolerances: &[f64], alpha: f64, m: f64, opts: &BenchOptions) -> Result<BenchReport> {
    use crate::diffusion;
    use crate::volterra::{self, KernelSpec, Method, SolverConfig, VolterraProblem};
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::sync::Arc;

    if tolerances.len() < 3 || tolerances.windows(2).any(|w| !(w[1] < w[0])) || tolerances.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("tolerances must be positive, strictly decreasing, at least 3".into()));
    }
    if !(opts.ladder_ratio > 1.0) || !(opts.dx_over_dt > 0.0) || opts.reference_n < VOLTERRA_LADDER_START {
        return Err(Error::Config(format!("invalid benchmark options {opts:?}")));
    }
    let params = diffusion::params_from_bc(alpha, m, BoundaryCondition::Dirichlet)?;
    let base = diffusion::build_problem(&params, &Default::default())?;
    let counter = Arc::new(AtomicU64::new(0));
    let counted = {
        let inner = base.kernel.eval_fn();
        let counter = Arc::clone(&counter);
        KernelSpec::from_arc(
            base.kernel.gamma,
            base.kernel.k_minus,
            base.kernel.k_plus,
            Arc::new(move |z, u| {
                counter.fetch_add(1, Ordering::Relaxed);
                inner(z, u)
            }),
        )?
    };
    let problem = VolterraProblem::new(m, counted)?;
    let front_at = |n: usize| -> Result<f64> {
        let sol = volterra::solve(&problem, &SolverConfig::new(n, Method::Trapezoid).with_exec(opts.exec))?;
        Ok(diffusion::wetting_front(&sol, &params)?.eta_star)
    };
    let t_scale = opts.t_final.powf(params.b);
    let (f1, f2) = (front_at(opts.reference_n)?, front_at(2 * opts.reference_n)?);
    let reference = (4.0 * f2 - f1) / 3.0 * t_scale;

    let mut rows: Vec<BenchRow> = tolerances
        .iter()
        .map(|&eps| BenchRow {
            eps,
            volterra: None,
            fd: None,
        })
        .collect();

    climb(&mut rows, VOLTERRA_LADDER_START, opts, |r| &mut r.volterra, |n| {
        counter.store(0, Ordering::Relaxed);
        let eta = front_at(n)?;
        let ops = counter.load(Ordering::Relaxed) + (n as u64) * (n as u64 + 1);
        Ok((ops, (eta * t_scale - reference).abs()))
    })?;

    let fd_problem = FdProblem::new(alpha, m, BoundaryCondition::Dirichlet)?;
    let x_max = 1.5 * reference + 0.5;
    climb(&mut rows, FD_LADDER_START, opts, |r| &mut r.fd, |n| {
        let dt = opts.t_final / n as f64;
        let mut cfg = FdConfig::new(dt, opts.dx_over_dt * dt, opts.t_final, x_max);
        cfg.exec = opts.exec;
        let field = run(&fd_problem, &cfg)?;
        Ok((field.flops, (wetting_front_fd(&field, &cfg)? - reference).abs()))
    })?;

    Ok(BenchReport {
        alpha,
        m,
        reference_front: reference,
        volterra_slope: cost_slope(&rows, VOLTERRA_LADDER_START, |r| r.volterra),
        fd_slope: cost_slope(&rows, FD_LADDER_START, |r| r.fd),
        rows,
    })
}
