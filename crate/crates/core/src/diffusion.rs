//! Self-similar reduction of the time-fractional porous medium equation.
//!
//! With `u(x,t) = C t^a y(1 - x/(η* t^b))` the PDE becomes a Volterra equation
//! for `y^(m+1)` whose kernel depends on the boundary condition only through
//! the exponents `a, b` and the constants `A, B`. The kernel has two
//! representations: a one-dimensional integral ([`kernel_direct`]) and a
//! closed form in incomplete beta functions ([`kernel_incbeta`], used by the
//! solver).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spfun::{self, QuadConfig};
use crate::volterra::{GridSolution, KernelFn, KernelSpec, VolterraProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Constant concentration `u(0,t) = 1`.
    Dirichlet,
    /// Constant flux `-u^m u_x(0,t) = 1`.
    Neumann,
    /// Flux proportional to concentration, `-u^m u_x(0,t) = u(0,t)`.
    Robin,
}

impl BoundaryCondition {
    pub const ALL: [BoundaryCondition; 3] = [
        BoundaryCondition::Dirichlet,
        BoundaryCondition::Neumann,
        BoundaryCondition::Robin,
    ];
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" => Ok(BoundaryCondition::Dirichlet),
            "neumann" => Ok(BoundaryCondition::Neumann),
            "robin" => Ok(BoundaryCondition::Robin),
            other => Err(Error::Config(format!("unknown boundary condition '{other}'"))),
        }
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Robin => "robin",
        })
    }
}

/// How `A` is chosen for the Neumann problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeumannA {
    /// `A = 1 - α + a`, the same relation the other two conditions obey.
    #[default]
    Derived,
    /// `A = 1/(m+2)`, which coincides with the derived value only at `α = 1`.
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarParams {
    pub alpha: f64,
    pub m: f64,
    pub bc: BoundaryCondition,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
    #[serde(rename = "B")]
    pub big_b: f64,
    pub gamma: f64,
}

pub fn params_from_bc(alpha: f64, m: f64, bc: BoundaryCondition) -> Result<SelfSimilarParams> {
    params_with_convention(alpha, m, bc, NeumannA::Derived)
}

/// Self-similar exponents and kernel constants. `m > 0` is accepted, which
/// includes the sub-quadratic range used when locating the critical exponent.
pub fn params_with_convention(alpha: f64, m: f64, bc: BoundaryCondition, neumann: NeumannA) -> Result<SelfSimilarParams> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("params_from_bc", format!("alpha = {alpha} not in (0, 1]")));
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::domain("params_from_bc", format!("m = {m} must be positive")));
    }
    let (a, b) = match bc {
        BoundaryCondition::Dirichlet => (0.0, alpha / 2.0),
        BoundaryCondition::Robin => (alpha / m, alpha),
        BoundaryCondition::Neumann => (alpha / (m + 2.0), (m + 1.0) * alpha / (m + 2.0)),
    };
    let big_a = match (bc, neumann) {
        (BoundaryCondition::Neumann, NeumannA::Tabulated) => 1.0 / (m + 2.0),
        _ => 1.0 - alpha + a,
    };
    Ok(SelfSimilarParams {
        alpha,
        m,
        bc,
        a,
        b,
        big_a,
        big_b: b,
        gamma: 1.0 - alpha,
    })
}

/// Precomputed incomplete-beta form of the kernel for one parameter set.
///
/// ```text
/// K(z,u) = (m+1) [ (A+2B)(1-u) S(c₁, x) - (A+B)(1-z) S(c₂, x) ]
/// S(c, x) = β(1-α, c; x) / Γ(1-α),   x = 1 - ((1-z)/(1-u))^(1/b)
/// c₁ = a + 2b + 1,   c₂ = a + b + 1
/// ```
#[derive(Debug, Clone, Copy)]
pub struct DiffusionKernel {
    params: SelfSimilarParams,
    eps: f64,
    c1: f64,
    c2: f64,
    ratio1: f64,
    ratio2: f64,
}

impl DiffusionKernel {
    pub fn new(params: SelfSimilarParams) -> Self {
        let eps = 1.0 - params.alpha;
        let c1 = params.a + 2.0 * params.b + 1.0;
        let c2 = params.a + params.b + 1.0;
        let ratio = |c: f64| {
            if eps == 0.0 {
                1.0
            } else {
                (spfun::ln_gamma(c).unwrap_or(f64::NAN) - spfun::ln_gamma(eps + c).unwrap_or(f64::NAN)).exp()
            }
        };
        DiffusionKernel {
            params,
            eps,
            c1,
            c2,
            ratio1: ratio(c1),
            ratio2: ratio(c2),
        }
    }

    pub fn params(&self) -> &SelfSimilarParams {
        &self.params
    }

    pub fn eval(&self, z: f64, u: f64) -> f64 {
        if u >= z || u >= 1.0 {
            return 0.0;
        }
        let p = &self.params;
        let x = front_gap(z, u, p.b);
        let s = |c: f64, ratio: f64| {
            if x <= 0.0 {
                0.0
            } else if self.eps == 0.0 {
                1.0
            } else {
                spfun::beta_reg_unchecked(self.eps, c, x) * ratio
            }
        };
        let k = (p.m + 1.0)
            * ((p.big_a + 2.0 * p.big_b) * (1.0 - u) * s(self.c1, self.ratio1)
                - (p.big_a + p.big_b) * (1.0 - z) * s(self.c2, self.ratio2));
        k.max(0.0)
    }
}

/// `1 - ((1-z)/(1-u))^(1/b)` without cancellation for `u` close to `z`.
fn front_gap(z: f64, u: f64, b: f64) -> f64 {
    if z >= 1.0 {
        return 1.0;
    }
    let ratio_ln = (-(z - u) / (1.0 - u)).ln_1p();
    -(ratio_ln / b).exp_m1()
}

fn check_pair(func: &'static str, z: f64, u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&z) || !(0.0..=z).contains(&u) {
        return Err(Error::domain(func, format!("need 0 <= u <= z <= 1, got z = {z}, u = {u}")));
    }
    Ok(())
}

/// `F(z, s) = (m+1)(B(1-s) + (A+B)(z-s))`, the kernel at `α = 1`.
fn linear_f(p: &SelfSimilarParams, z: f64, s: f64) -> f64 {
    (p.m + 1.0) * (p.big_b * (1.0 - s) + (p.big_a + p.big_b) * (z - s))
}

/// Kernel by direct quadrature of its integral definition.
///
/// The `(1-s)^-α` endpoint singularity is removed by `τ = (1-s)^(1-α)`:
///
/// ```text
/// K(z,u) = 1/Γ(2-α) ∫₀^(x^(1-α)) F(z, 1 - σ^b (1-u)) σ^(a+b) dτ,   σ = 1 - τ^(1/(1-α))
/// ```
pub fn kernel_direct(z: f64, u: f64, p: &SelfSimilarParams, quad: &QuadConfig) -> Result<f64> {
    check_pair("kernel_direct", z, u)?;
    if u >= z {
        return Ok(0.0);
    }
    if p.alpha >= 1.0 {
        return Ok(linear_f(p, z, u));
    }
    let eps = 1.0 - p.alpha;
    let x = front_gap(z, u, p.b);
    let upper = x.powf(eps);
    let inner = spfun::adaptive_quad(
        |tau| {
            let sigma = 1.0 - tau.powf(1.0 / eps);
            linear_f(p, z, 1.0 - sigma.powf(p.b) * (1.0 - u)) * sigma.powf(p.a + p.b)
        },
        0.0,
        upper,
        quad,
    )?;
    Ok((inner / spfun::gamma_fn(2.0 - p.alpha)?).max(0.0))
}

pub fn kernel_incbeta(z: f64, u: f64, p: &SelfSimilarParams) -> Result<f64> {
    check_pair("kernel_incbeta", z, u)?;
    let k = DiffusionKernel::new(*p).eval(z, u);
    if !k.is_finite() {
        return Err(Error::domain("kernel_incbeta", format!("non-finite kernel at z = {z}, u = {u}")));
    }
    Ok(k)
}

/// `(min, max)` of `K(z,u)/(z-u)^γ` over a `grid × grid` lattice of the
/// simplex plus near-diagonal samples down to `z - u = 1/grid²`.
pub fn kernel_bounds_of(kernel: &KernelFn, gamma: f64, grid_n: usize) -> (f64, f64) {
    let grid = grid_n.max(16);
    let g = grid as f64;
    let band = 1.0 / (g * g);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    let mut visit = |z: f64, u: f64| {
        let d = z - u;
        if d < band * (1.0 - 1e-12) || u < 0.0 {
            return;
        }
        let r = kernel(z, u) / d.powf(gamma);
        if r.is_finite() {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    };
    for i in 1..=grid {
        let z = i as f64 / g;
        for j in 0..i {
            visit(z, j as f64 / g);
        }
        // geometric approach to the diagonal between 1/grid and 1/grid²
        let mut d = 1.0 / g;
        while d > band * 1.5 {
            d *= 0.5;
            visit(z, z - d.max(band));
        }
        visit(z, z - band);
    }
    (lo, hi)
}

pub fn kernel_bounds_empirical(p: &SelfSimilarParams, grid_n: usize) -> (f64, f64) {
    let kernel = DiffusionKernel::new(*p);
    kernel_bounds_of(&move |z, u| kernel.eval(z, u), p.gamma, grid_n)
}

pub const BOUNDS_GRID: usize = 200;

pub fn build_problem(p: &SelfSimilarParams, quad: &QuadConfig) -> Result<VolterraProblem> {
    let kernel = DiffusionKernel::new(*p);
    let params = *p;
    let quad = *quad;
    let eval: Arc<KernelFn> = Arc::new(move |z, u| {
        let k = kernel.eval(z, u);
        if k.is_finite() {
            k
        } else {
            kernel_direct(z, u, &params, &quad).unwrap_or(f64::NAN)
        }
    });
    let (k_minus, k_plus) = kernel_bounds_of(&*eval, p.gamma, BOUNDS_GRID);
    let spec = KernelSpec::from_arc(p.gamma, k_minus, k_plus, eval)?;
    VolterraProblem::new(p.m, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontResult {
    pub eta_star: f64,
    pub c_scale: f64,
    pub y_at_1: f64,
    /// `(y^(m+1))'(1)` for Neumann, `(y^m)'(1)` for Robin, absent for Dirichlet.
    pub deriv_used: Option<f64>,
}

/// Second-order one-sided derivative at the right end of a uniform grid.
fn right_derivative(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * h)
}

pub fn wetting_front(sol: &GridSolution, p: &SelfSimilarParams) -> Result<FrontResult> {
    if sol.n_steps < 4 {
        return Err(Error::FrontUndefined(format!("need at least 4 steps, got {}", sol.n_steps)));
    }
    let y1 = sol.y_terminal();
    let m = p.m;
    let h = sol.h();
    let (eta, deriv) = match p.bc {
        BoundaryCondition::Dirichlet => {
            if !(y1 > 0.0) {
                return Err(Error::FrontUndefined(format!("y(1) = {y1}")));
            }
            (y1.powf(-m / 2.0), None)
        }
        BoundaryCondition::Neumann => {
            let f: Vec<f64> = sol.y.iter().map(|y| y.powf(m + 1.0)).collect();
            let d = right_derivative(&f, h);
            if !(d > 0.0) {
                return Err(Error::FrontUndefined(format!("(y^(m+1))'(1) = {d}")));
            }
            (((m + 1.0) / d).powf(m / (m + 2.0)), Some(d))
        }
        BoundaryCondition::Robin => {
            let f: Vec<f64> = sol.y.iter().map(|y| y.powf(m)).collect();
            let d = right_derivative(&f, h);
            if !(d > 0.0) {
                return Err(Error::FrontUndefined(format!("(y^m)'(1) = {d}")));
            }
            (m / d, Some(d))
        }
    };
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::FrontUndefined(format!("eta* = {eta}")));
    }
    Ok(FrontResult {
        eta_star: eta,
        c_scale: eta.powf(2.0 / m),
        y_at_1: y1,
        deriv_used: deriv,
    })
}

/// `u(x,t) = C t^a y(1 - x/(η* t^b))`, zero beyond the front.
pub fn reconstruct_u(x: f64, t: f64, sol: &GridSolution, front: &FrontResult, p: &SelfSimilarParams) -> f64 {
    let reach = front.eta_star * t.powf(p.b);
    if x >= reach || t <= 0.0 {
        return 0.0;
    }
    front.c_scale * t.powf(p.a) * sol.y_at(1.0 - x.max(0.0) / reach)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionBounds {
    pub c_minus: f64,
    pub c_plus: f64,
    /// Only defined for the Dirichlet problem.
    pub u_minus: Option<f64>,
    pub u_plus: Option<f64>,
    /// Nodes where `y` leaves `[C₋^(1/m), C₊^(1/m)] z^((2-α)/m)`.
    pub violations: usize,
}

pub fn solution_bounds(p: &SelfSimilarParams, sol: &GridSolution, kb: (f64, f64)) -> Result<SolutionBounds> {
    let (k_minus, k_plus) = kb;
    let q = (2.0 - p.alpha) / p.m;
    let beta = spfun::beta_fn(2.0 - p.alpha, 1.0 + q)?;
    let c_minus = k_minus * beta;
    let c_plus = k_plus * beta;
    let (lo, hi) = (c_minus.powf(1.0 / p.m), c_plus.powf(1.0 / p.m));
    let slack = 1e-9;
    let violations = sol
        .y
        .iter()
        .enumerate()
        .filter(|&(n, &y)| {
            let zq = sol.z(n).powf(q);
            y < lo * zq * (1.0 - slack) || y > hi * zq * (1.0 + slack)
        })
        .count();
    if violations > 0 {
        log::warn!("solution_bounds: {violations} nodes outside the power-law envelope");
    }
    let (u_minus, u_plus) = if p.bc == BoundaryCondition::Dirichlet {
        let y1 = sol.y_terminal();
        (Some(lo / y1), Some(hi / y1))
    } else {
        (None, None)
    };
    Ok(SolutionBounds {
        c_minus,
        c_plus,
        u_minus,
        u_plus,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volterra::{solve, Method, SolverConfig};
    use approx::assert_relative_eq;

    #[test]
    fn table_parameters() {
        let p = params_from_bc(0.3, 4.0, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!((p.a, p.b, p.big_a, p.big_b), (0.0, 0.15, 0.7, 0.15));
        let p = params_from_bc(0.5, 2.0, BoundaryCondition::Robin).unwrap();
        assert_relative_eq!(p.a, 0.25);
        assert_relative_eq!(p.big_a, 0.75);
        assert_relative_eq!(p.b, 0.5);
        assert_relative_eq!(2.0 * p.b - p.m * p.a, p.alpha, epsilon = 1e-15);
        let p = params_from_bc(0.5, 2.0, BoundaryCondition::Neumann).unwrap();
        assert_relative_eq!(p.a, 0.125);
        assert_relative_eq!(p.b, 0.375);
        assert_relative_eq!(p.big_a, 0.625);
        let t = params_with_convention(0.5, 2.0, BoundaryCondition::Neumann, NeumannA::Tabulated).unwrap();
        assert_relative_eq!(t.big_a, 0.25);
        // both conventions agree in the classical limit
        let d = params_from_bc(1.0, 3.0, BoundaryCondition::Neumann).unwrap();
        let t = params_with_convention(1.0, 3.0, BoundaryCondition::Neumann, NeumannA::Tabulated).unwrap();
        assert_relative_eq!(d.big_a, t.big_a, epsilon = 1e-15);
        assert!(params_from_bc(0.0, 2.0, BoundaryCondition::Robin).is_err());
        assert!(params_from_bc(1.2, 2.0, BoundaryCondition::Robin).is_err());
        assert!(params_from_bc(0.5, -1.0, BoundaryCondition::Robin).is_err());
    }

    #[test]
    fn kernel_vanishes_on_diagonal() {
        let quad = QuadConfig::default();
        for bc in BoundaryCondition::ALL {
            let p = params_from_bc(0.5, 2.0, bc).unwrap();
            for z in [0.0, 0.3, 1.0] {
                assert_eq!(kernel_incbeta(z, z, &p).unwrap(), 0.0);
                assert_eq!(kernel_direct(z, z, &p, &quad).unwrap(), 0.0);
            }
        }
        let p = params_from_bc(0.5, 2.0, BoundaryCondition::Dirichlet).unwrap();
        assert!(kernel_direct(0.2, 0.3, &p, &quad).is_err());
        assert!(kernel_incbeta(1.2, 0.3, &p).is_err());
    }

    #[test]
    fn incbeta_matches_direct() {
        let quad = QuadConfig::new(1e-13, 1e-12, 400).unwrap();
        let mut worst = 0.0_f64;
        for bc in BoundaryCondition::ALL {
            for &(alpha, m) in &[(0.3, 2.0), (0.7, 7.0), (0.95, 1.5)] {
                let p = params_from_bc(alpha, m, bc).unwrap();
                for i in 1..=12 {
                    let z = i as f64 / 12.0;
                    for j in 0..i {
                        let u = j as f64 / 12.0 + 0.013;
                        let u = u.min(z);
                        let a = kernel_incbeta(z, u, &p).unwrap();
                        let b = kernel_direct(z, u, &p, &quad).unwrap();
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
        assert!(worst <= 1e-9, "max gap {worst:e}");
    }

    #[test]
    fn classical_limit() {
        let p1 = params_from_bc(1.0, 2.0, BoundaryCondition::Dirichlet).unwrap();
        let p = params_from_bc(0.999, 2.0, BoundaryCondition::Dirichlet).unwrap();
        let quad = QuadConfig::default();
        for &(z, u) in &[(0.5, 0.25), (0.9, 0.1), (1.0, 0.5)] {
            let exact = 3.0 * (0.5 * (1.0 - u) + 0.5 * (z - u));
            assert_relative_eq!(kernel_incbeta(z, u, &p1).unwrap(), exact, max_relative = 1e-14);
            assert_relative_eq!(kernel_direct(z, u, &p1, &quad).unwrap(), exact, max_relative = 1e-14);
            let near = kernel_direct(z, u, &p, &quad).unwrap();
            assert!((near - exact).abs() < 0.02 * exact, "{near} vs {exact}");
            assert_relative_eq!(kernel_incbeta(z, u, &p).unwrap(), near, max_relative = 1e-9);
        }
    }

    #[test]
    fn near_diagonal_behaviour() {
        // K/(z-u)^(1-α) → (m+1) b^α (1-z)^α / Γ(2-α) as u → z
        let p = params_from_bc(0.6, 3.0, BoundaryCondition::Robin).unwrap();
        let z = 0.4;
        let d = 1e-7;
        let ratio = kernel_incbeta(z, z - d, &p).unwrap() / d.powf(p.gamma);
        let limit = 4.0 * p.b.powf(0.6) * (1.0f64 - z).powf(0.6) / spfun::gamma_fn(1.4).unwrap();
        assert_relative_eq!(ratio, limit, max_relative = 1e-4);
    }

    #[test]
    fn bounds_of_power_kernel() {
        let k = |z: f64, s: f64| 2.5 * (z - s).powf(0.4);
        let (lo, hi) = kernel_bounds_of(&k, 0.4, 32);
        assert_relative_eq!(lo, 2.5, max_relative = 1e-12);
        assert_relative_eq!(hi, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn empirical_upper_bound_below_analytic() {
        // analytic bound (m+1)/Γ(2-α)·(A+2B)·b^(α-1) with the X cutoff sent to 0
        for bc in BoundaryCondition::ALL {
            let p = params_from_bc(0.5, 2.0, bc).unwrap();
            let (_, k_plus) = kernel_bounds_empirical(&p, 64);
            let analytic = (p.m + 1.0) / spfun::gamma_fn(2.0 - p.alpha).unwrap()
                * (p.big_a + 2.0 * p.big_b)
                * p.b.powf(p.alpha - 1.0);
            assert!(k_plus <= analytic * (1.0 + 1e-12), "{bc}: {k_plus} > {analytic}");
        }
    }

    #[test]
    fn dirichlet_front_and_boundary_value() {
        let p = params_from_bc(0.5, 2.0, BoundaryCondition::Dirichlet).unwrap();
        let pb = build_problem(&p, &QuadConfig::default()).unwrap();
        assert_eq!(pb.kernel.gamma, 0.5);
        let sol = solve(&pb, &SolverConfig::new(40, Method::Trapezoid)).unwrap();
        let front = wetting_front(&sol, &p).unwrap();
        assert_relative_eq!(front.c_scale, front.eta_star.powf(1.0), max_relative = 1e-14);
        for t in [0.1, 1.0, 10.0] {
            assert!((reconstruct_u(0.0, t, &sol, &front, &p) - 1.0).abs() <= 2.0 * sol.h());
            assert_eq!(reconstruct_u(front.eta_star * t.powf(p.b) * 1.01, t, &sol, &front, &p), 0.0);
        }
        let bounds = solution_bounds(&p, &sol, (pb.kernel.k_minus, pb.kernel.k_plus)).unwrap();
        assert_eq!(bounds.violations, 0);
        assert!(bounds.u_minus.unwrap() <= bounds.u_plus.unwrap());
    }

    #[test]
    fn robin_problem_positive() {
        let p = params_from_bc(0.5, 2.0, BoundaryCondition::Robin).unwrap();
        let pb = build_problem(&p, &QuadConfig::default()).unwrap();
        let sol = solve(&pb, &SolverConfig::new(40, Method::Trapezoid)).unwrap();
        assert!(sol.v.iter().all(|&v| v > 0.0));
        let front = wetting_front(&sol, &p).unwrap();
        assert!(front.deriv_used.unwrap() > 0.0);
        let xs: Vec<f64> = (0..20).map(|k| k as f64 * front.eta_star / 20.0).collect();
        let us: Vec<f64> = xs.iter().map(|&x| reconstruct_u(x, 1.0, &sol, &front, &p)).collect();
        assert!(us.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn injected_power_kernel_bounds_coincide() {
        let p = params_from_bc(0.5, 2.0, BoundaryCondition::Dirichlet).unwrap();
        let pb = VolterraProblem::new(2.0, KernelSpec::power(1.5, 0.5).unwrap()).unwrap();
        let sol = solve(&pb, &SolverConfig::new(10, Method::Trapezoid)).unwrap();
        let b = solution_bounds(&p, &sol, (1.5, 1.5)).unwrap();
        assert_eq!(b.c_minus, b.c_plus);
        assert_eq!(b.violations, 0);
    }
}
