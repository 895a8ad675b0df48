//! Special functions, adaptive Gauss-Kronrod quadrature and a Newton solver
//! for `a x^(m+1) - b x - c = 0`.
//!
//! Gamma, log-gamma and the regularized incomplete beta ratio are delegated
//! to `statrs`; everything that carries a kernel integrand in this crate
//! goes through [`adaptive_quad`] or its vector-valued sibling.

use serde::{Deserialize, Serialize};
use statrs::function::{beta as sbeta, gamma as sgamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 200,
        }
    }
}

impl QuadConfig {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let cfg = QuadConfig {
            abs_tol,
            rel_tol,
            max_subdivisions,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol >= 0.0) || self.max_subdivisions < 1 {
            return Err(Error::Config(format!("invalid quadrature settings {self:?}")));
        }
        Ok(())
    }
}

pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("gamma", format!("x = {x}")));
    }
    Ok(sgamma::gamma(x))
}

pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("ln_gamma", format!("x = {x}")));
    }
    Ok(sgamma::ln_gamma(x))
}

/// Euler beta function `Γ(a)Γ(b)/Γ(a+b)`, evaluated in log space.
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain("beta", format!("a = {a}, b = {b}")));
    }
    Ok(sbeta::ln_beta(a, b).exp())
}

fn check_inc_beta(func: &'static str, a: f64, b: f64, z: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&z) {
        return Err(Error::domain(func, format!("a = {a}, b = {b}, z = {z}")));
    }
    Ok(())
}

/// Lower incomplete beta `∫₀^z t^(a-1) (1-t)^(b-1) dt` (not regularized).
pub fn inc_beta(a: f64, b: f64, z: f64) -> Result<f64> {
    check_inc_beta("inc_beta", a, b, z)?;
    if z == 0.0 {
        return Ok(0.0);
    }
    Ok(sbeta::beta_reg(a, b, z) * beta_fn(a, b)?)
}

/// Regularized incomplete beta `I_z(a, b)` without argument checks.
#[inline]
pub(crate) fn beta_reg_unchecked(a: f64, b: f64, z: f64) -> f64 {
    sbeta::beta_reg(a, b, z.clamp(0.0, 1.0))
}

// Gauss-Kronrod 7/15 nodes and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy)]
struct Panel<const D: usize> {
    lo: f64,
    hi: f64,
    value: [f64; D],
    error: f64,
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err.abs();
    if resasc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / resasc).powf(1.5);
        e = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * resabs);
    }
    e
}

fn gk15<const D: usize, F>(f: &F, lo: f64, hi: f64) -> Panel<D>
where
    F: Fn(f64) -> [f64; D],
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kron = [0.0; D];
    let mut gauss = [0.0; D];
    let mut resabs = [0.0; D];
    let mut fv = [[0.0; D]; 14];
    for d in 0..D {
        kron[d] = fc[d] * WGK[7];
        gauss[d] = fc[d] * WG[3];
        resabs[d] = fc[d].abs() * WGK[7];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for d in 0..D {
            kron[d] += WGK[j] * (f1[d] + f2[d]);
            resabs[d] += WGK[j] * (f1[d].abs() + f2[d].abs());
            if j % 2 == 1 {
                gauss[d] += WG[j / 2] * (f1[d] + f2[d]);
            }
        }
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
    }
    let mut error = 0.0_f64;
    let mut value = [0.0; D];
    for d in 0..D {
        let mean = 0.5 * kron[d];
        let mut resasc = WGK[7] * (fc[d] - mean).abs();
        for j in 0..7 {
            resasc += WGK[j] * ((fv[2 * j][d] - mean).abs() + (fv[2 * j + 1][d] - mean).abs());
        }
        let e = rescale_error(
            (kron[d] - gauss[d]) * half,
            resabs[d] * half.abs(),
            resasc * half.abs(),
        );
        error = error.max(e);
        value[d] = kron[d] * half;
    }
    if !value.iter().all(|v| v.is_finite()) {
        error = f64::INFINITY;
    }
    Panel {
        lo,
        hi,
        value,
        error,
    }
}

/// Globally adaptive G7/K15 quadrature of a vector-valued integrand.
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below `max(abs_tol, rel_tol·max|I|)`. An integrable endpoint
/// singularity makes the refinement geometric toward that endpoint; the
/// totals along that refinement are then accelerated with Wynn's epsilon
/// algorithm, since plain bisection converges too slowly for `(hi-s)^-α`
/// with `α` near 1.
pub(crate) fn integrate<const D: usize, F>(f: F, lo: f64, hi: f64, cfg: &QuadConfig) -> Result<[f64; D]>
where
    F: Fn(f64) -> [f64; D],
{
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::domain("adaptive_quad", format!("bounds [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok([0.0; D]);
    }
    let mut panels: Vec<Panel<D>> = vec![gk15(&f, lo, hi)];
    let mut endpoint_totals: Vec<[f64; D]> = Vec::new();
    let mut last_extrapolant: Option<[f64; D]> = None;
    loop {
        let mut value = [0.0; D];
        let mut error = 0.0;
        for p in &panels {
            for d in 0..D {
                value[d] += p.value[d];
            }
            error += p.error;
        }
        if !value.iter().all(|v| v.is_finite()) {
            // a node rounded onto a singular endpoint
            return Err(Error::ToleranceNotReached {
                estimate: value[0],
                error_bound: f64::INFINITY,
            });
        }
        let scale = value.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let target = cfg.abs_tol.max(cfg.rel_tol * scale);
        if error <= target {
            return Ok(value);
        }
        let argmax = |skip: Option<usize>| {
            panels
                .iter()
                .enumerate()
                .filter(|(k, _)| Some(*k) != skip)
                .fold((usize::MAX, f64::NEG_INFINITY), |best, (k, p)| {
                    if p.error > best.1 {
                        (k, p.error)
                    } else {
                        best
                    }
                })
                .0
        };
        let mut worst = argmax(None);
        let (w_lo, w_hi, w_err) = (panels[worst].lo, panels[worst].hi, panels[worst].error);
        let min_width = panels.iter().fold(f64::INFINITY, |acc, p| acc.min(p.hi - p.lo));
        if (w_hi == hi) != (w_lo == lo) && w_hi - w_lo <= min_width {
            let rest = (error - w_err).max(0.0);
            if rest > target {
                // settle the regular panels first so the endpoint sequence is clean
                worst = argmax(Some(worst));
            } else {
                endpoint_totals.push(value);
                if endpoint_totals.len() >= 5 {
                    let mut ex = [0.0; D];
                    for (d, e) in ex.iter_mut().enumerate() {
                        let seq: Vec<f64> = endpoint_totals.iter().map(|t| t[d]).collect();
                        *e = wynn_epsilon(&seq);
                    }
                    if let Some(prev) = last_extrapolant {
                        let change = (0..D).fold(0.0_f64, |acc, d| acc.max((ex[d] - prev[d]).abs()));
                        if ex.iter().all(|x| x.is_finite()) && change + rest <= target {
                            return Ok(ex);
                        }
                    }
                    last_extrapolant = Some(ex);
                }
            }
        }
        if panels.len() >= cfg.max_subdivisions {
            return Err(Error::ToleranceNotReached {
                estimate: value[0],
                error_bound: error,
            });
        }
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.lo + p.hi);
        if mid <= p.lo || mid >= p.hi {
            // panel is at the resolution limit of f64
            return Err(Error::ToleranceNotReached {
                estimate: value[0],
                error_bound: error,
            });
        }
        panels.push(gk15(&f, p.lo, mid));
        panels.push(gk15(&f, mid, p.hi));
    }
}

/// Deepest even-column entry of Wynn's epsilon table built on the tail of `seq`.
fn wynn_epsilon(seq: &[f64]) -> f64 {
    let tail = &seq[seq.len().saturating_sub(16)..];
    let mut prev = vec![0.0; tail.len()];
    let mut cur = tail.to_vec();
    let mut best = tail[tail.len() - 1];
    let mut column = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for j in 0..cur.len() - 1 {
            let diff = cur[j + 1] - cur[j];
            if diff == 0.0 || !diff.is_finite() {
                return best;
            }
            next.push(prev[j + 1] + 1.0 / diff);
        }
        prev = cur;
        cur = next;
        column += 1;
        if column % 2 == 0 {
            best = cur[cur.len() - 1];
        }
    }
    best
}

/// Adaptive Gauss-Kronrod estimate of `∫_lo^hi f`.
pub fn adaptive_quad<F>(f: F, lo: f64, hi: f64, cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate(|x| [f(x)], lo, hi, cfg).map(|v| v[0])
}

const NEWTON_CAP: usize = 100;

/// Positive root of `a x^(m+1) - b x - c = 0` by Newton's method from `x0`.
///
/// For `x > 0` the left side is convex, so iterates started right of the root
/// decrease monotonically onto it.
pub fn newton_root_power(a: f64, b: f64, c: f64, m: f64, x0: f64, tol: f64) -> Result<f64> {
    if !(a > 0.0) || b < 0.0 || c < 0.0 || !(b > 0.0 || c > 0.0) || !(m > 0.0) || !(x0 > 0.0) {
        return Err(Error::domain(
            "newton_root_power",
            format!("a = {a}, b = {b}, c = {c}, m = {m}, x0 = {x0}"),
        ));
    }
    let residual = |x: f64| a * x.powf(m + 1.0) - b * x - c;
    let mut x = x0;
    for _ in 0..NEWTON_CAP {
        let r = residual(x);
        if r.abs() <= tol {
            return Ok(x);
        }
        let slope = (m + 1.0) * a * x.powf(m) - b;
        let next = x - r / slope;
        if !(next > 0.0) || !next.is_finite() {
            return Err(Error::NoConvergence {
                last: next,
                iterations: NEWTON_CAP,
            });
        }
        x = next;
    }
    if residual(x).abs() <= tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            last: x,
            iterations: NEWTON_CAP,
        })
    }
}

/// Bisection for the same scalar equation on `[lo, hi]`; a sign change is required.
pub fn bisect_root_power(a: f64, b: f64, c: f64, m: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let g = |x: f64| a * x.powf(m + 1.0) - b * x - c;
    let (mut lo, mut hi) = (lo, hi);
    let (glo, ghi) = (g(lo), g(hi));
    if glo.signum() == ghi.signum() {
        return Err(Error::NoConvergence {
            last: hi,
            iterations: 0,
        });
    }
    let increasing = ghi > 0.0;
    for k in 0..400 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= tol || (hi - lo) <= f64::EPSILON * mid {
            return Ok(mid);
        }
        if (gm > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
        if k == 399 {
            return Err(Error::NoConvergence {
                last: mid,
                iterations: 400,
            });
        }
    }
    unreachable!()
}
