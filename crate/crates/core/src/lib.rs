//! Numerical solution of the time-fractional porous medium equation
//!
//! ```text
//! ∂^α u/∂t^α = ∂/∂x (u^m ∂u/∂x),   0 < α ≤ 1, m > 0,
//! ```
//!
//! on the half-line with Dirichlet, Neumann or Robin data at `x = 0`.
//!
//! The self-similar reduction turns the PDE into a nonlinear Volterra equation
//! with a weakly singular kernel, solved by [`volterra`] with kernels from
//! [`diffusion`]. [`fdm`] is an independent finite-difference solver of the
//! PDE itself, and [`analysis`] holds convergence-order estimation and the
//! critical-exponent computation.

pub mod analysis;
pub mod diffusion;
mod error;
pub mod exec;
pub mod fdm;
pub mod spfun;
pub mod volterra;

pub use error::{Error, Result};
pub use exec::Execution;
