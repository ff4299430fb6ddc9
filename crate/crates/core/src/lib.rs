//! High-order DGSEM for the compressible Euler equations on Gauss and
//! Gauss-Lobatto nodes, written in telescoping flux-differencing form.
//!
//! The modules build on each other bottom-up:
//!
//! - [`basis`]: quadrature rules, Lagrange basis, SBP operators.
//! - [`euler`]: states, entropy variables, physical and two-point fluxes.
//! - [`core1d`]: the entropy-projected Gauss DGSEM right-hand side in its
//!   matrix form and the equivalent subcell (telescoping) form.
//! - [`mesh2d`] / [`core2d`]: curvilinear quadrilateral meshes and the 2D
//!   telescoping right-hand side.
//! - [`limiter`]: hybrid DG/FV subcell blending with density bounds.
//! - [`tint`]: low-storage Runge-Kutta time stepping.
//! - [`harness`]: experiment drivers, configuration, and file output.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        let tol: f64 = $tol;
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol:e})");
    }};
}

pub mod basis;
pub mod core1d;
pub mod core2d;
pub mod error;
pub mod euler;
pub mod harness;
pub mod limiter;
pub mod mesh2d;
pub mod tint;

pub use error::{Error, Result};
