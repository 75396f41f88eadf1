//! Finite-difference simulation of a cantilevered rectangular plate.
//!
//! The plate occupies [0, Lx] × [0, Ly], clamped along x = 0 and free on the
//! other three edges, and obeys the damped Kirchhoff equation with optional
//! potential-flow coupling:
//!
//!   w_tt + D·Δ²w + k0·w_t − k1·Δw_t + a1·w_x + a2·w_y = f(x, y, t).
//!
//! Free-edge moment and shear conditions (with optional boundary loads) are
//! enforced through ghost cells on a two-deep margin around the grid, which
//! turns the spatial part into an affine map and the whole problem into
//! y' = A·y + b(t) on y = [w; v]. The crate provides:
//!
//! - [`mesh`]: grid geometry, node classification, ghost-padded fields;
//! - [`ghost`]: boundary-condition fills, including the coupled 7×7 corner
//!   systems at the two free-free corners;
//! - [`operator`]: stencil applications and assembly of A and b(t);
//! - [`integrator`]: implicit trapezoidal (banded, cached factorizations)
//!   and explicit RK4 time stepping with step-doubling adaptivity;
//! - [`diagnostics`]: discrete energies, spectral abscissa, critical-flow
//!   bisection;
//! - [`band`]: the banded LU solver behind the implicit step;
//! - [`expr`]: the small expression grammar used in configs;
//! - [`cli`]: the `plate2d` command-line front end.

pub mod band;
pub mod cli;
pub mod diagnostics;
pub mod expr;
pub mod ghost;
pub mod integrator;
pub mod mesh;
pub mod operator;
