//! Ghost-cell fills enforcing the plate's boundary conditions.
//!
//! The clamped west edge imposes w = 0 and w_x = 0; each free edge imposes a
//! bending-moment condition (second order, load g) and an effective-shear
//! condition (third order, load h):
//!
//! - north/south: ν·w_xx + w_yy = g,  w_yyy + (2−ν)·w_xxy = h
//! - east:        w_xx + ν·w_yy = g,  w_xxx + (2−ν)·w_yyx = h
//!
//! Discretizing each condition with central differences at a boundary node
//! leaves exactly one unknown ghost value away from corners, so the margin is
//! filled in passes: clamped mirror, then the depth-1 ghosts from the moment
//! conditions, then the depth-2 ghosts from the shear conditions, and last
//! the seven coupled ghosts around each free-free corner from a 7×7 solve
//! (two moments, four shears, and the corner twist condition w_xy = 0).
//!
//! Every fill is affine in the interior values and the loads, which is what
//! makes the semi-discrete system y' = Ay + b(t) affine as well.

use std::fmt;
use std::sync::Arc;

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use crate::mesh::{ExtendedField, GridSpec};

/// Boundary load data: either nothing, a constant, or a sampled function of
/// the boundary point (x, y).
#[derive(Clone)]
pub enum LoadFn {
    Zero,
    Const(f64),
    Func(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl LoadFn {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            LoadFn::Zero => 0.0,
            LoadFn::Const(c) => *c,
            LoadFn::Func(f) => f(x, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, LoadFn::Zero)
    }
}

impl fmt::Debug for LoadFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadFn::Zero => write!(f, "Zero"),
            LoadFn::Const(c) => write!(f, "Const({c})"),
            LoadFn::Func(_) => write!(f, "Func(..)"),
        }
    }
}

/// Per-edge moment (g) and shear (h) data. The clamped west edge carries no
/// load data.
#[derive(Debug, Clone)]
pub struct BoundaryLoads {
    pub g_n: LoadFn,
    pub g_s: LoadFn,
    pub g_e: LoadFn,
    pub h_n: LoadFn,
    pub h_s: LoadFn,
    pub h_e: LoadFn,
}

impl BoundaryLoads {
    pub fn zero() -> Self {
        Self {
            g_n: LoadFn::Zero,
            g_s: LoadFn::Zero,
            g_e: LoadFn::Zero,
            h_n: LoadFn::Zero,
            h_s: LoadFn::Zero,
            h_e: LoadFn::Zero,
        }
    }

    /// Constant moment G on all free edges, shear zero.
    pub fn uniform_moment(g: f64) -> Self {
        Self {
            g_n: LoadFn::Const(g),
            g_s: LoadFn::Const(g),
            g_e: LoadFn::Const(g),
            ..Self::zero()
        }
    }

    /// Constant shear H on all free edges, moment zero.
    pub fn uniform_shear(h: f64) -> Self {
        Self {
            h_n: LoadFn::Const(h),
            h_s: LoadFn::Const(h),
            h_e: LoadFn::Const(h),
            ..Self::zero()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.g_n.is_zero()
            && self.g_s.is_zero()
            && self.g_e.is_zero()
            && self.h_n.is_zero()
            && self.h_s.is_zero()
            && self.h_e.is_zero()
    }
}

/// Free edges in fill order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    North,
    South,
    East,
}

/// The two free-free corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    NorthEast,
    SouthEast,
}

#[derive(Debug, Error)]
pub enum GhostError {
    #[error("corner system at {corner:?} needs ghost cell ({i}, {j}) filled first (run the edge passes)")]
    PrerequisiteMissing { corner: Corner, i: isize, j: isize },
    #[error("corner system at {corner:?} is ill-conditioned (estimated condition number {cond:.3e} > 1e12)")]
    IllConditioned { corner: Corner, cond: f64 },
}

/// Clamped-edge pass: w(0, j) = 0 and the slope mirror w(−1, j) = w(1, j);
/// the unused outer layer i = −2 is zeroed.
pub fn fill_clamped(field: &mut ExtendedField, grid: &GridSpec) {
    let ny = grid.ny as isize;
    for j in 0..ny {
        field.put_raw(0, j, 0.0);
        let v = field.get_raw(1, j);
        field.put_raw(-1, j, v);
    }
    for j in -2..ny + 2 {
        field.put_raw(-2, j, 0.0);
    }
}

/// Depth-1 ghosts of one free edge from its moment condition, skipping the
/// free-free corner nodes (those belong to the corner systems). On the north
/// and south edges the pass includes i = 0, extending the fill across the
/// clamped corner (centered on a zero-valued node), and mirrors the i = −1
/// extension cell from i = +1.
pub fn fill_free_first_row(
    field: &mut ExtendedField,
    grid: &GridSpec,
    loads: &BoundaryLoads,
    edge: Edge,
    nu: f64,
) {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (dx, dy) = (grid.dx(), grid.dy());
    match edge {
        Edge::North => {
            let jb = ny - 1;
            for i in 0..nx - 1 {
                let o = field.get_raw(i, jb);
                let w = field.get_raw(i - 1, jb);
                let e = field.get_raw(i + 1, jb);
                let s = field.get_raw(i, jb - 1);
                let g = loads.g_n.eval(grid.x(i), grid.y(jb));
                let v = 2.0 * o - s - nu * (dy * dy) / (dx * dx) * (w - 2.0 * o + e) + g * dy * dy;
                field.put_raw(i, ny, v);
            }
            let m = field.get_raw(1, ny);
            field.put_raw(-1, ny, m);
        }
        Edge::South => {
            for i in 0..nx - 1 {
                let o = field.get_raw(i, 0);
                let w = field.get_raw(i - 1, 0);
                let e = field.get_raw(i + 1, 0);
                let n = field.get_raw(i, 1);
                let g = loads.g_s.eval(grid.x(i), 0.0);
                let v = 2.0 * o - n - nu * (dy * dy) / (dx * dx) * (w - 2.0 * o + e) + g * dy * dy;
                field.put_raw(i, -1, v);
            }
            let m = field.get_raw(1, -1);
            field.put_raw(-1, -1, m);
        }
        Edge::East => {
            let ib = nx - 1;
            for j in 1..ny - 1 {
                let o = field.get_raw(ib, j);
                let n = field.get_raw(ib, j + 1);
                let s = field.get_raw(ib, j - 1);
                let w = field.get_raw(ib - 1, j);
                let g = loads.g_e.eval(grid.x(ib), grid.y(j));
                let v = 2.0 * o - w - nu * (dx * dx) / (dy * dy) * (n - 2.0 * o + s) + g * dx * dx;
                field.put_raw(nx, j, v);
            }
        }
    }
}

/// Depth-2 ghosts of one free edge from its shear condition, staying at
/// least two nodes away from each free-free corner. Requires the depth-1
/// pass of the same edge (and, near the clamp, its mirror cell).
pub fn fill_free_second_row(
    field: &mut ExtendedField,
    grid: &GridSpec,
    loads: &BoundaryLoads,
    edge: Edge,
    nu: f64,
) {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (dx, dy) = (grid.dx(), grid.dy());
    let cross = (2.0 - nu) * (dy * dy) / (dx * dx);
    match edge {
        Edge::North => {
            let jb = ny - 1;
            for i in 0..nx - 2 {
                let n = field.get_raw(i, ny);
                let s = field.get_raw(i, jb - 1);
                let ss = field.get_raw(i, jb - 2);
                let ne = field.get_raw(i + 1, ny);
                let nw = field.get_raw(i - 1, ny);
                let se = field.get_raw(i + 1, jb - 1);
                let sw = field.get_raw(i - 1, jb - 1);
                let h = loads.h_n.eval(grid.x(i), grid.y(jb));
                let v = 2.0 * n - 2.0 * s + ss
                    - cross * (ne - 2.0 * n + nw - se + 2.0 * s - sw)
                    + 2.0 * h * dy * dy * dy;
                field.put_raw(i, ny + 1, v);
            }
            let m = field.get_raw(1, ny + 1);
            field.put_raw(-1, ny + 1, m);
        }
        Edge::South => {
            for i in 0..nx - 2 {
                let n = field.get_raw(i, 1);
                let nn = field.get_raw(i, 2);
                let s = field.get_raw(i, -1);
                let ne = field.get_raw(i + 1, 1);
                let nw = field.get_raw(i - 1, 1);
                let se = field.get_raw(i + 1, -1);
                let sw = field.get_raw(i - 1, -1);
                let h = loads.h_s.eval(grid.x(i), 0.0);
                let v = nn - 2.0 * n + 2.0 * s - 2.0 * h * dy * dy * dy
                    + cross * (ne - 2.0 * n + nw - se + 2.0 * s - sw);
                field.put_raw(i, -2, v);
            }
            let m = field.get_raw(1, -2);
            field.put_raw(-1, -2, m);
        }
        Edge::East => {
            let ib = nx - 1;
            let cross_e = (2.0 - nu) * (dx * dx) / (dy * dy);
            for j in 2..ny - 2 {
                let e = field.get_raw(nx, j);
                let w = field.get_raw(ib - 1, j);
                let ww = field.get_raw(ib - 2, j);
                let ne = field.get_raw(nx, j + 1);
                let se = field.get_raw(nx, j - 1);
                let nw = field.get_raw(ib - 1, j + 1);
                let sw = field.get_raw(ib - 1, j - 1);
                let h = loads.h_e.eval(grid.x(ib), grid.y(j));
                let v = 2.0 * e - 2.0 * w + ww
                    - cross_e * (ne - 2.0 * e + se - nw + 2.0 * w - sw)
                    + 2.0 * h * dx * dx * dx;
                field.put_raw(nx + 1, j, v);
            }
        }
    }
}

/// The 7×7 linear system in the seven unknown ghosts around one free-free
/// corner, with known neighbors folded into the right-hand side. Rows are
/// equilibrated to unit max-norm.
#[derive(Debug, Clone)]
pub struct CornerSystem {
    pub corner: Corner,
    pub matrix: SMatrix<f64, 7, 7>,
    pub rhs: SVector<f64, 7>,
    /// Padded-box positions of the seven unknowns, in column order.
    pub positions: [(isize, isize); 7],
}

/// Stencil of one discretized boundary condition: (di, dj, coefficient)
/// relative to the application node.
type Stencil = Vec<(isize, isize, f64)>;

fn moment_ns_stencil(dx: f64, dy: f64, nu: f64) -> Stencil {
    // ν w_xx + w_yy
    vec![
        (-1, 0, nu / (dx * dx)),
        (0, 0, -2.0 * nu / (dx * dx) - 2.0 / (dy * dy)),
        (1, 0, nu / (dx * dx)),
        (0, -1, 1.0 / (dy * dy)),
        (0, 1, 1.0 / (dy * dy)),
    ]
}

fn moment_e_stencil(dx: f64, dy: f64, nu: f64) -> Stencil {
    // w_xx + ν w_yy
    vec![
        (-1, 0, 1.0 / (dx * dx)),
        (0, 0, -2.0 / (dx * dx) - 2.0 * nu / (dy * dy)),
        (1, 0, 1.0 / (dx * dx)),
        (0, -1, nu / (dy * dy)),
        (0, 1, nu / (dy * dy)),
    ]
}

fn shear_ns_stencil(dx: f64, dy: f64, nu: f64) -> Stencil {
    // w_yyy + (2−ν) w_xxy
    let c1 = 1.0 / (2.0 * dy * dy * dy);
    let c2 = (2.0 - nu) / (2.0 * dx * dx * dy);
    vec![
        (0, 2, c1),
        (0, 1, -2.0 * c1 - 2.0 * c2),
        (0, -1, 2.0 * c1 + 2.0 * c2),
        (0, -2, -c1),
        (1, 1, c2),
        (-1, 1, c2),
        (1, -1, -c2),
        (-1, -1, -c2),
    ]
}

fn shear_e_stencil(dx: f64, dy: f64, nu: f64) -> Stencil {
    // w_xxx + (2−ν) w_yyx
    let c1 = 1.0 / (2.0 * dx * dx * dx);
    let c2 = (2.0 - nu) / (2.0 * dy * dy * dx);
    vec![
        (2, 0, c1),
        (1, 0, -2.0 * c1 - 2.0 * c2),
        (-1, 0, 2.0 * c1 + 2.0 * c2),
        (-2, 0, -c1),
        (1, 1, c2),
        (1, -1, c2),
        (-1, 1, -c2),
        (-1, -1, -c2),
    ]
}

fn mixed_stencil(dx: f64, dy: f64) -> Stencil {
    // w_xy
    let c = 1.0 / (4.0 * dx * dy);
    vec![(1, 1, c), (-1, 1, -c), (1, -1, -c), (-1, -1, c)]
}

/// Assemble the corner system. Requires the depth-1 and depth-2 edge passes
/// on both adjacent edges; a still-unfilled (NaN) prerequisite is an error.
pub fn build_corner_system(
    field: &ExtendedField,
    grid: &GridSpec,
    loads: &BoundaryLoads,
    corner: Corner,
    nu: f64,
) -> Result<CornerSystem, GhostError> {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (dx, dy) = (grid.dx(), grid.dy());
    let ic = nx - 1;
    let (jc, up) = match corner {
        Corner::NorthEast => (ny - 1, 1),
        Corner::SouthEast => (0, -1),
    };
    let (g_h, h_h) = match corner {
        Corner::NorthEast => (&loads.g_n, &loads.h_n),
        Corner::SouthEast => (&loads.g_s, &loads.h_s),
    };

    let positions = [
        (ic, jc + up),
        (ic, jc + 2 * up),
        (ic - 1, jc + 2 * up),
        (ic + 1, jc + up),
        (ic + 1, jc),
        (ic + 2, jc),
        (ic + 2, jc - up),
    ];

    // (application node, stencil, load value) for the seven conditions:
    // both moments and both shears at the corner, one more shear per edge at
    // the adjacent boundary node, and the twist condition w_xy = 0.
    let equations: [((isize, isize), Stencil, f64); 7] = [
        ((ic, jc), moment_ns_stencil(dx, dy, nu), g_h.eval(grid.x(ic), grid.y(jc))),
        ((ic, jc), moment_e_stencil(dx, dy, nu), loads.g_e.eval(grid.x(ic), grid.y(jc))),
        ((ic, jc), shear_ns_stencil(dx, dy, nu), h_h.eval(grid.x(ic), grid.y(jc))),
        ((ic - 1, jc), shear_ns_stencil(dx, dy, nu), h_h.eval(grid.x(ic - 1), grid.y(jc))),
        ((ic, jc), shear_e_stencil(dx, dy, nu), loads.h_e.eval(grid.x(ic), grid.y(jc))),
        ((ic, jc - up), shear_e_stencil(dx, dy, nu), loads.h_e.eval(grid.x(ic), grid.y(jc - up))),
        ((ic, jc), mixed_stencil(dx, dy), 0.0),
    ];

    let mut matrix = SMatrix::<f64, 7, 7>::zeros();
    let mut rhs = SVector::<f64, 7>::zeros();
    for (r, ((ci, cj), stencil, load)) in equations.iter().enumerate() {
        rhs[r] = *load;
        for &(di, dj, coef) in stencil {
            let p = (ci + di, cj + dj);
            if let Some(col) = positions.iter().position(|&q| q == p) {
                matrix[(r, col)] += coef;
            } else {
                let v = field.get_raw(p.0, p.1);
                if !v.is_finite() {
                    return Err(GhostError::PrerequisiteMissing { corner, i: p.0, j: p.1 });
                }
                rhs[r] -= coef * v;
            }
        }
    }

    // Row equilibration: moment, shear, and twist rows carry different
    // powers of the spacings; unit max-norm rows keep the conditioning
    // estimate meaningful.
    for r in 0..7 {
        let scale = (0..7).map(|c| matrix[(r, c)].abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            for c in 0..7 {
                matrix[(r, c)] /= scale;
            }
            rhs[r] /= scale;
        }
    }

    Ok(CornerSystem { corner, matrix, rhs, positions })
}

/// Solve a corner system and write the seven ghost values into the field.
pub fn solve_corner(
    field: &mut ExtendedField,
    system: &CornerSystem,
) -> Result<[f64; 7], GhostError> {
    let inv = system.matrix.try_inverse().ok_or(GhostError::IllConditioned {
        corner: system.corner,
        cond: f64::INFINITY,
    })?;
    let norm1 = |m: &SMatrix<f64, 7, 7>| {
        (0..7)
            .map(|c| (0..7).map(|r| m[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let cond = norm1(&system.matrix) * norm1(&inv);
    if !(cond <= 1e12) {
        return Err(GhostError::IllConditioned { corner: system.corner, cond });
    }
    let sol = system
        .matrix
        .lu()
        .solve(&system.rhs)
        .ok_or(GhostError::IllConditioned { corner: system.corner, cond })?;
    let mut out = [0.0; 7];
    for (k, &(i, j)) in system.positions.iter().enumerate() {
        out[k] = sol[k];
        field.put_raw(i, j, sol[k]);
    }
    Ok(out)
}

/// Full fill pass: clamped mirror, depth-1 ghosts on the three free edges,
/// depth-2 ghosts, then the two corner systems. Afterwards every ghost cell
/// reachable by a 13-point stencil centered on an unknown node is defined,
/// and the field is marked ghost-valid.
pub fn fill_all(
    field: &mut ExtendedField,
    grid: &GridSpec,
    loads: &BoundaryLoads,
    nu: f64,
) -> Result<(), GhostError> {
    fill_clamped(field, grid);
    for edge in [Edge::North, Edge::South, Edge::East] {
        fill_free_first_row(field, grid, loads, edge, nu);
    }
    for edge in [Edge::North, Edge::South, Edge::East] {
        fill_free_second_row(field, grid, loads, edge, nu);
    }
    for corner in [Corner::NorthEast, Corner::SouthEast] {
        let system = build_corner_system(field, grid, loads, corner, nu)?;
        solve_corner(field, &system)?;
    }
    field.set_ghosts_valid();
    Ok(())
}
