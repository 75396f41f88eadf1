//! Shared helpers for the integration tests.
//!
//! The centerpiece is an *independent* evaluator of every discretized
//! boundary condition: instead of trusting the fill passes, it re-derives
//! each moment, shear, clamp, and twist condition as a plain centered finite
//! difference on the filled field and reports the residual against the load
//! sample. Closed-form corner oracles and seeded random generators round out
//! the kit.
#![allow(dead_code)]

use plate2d::ghost::{fill_all, BoundaryLoads};
use plate2d::mesh::{ExtendedField, GridSpec};
use plate2d::operator::{assemble, ForcingSpec, PlateParams, SemiDiscreteSystem};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator; each test picks its own seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One value per unknown, uniform on [-1, 1).
pub fn random_unknowns(grid: &GridSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..grid.n_unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Scatter random unknowns and run the full ghost fill.
pub fn random_filled_field(
    grid: &GridSpec,
    loads: &BoundaryLoads,
    nu: f64,
    rng: &mut ChaCha8Rng,
) -> ExtendedField {
    let mut field = ExtendedField::from_unknowns(grid, &random_unknowns(grid, rng));
    fill_all(&mut field, grid, loads, nu).expect("ghost fill failed");
    field
}

pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Observed order of accuracy from two errors at spacings h and h/2.
pub fn observed_order(err_coarse: f64, err_fine: f64) -> f64 {
    (err_coarse / err_fine).log2()
}

/// Unit-square system with D = 1, nu = 0.3, zero loads and forcing.
pub fn unit_system(nx: usize, ny: usize, k0: f64, a1: f64) -> SemiDiscreteSystem {
    let grid = GridSpec::unit_square(nx, ny);
    let params = PlateParams::new(1.0, 0.3, k0, 0.0, a1, 0.0).unwrap();
    assemble(&params, &grid, &BoundaryLoads::zero(), &ForcingSpec::Zero).unwrap()
}

/// One boundary condition re-evaluated from its defining finite difference.
pub struct Residual {
    pub condition: &'static str,
    pub i: isize,
    pub j: isize,
    pub value: f64,
}

/// Evaluate every condition the fill passes are supposed to enforce,
/// straight from the definitions:
///
/// - clamp: `w = 0` and centered `w_x = 0` at each x = 0 node;
/// - north/south: `nu w_xx + w_yy = g` and `w_yyy + (2-nu) w_xxy = h` at
///   every boundary node (corners included);
/// - east: `w_xx + nu w_yy = g` and `w_xxx + (2-nu) w_yyx = h` at every
///   boundary node (corners included);
/// - twist: `w_xy = 0` at both free-free corners.
///
/// All stencils are written out here independently of the fill code, so a
/// sign or scaling slip in either place shows up as a nonzero residual.
pub fn boundary_residuals(
    field: &ExtendedField,
    grid: &GridSpec,
    loads: &BoundaryLoads,
    nu: f64,
) -> Vec<Residual> {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (dx, dy) = (grid.dx(), grid.dy());
    let w = |i: isize, j: isize| field.get(i, j);
    let wxx = |i: isize, j: isize| (w(i - 1, j) - 2.0 * w(i, j) + w(i + 1, j)) / (dx * dx);
    let wyy = |i: isize, j: isize| (w(i, j - 1) - 2.0 * w(i, j) + w(i, j + 1)) / (dy * dy);
    let wyyy = |i: isize, j: isize| {
        (w(i, j + 2) - 2.0 * w(i, j + 1) + 2.0 * w(i, j - 1) - w(i, j - 2)) / (2.0 * dy * dy * dy)
    };
    let wxxx = |i: isize, j: isize| {
        (w(i + 2, j) - 2.0 * w(i + 1, j) + 2.0 * w(i - 1, j) - w(i - 2, j)) / (2.0 * dx * dx * dx)
    };
    // d/dy of w_xx and d/dx of w_yy, both centered.
    let wxxy = |i: isize, j: isize| (wxx(i, j + 1) - wxx(i, j - 1)) / (2.0 * dy);
    let wyyx = |i: isize, j: isize| (wyy(i + 1, j) - wyy(i - 1, j)) / (2.0 * dx);
    let wxy = |i: isize, j: isize| {
        (w(i + 1, j + 1) - w(i - 1, j + 1) - w(i + 1, j - 1) + w(i - 1, j - 1)) / (4.0 * dx * dy)
    };

    let mut out = Vec::new();
    for j in 0..ny {
        out.push(Residual { condition: "clamp value", i: 0, j, value: w(0, j) });
        out.push(Residual {
            condition: "clamp slope",
            i: 0,
            j,
            value: (w(1, j) - w(-1, j)) / (2.0 * dx),
        });
    }
    let jn = ny - 1;
    for i in 0..nx {
        let (x, yn) = (grid.x(i), grid.y(jn));
        out.push(Residual {
            condition: "north moment",
            i,
            j: jn,
            value: nu * wxx(i, jn) + wyy(i, jn) - loads.g_n.eval(x, yn),
        });
        out.push(Residual {
            condition: "north shear",
            i,
            j: jn,
            value: wyyy(i, jn) + (2.0 - nu) * wxxy(i, jn) - loads.h_n.eval(x, yn),
        });
        out.push(Residual {
            condition: "south moment",
            i,
            j: 0,
            value: nu * wxx(i, 0) + wyy(i, 0) - loads.g_s.eval(x, 0.0),
        });
        out.push(Residual {
            condition: "south shear",
            i,
            j: 0,
            value: wyyy(i, 0) + (2.0 - nu) * wxxy(i, 0) - loads.h_s.eval(x, 0.0),
        });
    }
    let ie = nx - 1;
    for j in 0..ny {
        let (xe, y) = (grid.x(ie), grid.y(j));
        out.push(Residual {
            condition: "east moment",
            i: ie,
            j,
            value: wxx(ie, j) + nu * wyy(ie, j) - loads.g_e.eval(xe, y),
        });
        out.push(Residual {
            condition: "east shear",
            i: ie,
            j,
            value: wxxx(ie, j) + (2.0 - nu) * wyyx(ie, j) - loads.h_e.eval(xe, y),
        });
    }
    for j in [0, ny - 1] {
        out.push(Residual { condition: "corner twist", i: ie, j, value: wxy(ie, j) });
    }
    out
}

pub fn max_boundary_residual(
    field: &ExtendedField,
    grid: &GridSpec,
    loads: &BoundaryLoads,
    nu: f64,
) -> f64 {
    boundary_residuals(field, grid, loads, nu)
        .iter()
        .fold(0.0, |m, r| m.max(r.value.abs()))
}

/// The seven ghost values around the north-east free-free corner, in the
/// naming of the corner stencil (O is the corner node itself).
#[derive(Debug, Clone, Copy)]
pub struct CornerOracle {
    pub n: f64,
    pub nn: f64,
    pub nnw: f64,
    pub ne: f64,
    pub e: f64,
    pub ee: f64,
    pub see: f64,
}

/// Read the seven solved corner ghosts back out of a filled field.
pub fn ne_corner_solution(field: &ExtendedField, grid: &GridSpec) -> CornerOracle {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (ic, jc) = (nx - 1, ny - 1);
    CornerOracle {
        n: field.get(ic, jc + 1),
        nn: field.get(ic, jc + 2),
        nnw: field.get(ic - 1, jc + 2),
        ne: field.get(ic + 1, jc + 1),
        e: field.get(ic + 1, jc),
        ee: field.get(ic + 2, jc),
        see: field.get(ic + 2, jc - 1),
    }
}

/// Fully eliminated closed forms for the unloaded north-east corner system,
/// written directly in terms of interior values and the depth-1 edge ghosts
/// the corner solve treats as known.
pub fn ne_corner_closed_forms(field: &ExtendedField, grid: &GridSpec, nu: f64) -> CornerOracle {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (dx, dy) = (grid.dx(), grid.dy());
    let (ic, jc) = (nx - 1, ny - 1);
    let o = field.get(ic, jc);
    let wv = field.get(ic - 1, jc);
    let ww = field.get(ic - 2, jc);
    let s = field.get(ic, jc - 1);
    let ss = field.get(ic, jc - 2);
    let sw = field.get(ic - 1, jc - 1);
    let sww = field.get(ic - 2, jc - 1);
    let ssw = field.get(ic - 1, jc - 2);
    let nw = field.get(ic - 1, jc + 1); // north depth-1 ghost
    let nww = field.get(ic - 2, jc + 1); // north depth-1 ghost
    let se = field.get(ic + 1, jc - 1); // east depth-1 ghost
    let sse = field.get(ic + 1, jc - 2); // east depth-1 ghost
    let rx = (nu - 2.0) * dx * dx / (dy * dy);
    let ry = (nu - 2.0) * dy * dy / (dx * dx);
    CornerOracle {
        e: 2.0 * o - wv,
        n: 2.0 * o - s,
        ne: nw + se - sw,
        ee: (-4.0 * o + 4.0 * wv + 2.0 * se - 2.0 * sw) * rx + (4.0 * o - 4.0 * wv + ww),
        nn: (-4.0 * o + 4.0 * s + 2.0 * nw - 2.0 * sw) * ry + (4.0 * o - 4.0 * s + ss),
        nnw: (2.0 * o - sww - 2.0 * s - 2.0 * nw + 2.0 * sw + nww) * ry
            + (2.0 * nw - 2.0 * sw + ssw),
        see: (2.0 * o - 2.0 * wv - 2.0 * se + 2.0 * sw + sse - ssw) * rx
            + (sww + 2.0 * se - 2.0 * sw),
    }
}

/// Closed forms for the north-east corner under a constant moment load `g`
/// applied on all three free edges, with zero shear loads. The moment rows
/// decouple to `(w_xx-dir) = (w_yy-dir) = g/(1+nu)`, the twist row is
/// unchanged, and the four shear eliminations then run exactly as in the
/// unloaded case but on the g-shifted N/E/NE values.
pub fn ne_corner_closed_forms_moment(
    field: &ExtendedField,
    grid: &GridSpec,
    nu: f64,
    g: f64,
) -> CornerOracle {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (dx, dy) = (grid.dx(), grid.dy());
    let (ic, jc) = (nx - 1, ny - 1);
    let o = field.get(ic, jc);
    let wv = field.get(ic - 1, jc);
    let ww = field.get(ic - 2, jc);
    let s = field.get(ic, jc - 1);
    let ss = field.get(ic, jc - 2);
    let sw = field.get(ic - 1, jc - 1);
    let sww = field.get(ic - 2, jc - 1);
    let ssw = field.get(ic - 1, jc - 2);
    let nw = field.get(ic - 1, jc + 1);
    let nww = field.get(ic - 2, jc + 1);
    let se = field.get(ic + 1, jc - 1);
    let sse = field.get(ic + 1, jc - 2);

    let e = 2.0 * o - wv + g * dx * dx / (1.0 + nu);
    let n = 2.0 * o - s + g * dy * dy / (1.0 + nu);
    let ne = nw + se - sw;
    let cy = (2.0 - nu) * dy * dy / (dx * dx);
    let cx = (2.0 - nu) * dx * dx / (dy * dy);
    // Zero-shear conditions at O, W, and the two east-edge nodes, solved for
    // the remaining depth-2 ghosts with n/e/ne now known.
    let nn = 2.0 * n - 2.0 * s + ss - cy * (ne - 2.0 * n + nw - se + 2.0 * s - sw);
    let nnw = 2.0 * nw - 2.0 * sw + ssw - cy * (n - 2.0 * nw + nww - s + 2.0 * sw - sww);
    let ee = 2.0 * e - 2.0 * wv + ww - cx * (ne - 2.0 * e + se - nw + 2.0 * wv - sw);
    let see = 2.0 * se - 2.0 * sw + sww - cx * (e - 2.0 * se + sse - wv + 2.0 * sw - ssw);
    CornerOracle { n, nn, nnw, ne, e, ee, see }
}

/// y-reflection of an unknown vector about the horizontal midline:
/// w'(i, j) = w(i, ny-1-j).
pub fn reflect_unknowns(grid: &GridSpec, values: &[f64]) -> Vec<f64> {
    let ny = grid.ny as isize;
    grid.unknowns()
        .map(|(i, j)| values[grid.flatten(i, ny - 1 - j).unwrap()])
        .collect()
}
