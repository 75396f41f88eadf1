//! Spatial discretization and assembly of the semi-discrete system.
//!
//! The plate equation
//!
//!   w_tt + D·Δ²w + k0·w_t − k1·Δw_t + a1·w_x + a2·w_y = f(x, y, t)
//!
//! reduces, with v = w_t and ghost fills eliminating the boundary
//! conditions, to an affine first-order system y' = A·y + b(t) on the state
//! y = [w; v] over the unknown nodes. Because every ghost value is affine in
//! the interior values and the boundary loads, A can be assembled one column
//! at a time by pushing unit basis vectors through the matrix-free
//! right-hand side with loads and forcing switched off; b(t) is the
//! right-hand side of the zero state.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::ghost::{fill_all, BoundaryLoads, GhostError};
use crate::mesh::{ExtendedField, GridSpec};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("stiffness must be positive, got D = {0}")]
    NonPositiveStiffness(f64),
    #[error("Poisson ratio must lie strictly between 0 and 0.5, got {0}")]
    PoissonOutOfRange(f64),
    #[error("damping coefficients must be non-negative, got k0 = {k0}, k1 = {k1}")]
    NegativeDamping { k0: f64, k1: f64 },
    #[error("ghost margin not filled; run the boundary fill before applying stencils")]
    GhostsNotFilled,
    #[error("state vector has length {got}, expected {expected}")]
    StateLength { got: usize, expected: usize },
    #[error("non-finite state entry at index {0}")]
    NonFiniteState(usize),
    #[error(transparent)]
    Ghost(#[from] GhostError),
}

/// Physical coefficients of the plate equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateParams {
    /// Flexural stiffness D > 0.
    pub d: f64,
    /// Poisson ratio, 0 < ν < 1/2.
    pub nu: f64,
    /// Frictional damping k0 ≥ 0 (acts on w_t).
    pub k0: f64,
    /// Viscoelastic-type damping k1 ≥ 0 (acts on Δw_t).
    pub k1: f64,
    /// Flow coupling on w_x.
    pub a1: f64,
    /// Flow coupling on w_y.
    pub a2: f64,
}

impl PlateParams {
    pub fn new(d: f64, nu: f64, k0: f64, k1: f64, a1: f64, a2: f64) -> Result<Self, OperatorError> {
        let p = Self { d, nu, k0, k1, a1, a2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        if !(self.d > 0.0) {
            return Err(OperatorError::NonPositiveStiffness(self.d));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(OperatorError::PoissonOutOfRange(self.nu));
        }
        if !(self.k0 >= 0.0 && self.k1 >= 0.0) {
            return Err(OperatorError::NegativeDamping { k0: self.k0, k1: self.k1 });
        }
        Ok(())
    }
}

/// Distributed forcing f(x, y, t), with an explicit zero case so the affine
/// part can be recognized as time-independent.
#[derive(Clone)]
pub enum ForcingSpec {
    Zero,
    Func(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl ForcingSpec {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            ForcingSpec::Zero => 0.0,
            ForcingSpec::Func(f) => f(x, y, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingSpec::Zero)
    }
}

impl std::fmt::Debug for ForcingSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForcingSpec::Zero => write!(f, "Zero"),
            ForcingSpec::Func(_) => write!(f, "Func(..)"),
        }
    }
}

fn require_ghosts(field: &ExtendedField) -> Result<(), OperatorError> {
    if field.ghosts_valid() {
        Ok(())
    } else {
        Err(OperatorError::GhostsNotFilled)
    }
}

/// 13-point biharmonic Δ²w at every unknown node.
pub fn apply_biharmonic(field: &ExtendedField, grid: &GridSpec) -> Result<Vec<f64>, OperatorError> {
    require_ghosts(field)?;
    let (dx, dy) = (grid.dx(), grid.dy());
    let (cx, cy) = (1.0 / dx.powi(4), 1.0 / dy.powi(4));
    let cxy = 2.0 / (dx * dx * dy * dy);
    let mut out = Vec::with_capacity(grid.n_unknowns());
    for (i, j) in grid.unknowns() {
        let o = field.get(i, j);
        let e = field.get(i + 1, j);
        let w = field.get(i - 1, j);
        let n = field.get(i, j + 1);
        let s = field.get(i, j - 1);
        let ee = field.get(i + 2, j);
        let ww = field.get(i - 2, j);
        let nn = field.get(i, j + 2);
        let ss = field.get(i, j - 2);
        let ne = field.get(i + 1, j + 1);
        let nw = field.get(i - 1, j + 1);
        let se = field.get(i + 1, j - 1);
        let sw = field.get(i - 1, j - 1);
        let x4 = (ww - 4.0 * w + 6.0 * o - 4.0 * e + ee) * cx;
        let y4 = (ss - 4.0 * s + 6.0 * o - 4.0 * n + nn) * cy;
        let cross = ((ne - 2.0 * n + nw) - 2.0 * (e - 2.0 * o + w) + (se - 2.0 * s + sw)) * cxy;
        out.push(x4 + y4 + cross);
    }
    Ok(out)
}

/// 5-point Laplacian Δw at every unknown node.
pub fn apply_laplacian(field: &ExtendedField, grid: &GridSpec) -> Result<Vec<f64>, OperatorError> {
    require_ghosts(field)?;
    let (dx2, dy2) = (grid.dx() * grid.dx(), grid.dy() * grid.dy());
    let mut out = Vec::with_capacity(grid.n_unknowns());
    for (i, j) in grid.unknowns() {
        let o = field.get(i, j);
        let xx = (field.get(i - 1, j) - 2.0 * o + field.get(i + 1, j)) / dx2;
        let yy = (field.get(i, j - 1) - 2.0 * o + field.get(i, j + 1)) / dy2;
        out.push(xx + yy);
    }
    Ok(out)
}

/// Flow term a1·w_x + a2·w_y (central differences) at every unknown node.
pub fn apply_flow(
    field: &ExtendedField,
    grid: &GridSpec,
    a1: f64,
    a2: f64,
) -> Result<Vec<f64>, OperatorError> {
    require_ghosts(field)?;
    let (c1, c2) = (a1 / (2.0 * grid.dx()), a2 / (2.0 * grid.dy()));
    let mut out = Vec::with_capacity(grid.n_unknowns());
    for (i, j) in grid.unknowns() {
        let wx = field.get(i + 1, j) - field.get(i - 1, j);
        let wy = field.get(i, j + 1) - field.get(i, j - 1);
        out.push(c1 * wx + c2 * wy);
    }
    Ok(out)
}

/// Matrix-free right-hand side of the first-order system at state y = [w; v]
/// and time t. The w-field ghosts use the boundary loads; the v-field ghosts
/// (needed only when k1 > 0) use zero loads, since the boundary data are
/// static and differentiate to zero.
pub fn rhs(
    y: &[f64],
    t: f64,
    grid: &GridSpec,
    params: &PlateParams,
    loads: &BoundaryLoads,
    forcing: &ForcingSpec,
) -> Result<Vec<f64>, OperatorError> {
    let n = grid.n_unknowns();
    if y.len() != 2 * n {
        return Err(OperatorError::StateLength { got: y.len(), expected: 2 * n });
    }
    if let Some(k) = y.iter().position(|v| !v.is_finite()) {
        return Err(OperatorError::NonFiniteState(k));
    }
    let (w_part, v_part) = y.split_at(n);

    let mut wf = ExtendedField::from_unknowns(grid, w_part);
    fill_all(&mut wf, grid, loads, params.nu)?;
    let bih = apply_biharmonic(&wf, grid)?;

    let mut out = vec![0.0; 2 * n];
    out[..n].copy_from_slice(v_part);
    for (k, a) in out[n..].iter_mut().enumerate() {
        *a = -params.d * bih[k];
    }
    if params.a1 != 0.0 || params.a2 != 0.0 {
        let flow = apply_flow(&wf, grid, params.a1, params.a2)?;
        for (k, a) in out[n..].iter_mut().enumerate() {
            *a -= flow[k];
        }
    }
    if params.k0 != 0.0 {
        for (k, a) in out[n..].iter_mut().enumerate() {
            *a -= params.k0 * v_part[k];
        }
    }
    if params.k1 != 0.0 {
        let mut vf = ExtendedField::from_unknowns(grid, v_part);
        fill_all(&mut vf, grid, &BoundaryLoads::zero(), params.nu)?;
        let lap = apply_laplacian(&vf, grid)?;
        for (k, a) in out[n..].iter_mut().enumerate() {
            *a += params.k1 * lap[k];
        }
    }
    if !forcing.is_zero() {
        for (k, (i, j)) in grid.unknowns().enumerate() {
            out[n + k] += forcing.eval(grid.x(i), grid.y(j), t);
        }
    }
    Ok(out)
}

/// The assembled affine system y' = A·y + b(t) with
/// A = [[0, I], [−S, −k0·I + k1·L]], where S = D·B + a1·Dx + a2·Dy collects
/// the ghost-eliminated biharmonic and flow stencils and L is the
/// ghost-eliminated Laplacian.
#[derive(Debug, Clone)]
pub struct SemiDiscreteSystem {
    pub grid: GridSpec,
    pub params: PlateParams,
    pub loads: BoundaryLoads,
    pub forcing: ForcingSpec,
    n: usize,
    s_triplets: Vec<(usize, usize, f64)>,
    l_triplets: Vec<(usize, usize, f64)>,
    /// Load contribution to the acceleration equation (time-independent).
    c0: Vec<f64>,
}

/// Assemble the system column-by-column: each unit basis field is
/// ghost-filled with zero loads and pushed through the stencils, so the
/// resulting sparse blocks agree with the matrix-free right-hand side by
/// construction. b(t) is recovered as the right-hand side of the zero state.
pub fn assemble(
    params: &PlateParams,
    grid: &GridSpec,
    loads: &BoundaryLoads,
    forcing: &ForcingSpec,
) -> Result<SemiDiscreteSystem, OperatorError> {
    params.validate()?;
    let n = grid.n_unknowns();
    let zero_loads = BoundaryLoads::zero();
    let mut s_triplets = Vec::new();
    let mut l_triplets = Vec::new();

    let mut basis = vec![0.0; n];
    for col in 0..n {
        basis[col] = 1.0;
        let mut field = ExtendedField::from_unknowns(grid, &basis);
        fill_all(&mut field, grid, &zero_loads, params.nu)?;
        basis[col] = 0.0;

        let bih = apply_biharmonic(&field, grid)?;
        let flow = if params.a1 != 0.0 || params.a2 != 0.0 {
            Some(apply_flow(&field, grid, params.a1, params.a2)?)
        } else {
            None
        };
        for row in 0..n {
            let mut v = params.d * bih[row];
            if let Some(fl) = &flow {
                v += fl[row];
            }
            if v != 0.0 {
                s_triplets.push((row, col, v));
            }
        }
        if params.k1 != 0.0 {
            let lap = apply_laplacian(&field, grid)?;
            for row in 0..n {
                if lap[row] != 0.0 {
                    l_triplets.push((row, col, lap[row]));
                }
            }
        }
    }

    // Affine offset from the boundary loads: the ghost fill of the zero
    // field carries exactly the load terms.
    let c0 = if loads.is_zero() {
        vec![0.0; n]
    } else {
        let mut field = ExtendedField::from_unknowns(grid, &vec![0.0; n]);
        fill_all(&mut field, grid, loads, params.nu)?;
        let bih = apply_biharmonic(&field, grid)?;
        let mut c: Vec<f64> = bih.iter().map(|b| -params.d * b).collect();
        if params.a1 != 0.0 || params.a2 != 0.0 {
            let flow = apply_flow(&field, grid, params.a1, params.a2)?;
            for (ck, fk) in c.iter_mut().zip(&flow) {
                *ck -= fk;
            }
        }
        c
    };

    Ok(SemiDiscreteSystem {
        grid: *grid,
        params: *params,
        loads: loads.clone(),
        forcing: forcing.clone(),
        n,
        s_triplets,
        l_triplets,
        c0,
    })
}

impl SemiDiscreteSystem {
    /// Number of scalar unknowns per field (w or v).
    pub fn n_unknowns(&self) -> usize {
        self.n
    }

    /// State dimension 2N.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn s_triplets(&self) -> &[(usize, usize, f64)] {
        &self.s_triplets
    }

    pub fn l_triplets(&self) -> &[(usize, usize, f64)] {
        &self.l_triplets
    }

    /// True when b(t) is constant in time (no distributed forcing).
    pub fn b_is_static(&self) -> bool {
        self.forcing.is_zero()
    }

    /// Affine part b(t), length 2N: zero in the w-block, load plus forcing
    /// contributions in the v-block.
    pub fn b(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.n];
        out[self.n..].copy_from_slice(&self.c0);
        if !self.forcing.is_zero() {
            for (k, (i, j)) in self.grid.unknowns().enumerate() {
                out[self.n + k] += self.forcing.eval(self.grid.x(i), self.grid.y(j), t);
            }
        }
        out
    }

    /// Sparse application y ↦ A·y.
    pub fn apply_a(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), 2 * self.n, "state length mismatch");
        let n = self.n;
        let mut out = vec![0.0; 2 * n];
        out[..n].copy_from_slice(&y[n..]);
        for &(r, c, v) in &self.s_triplets {
            out[n + r] -= v * y[c];
        }
        if self.params.k0 != 0.0 {
            for r in 0..n {
                out[n + r] -= self.params.k0 * y[n + r];
            }
        }
        if self.params.k1 != 0.0 {
            for &(r, c, v) in &self.l_triplets {
                out[n + r] += self.params.k1 * v * y[n + c];
            }
        }
        out
    }

    /// Matrix-free right-hand side through the ghost fills (bypasses the
    /// assembled blocks; used to cross-check the assembly).
    pub fn rhs(&self, y: &[f64], t: f64) -> Result<Vec<f64>, OperatorError> {
        rhs(y, t, &self.grid, &self.params, &self.loads, &self.forcing)
    }

    /// Coordinate triplets of the full 2N×2N matrix A.
    pub fn a_triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n;
        let mut t = Vec::with_capacity(n + self.s_triplets.len() + self.l_triplets.len());
        for i in 0..n {
            t.push((i, n + i, 1.0));
        }
        for &(r, c, v) in &self.s_triplets {
            t.push((n + r, c, -v));
        }
        // The damping blocks overlap on the diagonal; accumulate explicitly.
        if self.params.k1 != 0.0 {
            let mut diag = vec![0.0; n];
            for &(r, c, v) in &self.l_triplets {
                if r == c {
                    diag[r] += self.params.k1 * v;
                } else {
                    t.push((n + r, n + c, self.params.k1 * v));
                }
            }
            for (r, d) in diag.into_iter().enumerate() {
                let v = d - self.params.k0;
                if v != 0.0 {
                    t.push((n + r, n + r, v));
                }
            }
        } else if self.params.k0 != 0.0 {
            for r in 0..n {
                t.push((n + r, n + r, -self.params.k0));
            }
        }
        t
    }

    pub fn a_dense(&self) -> DMatrix<f64> {
        let dim = 2 * self.n;
        let mut m = DMatrix::zeros(dim, dim);
        for (r, c, v) in self.a_triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Exact ∞-norm (maximum absolute row sum) of A.
    pub fn a_inf_norm(&self) -> f64 {
        let n = self.n;
        let mut rows = vec![0.0f64; n];
        for &(r, _, v) in &self.s_triplets {
            rows[r] += v.abs();
        }
        let mut diag = vec![-self.params.k0; n];
        if self.params.k1 != 0.0 {
            for &(r, c, v) in &self.l_triplets {
                if r == c {
                    diag[r] += self.params.k1 * v;
                } else {
                    rows[r] += (self.params.k1 * v).abs();
                }
            }
        }
        let lower = rows
            .iter()
            .zip(&diag)
            .map(|(s, d)| s + d.abs())
            .fold(0.0, f64::max);
        lower.max(1.0)
    }

    /// Debug dump of A in "row col value" coordinate-triplet lines.
    pub fn write_triplets(&self, out: &mut impl Write) -> io::Result<()> {
        let mut t = self.a_triplets();
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        writeln!(out, "{} {} {}", 2 * self.n, 2 * self.n, t.len())?;
        for (r, c, v) in t {
            writeln!(out, "{} {} {:.16e}", r, c, v)?;
        }
        Ok(())
    }
}
