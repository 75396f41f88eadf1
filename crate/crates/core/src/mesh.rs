//! Uniform rectangular grid, node classification, and ghost-padded field storage.
//!
//! The plate occupies [0, Lx] × [0, Ly], discretized by Nx × Ny nodes with
//! spacings dx = Lx/(Nx−1), dy = Ly/(Ny−1); node (i, j) sits at (i·dx, j·dy).
//! The west edge (i = 0) is clamped, so its nodes carry w ≡ 0 and are not
//! unknowns; every other node is an unknown, giving N = (Nx−1)·Ny unknowns.
//! Unknowns are ordered row-major with j outer and i inner, so the first
//! unknown is (i=1, j=0).
//!
//! [`ExtendedField`] stores nodal values on the grid plus a two-deep ghost
//! margin on all sides (indices i ∈ [−2, Nx+1], j ∈ [−2, Ny+1]). Ghost cells
//! are meaningful only after a fill pass (see the `ghost` module); reading
//! one beforehand is a contract violation, made detectable by a validity
//! flag plus NaN sentinel initialization.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("grid needs Nx, Ny >= 5 to fit the 13-point stencil with two ghost layers (got {nx} x {ny})")]
    TooFewNodes { nx: usize, ny: usize },
    #[error("grid needs positive side lengths (got Lx = {lx}, Ly = {ly})")]
    NonPositiveExtent { lx: f64, ly: f64 },
}

/// Uniform grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, MeshError> {
        if !(lx > 0.0 && ly > 0.0) {
            return Err(MeshError::NonPositiveExtent { lx, ly });
        }
        if nx < 5 || ny < 5 {
            return Err(MeshError::TooFewNodes { nx, ny });
        }
        Ok(Self { lx, ly, nx, ny })
    }

    /// Unit square with the given node counts; panics only on counts < 5.
    pub fn unit_square(nx: usize, ny: usize) -> Self {
        Self::new(1.0, 1.0, nx, ny).expect("node counts below 5")
    }

    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    pub fn x(&self, i: isize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y(&self, j: isize) -> f64 {
        j as f64 * self.dy()
    }

    /// Number of unknowns: every node except the clamped column.
    pub fn n_unknowns(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    pub fn classify(&self, i: isize, j: isize) -> NodeClass {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        if i < 0 || i >= nx || j < 0 || j >= ny {
            NodeClass::Ghost
        } else if i == 0 {
            // The whole west column is clamped, including its corners.
            NodeClass::Clamped
        } else if i == nx - 1 || j == 0 || j == ny - 1 {
            NodeClass::FreeBoundary
        } else {
            NodeClass::Interior
        }
    }

    /// Linear index of an unknown node, j outer / i inner; `None` for
    /// clamped or ghost indices.
    pub fn flatten(&self, i: isize, j: isize) -> Option<usize> {
        match self.classify(i, j) {
            NodeClass::Clamped | NodeClass::Ghost => None,
            _ => Some(j as usize * (self.nx - 1) + (i as usize - 1)),
        }
    }

    /// Inverse of [`flatten`](Self::flatten); panics on out-of-range input.
    pub fn unflatten(&self, k: usize) -> (isize, isize) {
        assert!(k < self.n_unknowns(), "unknown index {k} out of range");
        let per_row = self.nx - 1;
        ((k % per_row + 1) as isize, (k / per_row) as isize)
    }

    /// Iterator over unknown nodes in flatten order.
    pub fn unknowns(&self) -> impl Iterator<Item = (isize, isize)> + '_ {
        let per_row = self.nx - 1;
        (0..self.n_unknowns()).map(move |k| ((k % per_row + 1) as isize, (k / per_row) as isize))
    }
}

/// Role of a padded-box index pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// West-column node (i = 0): w ≡ 0, not an unknown.
    Clamped,
    /// Node on a free edge (north, south, or east).
    FreeBoundary,
    Interior,
    /// Outside the physical node box.
    Ghost,
}

/// Nodal values with a two-deep ghost margin on every side.
#[derive(Debug, Clone)]
pub struct ExtendedField {
    nx: usize,
    ny: usize,
    /// Row-major over (i + 2) ∈ [0, nx+4), stride (ny + 4).
    data: Vec<f64>,
    ghosts_valid: bool,
}

impl ExtendedField {
    /// Zero interior, NaN ghost margin, ghosts not yet valid.
    pub fn new(grid: &GridSpec) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut f = Self {
            nx,
            ny,
            data: vec![f64::NAN; (nx + 4) * (ny + 4)],
            ghosts_valid: false,
        };
        for i in 0..nx as isize {
            for j in 0..ny as isize {
                f.put(i, j, 0.0);
            }
        }
        f
    }

    /// Scatter a flattened unknown vector; the clamped column is set to zero.
    pub fn from_unknowns(grid: &GridSpec, values: &[f64]) -> Self {
        assert_eq!(values.len(), grid.n_unknowns(), "state length mismatch");
        let mut f = Self::new(grid);
        for (k, (i, j)) in grid.unknowns().enumerate() {
            f.put(i, j, values[k]);
        }
        f
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    fn idx(&self, i: isize, j: isize) -> usize {
        debug_assert!(
            (-2..self.nx as isize + 2).contains(&i) && (-2..self.ny as isize + 2).contains(&j),
            "index ({i}, {j}) outside the padded box"
        );
        (i + 2) as usize * (self.ny + 4) + (j + 2) as usize
    }

    fn is_physical(&self, i: isize, j: isize) -> bool {
        (0..self.nx as isize).contains(&i) && (0..self.ny as isize).contains(&j)
    }

    /// Read any cell of the padded box. Reading a ghost cell before a fill
    /// pass is a contract violation and panics.
    pub fn get(&self, i: isize, j: isize) -> f64 {
        if !self.is_physical(i, j) {
            assert!(
                self.ghosts_valid,
                "ghost cell ({i}, {j}) read before fill_all (stale or missing ghost pass)"
            );
        }
        self.data[self.idx(i, j)]
    }

    /// Write a physical cell; invalidates any previously filled ghosts.
    pub fn put(&mut self, i: isize, j: isize, value: f64) {
        assert!(self.is_physical(i, j), "put() only writes physical nodes, got ({i}, {j})");
        let k = self.idx(i, j);
        self.data[k] = value;
        self.ghosts_valid = false;
    }

    /// Ghost-module backdoor: write any padded cell without touching the
    /// validity flag.
    pub(crate) fn put_raw(&mut self, i: isize, j: isize, value: f64) {
        let k = self.idx(i, j);
        self.data[k] = value;
    }

    /// Read without the validity check (used while ghosts are being built).
    pub(crate) fn get_raw(&self, i: isize, j: isize) -> f64 {
        self.data[self.idx(i, j)]
    }

    pub(crate) fn set_ghosts_valid(&mut self) {
        self.ghosts_valid = true;
    }

    pub fn ghosts_valid(&self) -> bool {
        self.ghosts_valid
    }

    /// Overwrite the whole padded box (ghosts included) from a closure of
    /// physical coordinates, and mark ghosts valid. Meant for tests that
    /// inject exact ghost values for analytic fields.
    pub fn fill_with_exact(&mut self, grid: &GridSpec, f: impl Fn(f64, f64) -> f64) {
        for i in -2..self.nx as isize + 2 {
            for j in -2..self.ny as isize + 2 {
                self.put_raw(i, j, f(grid.x(i), grid.y(j)));
            }
        }
        self.ghosts_valid = true;
    }

    /// Gather the unknown-ordered values back out of the field.
    pub fn unknown_values(&self, grid: &GridSpec) -> Vec<f64> {
        grid.unknowns().map(|(i, j)| self.get(i, j)).collect()
    }
}
