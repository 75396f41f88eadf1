//! Banded LU factorization with partial pivoting.
//!
//! The implicit time step solves (I + c·k0·I − c·k1·L + c²·S)·v = r, where S
//! and L couple each node to neighbors at most two grid lines away, so the
//! matrix has bandwidth about 2·(nx − 1) on either side of the diagonal.
//! Factoring in band storage costs O(n·kl·ku) instead of O(n³), which is
//! what keeps moderately fine grids fast.
//!
//! Storage follows the usual convention for band factorizations: column j of
//! the matrix lives in column j of a (2·kl + ku + 1) × n array, with the
//! diagonal at row kl + ku and kl extra rows on top as fill-in workspace for
//! row swaps during pivoting.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BandError {
    #[error("banded matrix is singular: zero pivot at column {col}")]
    SingularPivot { col: usize },
    #[error("entry ({row}, {col}) lies outside the declared bandwidths kl={kl}, ku={ku}")]
    OutsideBand { row: usize, col: usize, kl: usize, ku: usize },
}

/// Square banded matrix, kl subdiagonals and ku superdiagonals.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// (2·kl + ku + 1) rows by n columns, column-major within each column:
    /// entry (i, j) sits at data[j * ldab + (kl + ku + i − j)].
    data: Vec<f64>,
}

impl BandedMatrix {
    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, data: vec![0.0; ldab * n] }
    }

    /// Build from (row, col, value) triplets, sizing the bandwidths to the
    /// widest entry present. Duplicate positions accumulate.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for &(i, j, _) in triplets {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let mut m = Self::zeros(n, kl, ku);
        for &(i, j, v) in triplets {
            m.add(i, j, v).expect("triplet inside measured band");
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<(), BandError> {
        if i >= self.n || j >= self.n || i + self.ku < j || j + self.kl < i {
            return Err(BandError::OutsideBand { row: i, col: j, kl: self.kl, ku: self.ku });
        }
        let ldab = self.ldab();
        self.data[j * ldab + (self.kl + self.ku + i - j)] += v;
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= self.n || j >= self.n || i + self.ku < j || j + self.kl < i {
            return 0.0;
        }
        self.data[j * self.ldab() + (self.kl + self.ku + i - j)]
    }

    /// LU factorization with partial pivoting, consuming the matrix.
    pub fn factor(mut self) -> Result<BandedLu, BandError> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let ldab = self.ldab();
        let mut pivots = vec![0usize; n];

        // Entry (i, j) of the working array: data[j * ldab + kl + ku + i − j],
        // valid for j − ku − kl ≤ i ≤ j + kl; the top kl rows hold fill-in.
        let idx = |i: usize, j: usize| j * ldab + kl + ku + i - j;

        for k in 0..n {
            // Pivot search over the column's subdiagonal entries.
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut pmax = self.data[idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[idx(i, k)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(BandError::SingularPivot { col: k });
            }
            pivots[k] = p;
            // Swap rows k and p across all columns where both are in band.
            if p != k {
                let jend = (k + kl + ku).min(n - 1);
                for j in k..=jend {
                    let a = idx(k, j);
                    let b = idx(p, j);
                    self.data.swap(a, b);
                }
            }
            // Eliminate below the pivot.
            let piv = self.data[idx(k, k)];
            for i in k + 1..=last {
                let m = self.data[idx(i, k)] / piv;
                self.data[idx(i, k)] = m;
                if m != 0.0 {
                    let jend = (k + kl + ku).min(n - 1);
                    for j in k + 1..=jend {
                        let a = self.data[idx(k, j)];
                        if a != 0.0 {
                            self.data[idx(i, j)] -= m * a;
                        }
                    }
                }
            }
        }

        Ok(BandedLu { n, kl, ku, data: self.data, pivots })
    }
}

/// Factored form; solves repeated right-hand sides without refactoring.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n, "right-hand side length mismatch");
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let ldab = 2 * kl + ku + 1;
        let idx = |i: usize, j: usize| j * ldab + kl + ku + i - j;
        let mut x = rhs.to_vec();

        // Forward: apply the pivot permutation and the unit-lower factor.
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=last {
                    x[i] -= self.data[idx(i, k)] * xk;
                }
            }
        }
        // Backward: solve the upper factor of bandwidth kl + ku.
        for k in (0..n).rev() {
            let first = k.saturating_sub(kl + ku);
            let mut s = x[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.data[idx(k, j)] * x[j];
            }
            let _ = first;
            x[k] = s / self.data[idx(k, k)];
        }
        x
    }
}
