//! Sparse operators with labeled row and column spaces.

use std::fmt;
use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Function and form spaces an operator maps between.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Space {
    V,
    VStar,
    E,
    EStar,
    F,
    FStar,
    X,
    Z1,
    Gamma,
    /// Stacked `(z1, eps)` pairs.
    MeanCurl,
    /// Anything else (saddle systems, stacked blocks).
    Other,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug)]
pub struct SparseOperator {
    pub row_space: Space,
    pub col_space: Space,
    pub mat: CsrMatrix<f64>,
}

impl SparseOperator {
    /// Assembles from triplets; duplicate entries are summed.
    pub fn from_triplets(rows: usize, cols: usize, row_space: Space, col_space: Space, triplets: &[(usize, usize, f64)]) -> Self {
        let mut coo = CooMatrix::new(rows, cols);
        for &(r, c, v) in triplets {
            coo.push(r, c, v);
        }
        let mut mat = CsrMatrix::from(&coo);
        mat = drop_zeros(&mat);
        SparseOperator { row_space, col_space, mat }
    }

    pub fn from_csr(row_space: Space, col_space: Space, mat: CsrMatrix<f64>) -> Self {
        SparseOperator { row_space, col_space, mat }
    }

    pub fn identity(n: usize, space: Space) -> Self {
        SparseOperator { row_space: space, col_space: space, mat: CsrMatrix::identity(n) }
    }

    pub fn diagonal(values: &[f64], space: Space) -> Self {
        let t: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(values.len(), values.len(), space, space, &t)
    }

    pub fn zeros(rows: usize, cols: usize, row_space: Space, col_space: Space) -> Self {
        SparseOperator { row_space, col_space, mat: CsrMatrix::zeros(rows, cols) }
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn transpose(&self) -> Self {
        SparseOperator { row_space: self.col_space, col_space: self.row_space, mat: self.mat.transpose() }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols(), "operator applied to vector of wrong length");
        let mut y = DVector::zeros(self.nrows());
        for (r, row) in self.mat.row_iter().enumerate() {
            let mut s = 0.0;
            for (&c, &v) in row.col_indices().iter().zip(row.values()) {
                s += v * x[c];
            }
            y[r] = s;
        }
        y
    }

    /// Composition `self * other` with a dimension check.
    pub fn try_compose(&self, other: &SparseOperator) -> Result<Self> {
        if self.ncols() != other.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} ({} <- {}) times {}x{} ({} <- {})",
                self.nrows(),
                self.ncols(),
                self.row_space,
                self.col_space,
                other.nrows(),
                other.ncols(),
                other.row_space,
                other.col_space
            )));
        }
        Ok(SparseOperator { row_space: self.row_space, col_space: other.col_space, mat: &self.mat * &other.mat })
    }

    pub fn scale(&self, s: f64) -> Self {
        SparseOperator { row_space: self.row_space, col_space: self.col_space, mat: &self.mat * s }
    }

    pub fn with_spaces(mut self, row_space: Space, col_space: Space) -> Self {
        self.row_space = row_space;
        self.col_space = col_space;
        self
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for (r, c, &v) in self.mat.triplet_iter() {
            d[(r, c)] += v;
        }
        d
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.mat.triplet_iter().map(|(r, c, &v)| (r, c, v)).collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.mat.values().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows().min(self.ncols())];
        for (r, c, &v) in self.mat.triplet_iter() {
            if r == c {
                d[r] += v;
            }
        }
        d
    }

    /// Entry lookup (sum of stored values at `(r, c)`).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = self.mat.row(r);
        row.col_indices().iter().zip(row.values()).filter(|(&cc, _)| cc == c).map(|(_, &v)| v).sum()
    }

    /// Keeps the rows listed in `keep` (in that order).
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        let mut t = Vec::new();
        for (i, &r) in keep.iter().enumerate() {
            let row = self.mat.row(r);
            for (&c, &v) in row.col_indices().iter().zip(row.values()) {
                t.push((i, c, v));
            }
        }
        Self::from_triplets(keep.len(), self.ncols(), self.row_space, self.col_space, &t)
    }

    /// Restricts to the given rows and columns.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut cmap = vec![usize::MAX; self.ncols()];
        for (i, &c) in cols.iter().enumerate() {
            cmap[c] = i;
        }
        let mut t = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            let row = self.mat.row(r);
            for (&c, &v) in row.col_indices().iter().zip(row.values()) {
                if cmap[c] != usize::MAX {
                    t.push((i, cmap[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), self.row_space, self.col_space, &t)
    }

    /// Block-diagonal stacking.
    pub fn block_diag(blocks: &[&SparseOperator], row_space: Space, col_space: Space) -> Self {
        let mut t = Vec::new();
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for (r, c, v) in b.triplets() {
                t.push((r0 + r, c0 + c, v));
            }
            r0 += b.nrows();
            c0 += b.ncols();
        }
        Self::from_triplets(r0, c0, row_space, col_space, &t)
    }

    /// Dense-layout block assembly from optional sparse blocks.
    pub fn blocks(grid: &[Vec<Option<&SparseOperator>>], row_sizes: &[usize], col_sizes: &[usize]) -> Self {
        let mut t = Vec::new();
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    assert_eq!((b.nrows(), b.ncols()), (row_sizes[bi], col_sizes[bj]));
                    for (r, c, v) in b.triplets() {
                        t.push((r0 + r, c0 + c, v));
                    }
                }
                c0 += col_sizes[bj];
            }
            r0 += row_sizes[bi];
        }
        Self::from_triplets(r0, col_sizes.iter().sum(), Space::Other, Space::Other, &t)
    }

    /// Writes the `rows cols nnz` triplet dump.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.nrows(), self.ncols(), self.nnz())?;
        for (r, c, v) in self.mat.triplet_iter() {
            writeln!(w, "{} {} {:.17e}", r, c, v)?;
        }
        Ok(())
    }
}

fn drop_zeros(m: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    if m.values().iter().all(|&v| v != 0.0) {
        return m.clone();
    }
    m.filter(|_, _, &v| v != 0.0)
}

impl<'a> Mul<&'a SparseOperator> for &'a SparseOperator {
    type Output = SparseOperator;
    fn mul(self, rhs: &'a SparseOperator) -> SparseOperator {
        self.try_compose(rhs).unwrap()
    }
}

impl<'a> Mul<&'a DVector<f64>> for &'a SparseOperator {
    type Output = DVector<f64>;
    fn mul(self, rhs: &'a DVector<f64>) -> DVector<f64> {
        self.apply(rhs)
    }
}

impl<'a> Add<&'a SparseOperator> for &'a SparseOperator {
    type Output = SparseOperator;
    fn add(self, rhs: &'a SparseOperator) -> SparseOperator {
        SparseOperator { row_space: self.row_space, col_space: self.col_space, mat: &self.mat + &rhs.mat }
    }
}

impl<'a> Sub<&'a SparseOperator> for &'a SparseOperator {
    type Output = SparseOperator;
    fn sub(self, rhs: &'a SparseOperator) -> SparseOperator {
        SparseOperator { row_space: self.row_space, col_space: self.col_space, mat: &self.mat - &rhs.mat }
    }
}

impl Neg for &SparseOperator {
    type Output = SparseOperator;
    fn neg(self) -> SparseOperator {
        self.scale(-1.0)
    }
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F)`, or the absolute difference when both vanish.
pub fn relative_residual(a: &SparseOperator, b: &SparseOperator) -> f64 {
    let d = (a - b).frobenius();
    let s = a.frobenius().max(b.frobenius());
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let a = SparseOperator::from_triplets(2, 2, Space::V, Space::V, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0), (1, 0, -1.0)]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn compose_checks_dimensions() {
        let a = SparseOperator::identity(3, Space::V);
        let b = SparseOperator::identity(2, Space::E);
        assert!(matches!(a.try_compose(&b), Err(Error::DimensionMismatch(_))));
        let c = SparseOperator::zeros(3, 2, Space::V, Space::E);
        assert_eq!(a.try_compose(&c).unwrap().col_space, Space::E);
    }

    #[test]
    fn triplet_dump_header() {
        let a = SparseOperator::diagonal(&[1.0, 2.0], Space::E);
        let mut out = Vec::new();
        a.write_triplets(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("2 2 2\n"));
    }
}
