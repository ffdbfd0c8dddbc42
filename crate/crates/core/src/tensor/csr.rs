use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Scalar};

/// Largest dimension or nonzero count representable with 32-bit indices.
pub const MAX_INDEX: usize = (1 << 31) - 1;

#[derive(Debug, PartialEq, Eq)]
struct Structure {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
}

/// Structure of a CSR matrix without values.
///
/// Cloning is cheap (reference counted); a weight matrix, its gradient and
/// its momentum buffer share one pattern.
#[derive(Clone, Debug)]
pub struct SparsityPattern(Arc<Structure>);

impl PartialEq for SparsityPattern {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Eq for SparsityPattern {}

fn check_dims(nrows: usize, ncols: usize, nnz: usize) -> Result<()> {
    if nrows > MAX_INDEX || ncols > MAX_INDEX || nnz > MAX_INDEX {
        return Err(Error::invalid(format!(
            "csr {nrows}x{ncols} with {nnz} nonzeros exceeds 32-bit index range"
        )));
    }
    Ok(())
}

impl SparsityPattern {
    /// Validates and wraps raw CSR structure arrays.
    pub fn new(nrows: usize, ncols: usize, row_ptr: Vec<u32>, col_idx: Vec<u32>) -> Result<Self> {
        check_dims(nrows, ncols, col_idx.len())?;
        if row_ptr.len() != nrows + 1 {
            return Err(Error::invalid(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                nrows + 1
            )));
        }
        if row_ptr[0] != 0 {
            return Err(Error::invalid("row_ptr[0] must be 0"));
        }
        if row_ptr[nrows] as usize != col_idx.len() {
            return Err(Error::invalid(format!(
                "row_ptr[nrows] = {} but nnz = {}",
                row_ptr[nrows],
                col_idx.len()
            )));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if lo > hi {
                return Err(Error::invalid(format!("row_ptr decreases at row {i}")));
            }
            let cols = &col_idx[lo as usize..hi as usize];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "column indices of row {i} not strictly increasing"
                )));
            }
            if let Some(&c) = cols.last() {
                if c as usize >= ncols {
                    return Err(Error::invalid(format!("column index {c} out of range in row {i}")));
                }
            }
        }
        Ok(Self(Arc::new(Structure {
            nrows,
            ncols,
            row_ptr,
            col_idx,
        })))
    }

    /// Builds a pattern from linear positions `row * ncols + col`; they must
    /// be sorted ascending and distinct.
    pub fn from_sorted_positions(nrows: usize, ncols: usize, positions: &[usize]) -> Result<Self> {
        check_dims(nrows, ncols, positions.len())?;
        let mut row_ptr = vec![0u32; nrows + 1];
        let mut col_idx = Vec::with_capacity(positions.len());
        for &p in positions {
            let (r, c) = (p / ncols.max(1), p % ncols.max(1));
            if r >= nrows {
                return Err(Error::invalid(format!("position {p} out of range")));
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c as u32);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(nrows, ncols, row_ptr, col_idx)
    }

    pub fn full(nrows: usize, ncols: usize) -> Result<Self> {
        check_dims(nrows, ncols, nrows * ncols)?;
        let row_ptr = (0..=nrows).map(|i| (i * ncols) as u32).collect();
        let col_idx = (0..nrows).flat_map(|_| 0..ncols as u32).collect();
        Self::new(nrows, ncols, row_ptr, col_idx)
    }

    pub fn empty(nrows: usize, ncols: usize) -> Result<Self> {
        check_dims(nrows, ncols, 0)?;
        Self::new(nrows, ncols, vec![0; nrows + 1], Vec::new())
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.0.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.0.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.0.col_idx.len()
    }

    #[inline]
    pub fn row_ptr(&self) -> &[u32] {
        &self.0.row_ptr
    }

    #[inline]
    pub fn col_idx(&self) -> &[u32] {
        &self.0.col_idx
    }

    /// Range into `col_idx`/`values` for row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.0.row_ptr[i] as usize..self.0.row_ptr[i + 1] as usize
    }

    pub fn density(&self) -> f64 {
        let size = self.nrows() * self.ncols();
        if size == 0 {
            0.0
        } else {
            self.nnz() as f64 / size as f64
        }
    }

    /// Iterates `(row, col)` of every stored entry in CSR order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nrows()).flat_map(move |i| self.row_range(i).map(move |k| (i, self.0.col_idx[k] as usize)))
    }

    /// Binary `nrows × ncols` mask with ones on the pattern.
    pub fn to_mask<T: Scalar>(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.nrows(), self.ncols());
        for (i, j) in self.positions() {
            m.set(i, j, T::one());
        }
        m
    }
}

/// Compressed sparse row matrix with 32-bit indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T = f32> {
    pattern: SparsityPattern,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn new(pattern: SparsityPattern, values: Vec<T>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::invalid(format!(
                "csr values length {} != nnz {}",
                values.len(),
                pattern.nnz()
            )));
        }
        Ok(Self { pattern, values })
    }

    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<u32>,
        col_idx: Vec<u32>,
        values: Vec<T>,
    ) -> Result<Self> {
        Self::new(SparsityPattern::new(nrows, ncols, row_ptr, col_idx)?, values)
    }

    pub fn zeros_like(pattern: &SparsityPattern) -> Self {
        Self {
            pattern: pattern.clone(),
            values: vec![T::zero(); pattern.nnz()],
        }
    }

    /// Compresses a dense matrix; exact zeros are dropped.
    pub fn from_dense(d: &DenseMatrix<T>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(d.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0u32);
        for i in 0..d.rows() {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v != T::zero() {
                    col_idx.push(j as u32);
                    values.push(v);
                }
            }
            check_dims(d.rows(), d.cols(), col_idx.len())?;
            row_ptr.push(col_idx.len() as u32);
        }
        Self::from_parts(d.rows(), d.cols(), row_ptr, col_idx, values)
    }

    /// Picks the entries of `d` at the positions of `pattern`, zeros included.
    pub fn gather(pattern: &SparsityPattern, d: &DenseMatrix<T>) -> Result<Self> {
        if d.shape() != (pattern.nrows(), pattern.ncols()) {
            return Err(Error::invalid(format!(
                "gather: dense {:?} vs pattern {}x{}",
                d.shape(),
                pattern.nrows(),
                pattern.ncols()
            )));
        }
        let values = pattern.positions().map(|(i, j)| d.get(i, j)).collect();
        Ok(Self {
            pattern: pattern.clone(),
            values,
        })
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.nrows(), self.ncols());
        for ((i, j), &v) in self.pattern.positions().zip(&self.values) {
            d.set(i, j, v);
        }
        d
    }

    #[inline]
    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.pattern.nrows()
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.pattern.ncols()
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    #[inline]
    pub fn row_ptr(&self) -> &[u32] {
        self.pattern.row_ptr()
    }

    #[inline]
    pub fn col_idx(&self) -> &[u32] {
        self.pattern.col_idx()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

pub fn csr_from_dense<T: Scalar>(d: &DenseMatrix<T>) -> Result<CsrMatrix<T>> {
    CsrMatrix::from_dense(d)
}

pub fn csr_to_dense<T: Scalar>(s: &CsrMatrix<T>) -> DenseMatrix<T> {
    s.to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_compresses_to_empty() {
        let s = CsrMatrix::from_dense(&DenseMatrix::<f32>::zeros(3, 4)).unwrap();
        assert_eq!(s.nnz(), 0);
        assert_eq!(s.row_ptr(), &[0, 0, 0, 0]);
    }

    #[test]
    fn identity_structure() {
        let s = CsrMatrix::from_dense(&DenseMatrix::<f32>::identity(3)).unwrap();
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.row_ptr(), &[0, 1, 2, 3]);
        assert_eq!(s.col_idx(), &[0, 1, 2]);
    }

    #[test]
    fn rejects_bad_structure() {
        assert!(SparsityPattern::new(2, 2, vec![1, 1, 1], vec![0]).is_err());
        assert!(SparsityPattern::new(2, 2, vec![0, 2, 1], vec![0, 1]).is_err());
        assert!(SparsityPattern::new(1, 2, vec![0, 2], vec![1, 0]).is_err());
        assert!(SparsityPattern::new(1, 2, vec![0, 2], vec![0, 0]).is_err());
        assert!(SparsityPattern::new(1, 2, vec![0, 1], vec![2]).is_err());
        assert!(SparsityPattern::new(1, 2, vec![0, 2], vec![0]).is_err());
        assert!(CsrMatrix::<f32>::from_parts(1, 2, vec![0, 1], vec![1], vec![]).is_err());
    }

    #[test]
    fn rejects_oversized_dimensions() {
        assert!(SparsityPattern::empty(1 << 31, 1).is_err());
    }

    #[test]
    fn stored_zeros_are_kept_by_gather() {
        let p = SparsityPattern::full(2, 2).unwrap();
        let s = CsrMatrix::gather(&p, &DenseMatrix::<f32>::zeros(2, 2)).unwrap();
        assert_eq!(s.nnz(), 4);
    }

    #[test]
    fn positions_roundtrip() {
        let p = SparsityPattern::from_sorted_positions(3, 4, &[1, 5, 6, 11]).unwrap();
        let pos: Vec<_> = p.positions().collect();
        assert_eq!(pos, vec![(0, 1), (1, 1), (1, 2), (2, 3)]);
        assert_eq!(p.row_ptr(), &[0, 1, 3, 4]);
    }
}
