//! The four sparse kernels used by training, plus the dense helpers the
//! dense layers and test oracles need.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{CsrMatrix, DenseMatrix, Scalar, SparsityPattern};

const SPMM_ROW_CHUNK: usize = 8;
const SPMM_T_COL_CHUNK: usize = 32;
const SDDMM_ROW_CHUNK: usize = 16;
const COMBINE_CHUNK: usize = 1 << 14;
const GEMM_ROW_CHUNK: usize = 64;
const LANES: usize = 8;

/// Dot product with a fixed eight-lane accumulation order.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ta.iter().zip(tb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y ← y + alpha·x`
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y ← alpha·y + beta·x`, the one update rule shared by every optimizer path.
#[inline]
pub(crate) fn axpby<T: Scalar>(alpha: T, y: &mut [T], beta: T, x: &[T]) {
    debug_assert_eq!(x.len(), y.len());
    y.par_chunks_mut(COMBINE_CHUNK)
        .zip(x.par_chunks(COMBINE_CHUNK))
        .for_each(|(ys, xs)| {
            for (yi, &xi) in ys.iter_mut().zip(xs) {
                *yi = alpha * *yi + beta * xi;
            }
        });
}

fn mismatch(op: &str, detail: String) -> Error {
    Error::invalid(format!("{op}: dimension mismatch ({detail})"))
}

/// `S·B` for CSR `S` (m×k) and dense `B` (k×n).
pub fn spmm<T: Scalar>(s: &CsrMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let mut out = DenseMatrix::zeros(s.nrows(), b.cols());
    spmm_into(s, b, &mut out)?;
    Ok(out)
}

pub fn spmm_into<T: Scalar>(s: &CsrMatrix<T>, b: &DenseMatrix<T>, out: &mut DenseMatrix<T>) -> Result<()> {
    if s.ncols() != b.rows() || out.shape() != (s.nrows(), b.cols()) {
        return Err(mismatch(
            "spmm",
            format!(
                "S {}x{}, B {:?}, out {:?}",
                s.nrows(),
                s.ncols(),
                b.shape(),
                out.shape()
            ),
        ));
    }
    let n = b.cols();
    if n == 0 || s.nrows() == 0 {
        return Ok(());
    }
    let (col_idx, values) = (s.col_idx(), s.values());
    out.as_mut_slice()
        .par_chunks_mut(SPMM_ROW_CHUNK * n)
        .enumerate()
        .for_each(|(chunk, rows)| {
            for (r, out_row) in rows.chunks_exact_mut(n).enumerate() {
                let i = chunk * SPMM_ROW_CHUNK + r;
                out_row.fill(T::zero());
                for k in s.pattern().row_range(i) {
                    axpy(values[k], b.row(col_idx[k] as usize), out_row);
                }
            }
        });
    Ok(())
}

/// `Sᵀ·B` for CSR `S` (m×k) and dense `B` (m×n), without forming `Sᵀ`.
pub fn spmm_transposed<T: Scalar>(s: &CsrMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let mut out = DenseMatrix::zeros(s.ncols(), b.cols());
    spmm_transposed_into(s, b, &mut out)?;
    Ok(out)
}

pub fn spmm_transposed_into<T: Scalar>(s: &CsrMatrix<T>, b: &DenseMatrix<T>, out: &mut DenseMatrix<T>) -> Result<()> {
    if s.nrows() != b.rows() || out.shape() != (s.ncols(), b.cols()) {
        return Err(mismatch(
            "spmm_transposed",
            format!(
                "S {}x{}, B {:?}, out {:?}",
                s.nrows(),
                s.ncols(),
                b.shape(),
                out.shape()
            ),
        ));
    }
    let (k, n) = (s.ncols(), b.cols());
    if n == 0 || k == 0 {
        return Ok(());
    }
    let (col_idx, values) = (s.col_idx(), s.values());
    // Each task owns a block of output columns and scatters rows of S in
    // ascending order into a private k×w buffer.
    let blocks: Vec<(usize, usize, Vec<T>)> = (0..n.div_ceil(SPMM_T_COL_CHUNK))
        .into_par_iter()
        .map(|blk| {
            let j0 = blk * SPMM_T_COL_CHUNK;
            let j1 = (j0 + SPMM_T_COL_CHUNK).min(n);
            let w = j1 - j0;
            let mut buf = vec![T::zero(); k * w];
            for i in 0..s.nrows() {
                let brow = &b.row(i)[j0..j1];
                for p in s.pattern().row_range(i) {
                    let c = col_idx[p] as usize;
                    axpy(values[p], brow, &mut buf[c * w..(c + 1) * w]);
                }
            }
            (j0, j1, buf)
        })
        .collect();
    for (j0, j1, buf) in blocks {
        let w = j1 - j0;
        for (c, src) in buf.chunks_exact(w).enumerate() {
            out.row_mut(c)[j0..j1].copy_from_slice(src);
        }
    }
    Ok(())
}

/// `(A·Bᵀ)` sampled at `pattern`: `A` is m×k, `B` is n×k, result is m×n CSR.
///
/// Working memory is the output values only; the dense product is never formed.
pub fn sddmm<T: Scalar>(pattern: &SparsityPattern, a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<CsrMatrix<T>> {
    let mut out = CsrMatrix::zeros_like(pattern);
    sddmm_into(&mut out, a, b)?;
    Ok(out)
}

/// Overwrites the values of `out` with `A·Bᵀ` on its own pattern.
pub fn sddmm_into<T: Scalar>(out: &mut CsrMatrix<T>, a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<()> {
    let pattern = out.pattern().clone();
    if a.rows() != pattern.nrows() || b.rows() != pattern.ncols() || a.cols() != b.cols() {
        return Err(mismatch(
            "sddmm",
            format!(
                "pattern {}x{}, A {:?}, B {:?}",
                pattern.nrows(),
                pattern.ncols(),
                a.shape(),
                b.shape()
            ),
        ));
    }
    let row_ptr = pattern.row_ptr();
    let col_idx = pattern.col_idx();
    let mut tasks = Vec::with_capacity(pattern.nrows().div_ceil(SDDMM_ROW_CHUNK));
    let mut rest = out.values_mut();
    let mut r0 = 0;
    while r0 < pattern.nrows() {
        let r1 = (r0 + SDDMM_ROW_CHUNK).min(pattern.nrows());
        let len = (row_ptr[r1] - row_ptr[r0]) as usize;
        let (head, tail) = std::mem::take(&mut rest).split_at_mut(len);
        tasks.push((r0, r1, head));
        rest = tail;
        r0 = r1;
    }
    tasks.into_par_iter().for_each(|(r0, r1, vals)| {
        let base = row_ptr[r0] as usize;
        for i in r0..r1 {
            let arow = a.row(i);
            for p in pattern.row_range(i) {
                vals[p - base] = dot(arow, b.row(col_idx[p] as usize));
            }
        }
    });
    Ok(())
}

/// `S ← alpha·S + beta·T` for matrices sharing one sparsity structure.
pub fn sparse_combine<T: Scalar>(alpha: T, s: &mut CsrMatrix<T>, beta: T, t: &CsrMatrix<T>) -> Result<()> {
    if s.pattern() != t.pattern() {
        return Err(Error::invalid(
            "sparse_combine: operands have different sparsity structure",
        ));
    }
    sparse_combine_unchecked(alpha, s, beta, t);
    Ok(())
}

/// Like [`sparse_combine`] but trusts the caller that structures match; only
/// the value lengths are asserted.
pub fn sparse_combine_unchecked<T: Scalar>(alpha: T, s: &mut CsrMatrix<T>, beta: T, t: &CsrMatrix<T>) {
    assert_eq!(s.nnz(), t.nnz(), "sparse_combine: nnz mismatch");
    axpby(alpha, s.values_mut(), beta, t.values());
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

impl Transpose {
    fn apply<T: Scalar>(self, m: &DenseMatrix<T>) -> (usize, usize, isize, isize) {
        let (r, c) = m.shape();
        match self {
            Transpose::No => (r, c, c as isize, 1),
            Transpose::Yes => (c, r, 1, c as isize),
        }
    }
}

/// `op(A)·op(B)` for dense operands.
pub fn dense_matmul<T: Scalar>(
    a: &DenseMatrix<T>,
    ta: Transpose,
    b: &DenseMatrix<T>,
    tb: Transpose,
) -> Result<DenseMatrix<T>> {
    let (m, _, _, _) = ta.apply(a);
    let (_, n, _, _) = tb.apply(b);
    let mut out = DenseMatrix::zeros(m, n);
    dense_matmul_into(a, ta, b, tb, &mut out)?;
    Ok(out)
}

pub fn dense_matmul_into<T: Scalar>(
    a: &DenseMatrix<T>,
    ta: Transpose,
    b: &DenseMatrix<T>,
    tb: Transpose,
    out: &mut DenseMatrix<T>,
) -> Result<()> {
    let (m, k, rsa, csa) = ta.apply(a);
    let (kb, n, rsb, csb) = tb.apply(b);
    if k != kb || out.shape() != (m, n) {
        return Err(mismatch(
            "dense_matmul",
            format!("op(A) {m}x{k}, op(B) {kb}x{n}, out {:?}", out.shape()),
        ));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        out.as_mut_slice().fill(T::zero());
        return Ok(());
    }
    let (a_data, b_data) = (a.as_slice(), b.as_slice());
    out.as_mut_slice()
        .par_chunks_mut(GEMM_ROW_CHUNK * n)
        .enumerate()
        .for_each(|(chunk, c)| {
            let r0 = chunk * GEMM_ROW_CHUNK;
            let rows = c.len() / n;
            // SAFETY: row r0 of op(A) starts at r0*rsa; the chunk covers
            // `rows` rows of op(A) and of the output, all in bounds.
            unsafe {
                let a_ptr = a_data.as_ptr().offset(r0 as isize * rsa);
                T::gemm(
                    rows,
                    k,
                    n,
                    T::one(),
                    a_ptr,
                    rsa,
                    csa,
                    b_data.as_ptr(),
                    rsb,
                    csb,
                    T::zero(),
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
    Ok(())
}

/// Sum of each row.
pub fn row_sums<T: Scalar>(d: &DenseMatrix<T>) -> Vec<T> {
    (0..d.rows())
        .map(|i| d.row(i).iter().fold(T::zero(), |s, &v| s + v))
        .collect()
}

/// Adds `bias[i]` to every entry of row `i`.
pub fn add_bias<T: Scalar>(d: &mut DenseMatrix<T>, bias: &[T]) -> Result<()> {
    if bias.len() != d.rows() {
        return Err(mismatch(
            "add_bias",
            format!("bias {} vs rows {}", bias.len(), d.rows()),
        ));
    }
    for (i, &b) in bias.iter().enumerate() {
        d.row_mut(i).iter_mut().for_each(|v| *v += b);
    }
    Ok(())
}

/// Elementwise product into `a`.
pub fn hadamard_in_place<T: Scalar>(a: &mut DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<()> {
    a.same_shape(b, "hadamard")?;
    for (x, &y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x *= y;
    }
    Ok(())
}

/// Zeroes `grad` wherever `activation` is not strictly positive.
pub fn relu_mask_in_place<T: Scalar>(grad: &mut DenseMatrix<T>, activation: &DenseMatrix<T>) -> Result<()> {
    grad.same_shape(activation, "relu_mask")?;
    for (g, &x) in grad.as_mut_slice().iter_mut().zip(activation.as_slice()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(())
}
