//! Dense and CSR matrices and the kernels over them.

mod csr;
mod dense;
mod kernels;
pub mod parallel;
mod scalar;

pub use csr::{csr_from_dense, csr_to_dense, CsrMatrix, SparsityPattern, MAX_INDEX};
pub use dense::DenseMatrix;
pub(crate) use kernels::axpby;
pub use kernels::{
    add_bias, dense_matmul, dense_matmul_into, hadamard_in_place, relu_mask_in_place, row_sums, sddmm, sddmm_into,
    sparse_combine, sparse_combine_unchecked, spmm, spmm_into, spmm_transposed, spmm_transposed_into, Transpose,
};
pub use scalar::Scalar;
