//! Sparse multilayer perceptrons whose weights live in CSR storage.
//!
//! Examples are columns: a batch is a `features × batch` [`DenseMatrix`].
//! Sparse layers keep their pattern fixed for the whole run; the weight,
//! gradient and velocity of a layer share one [`SparsityPattern`].

pub mod bench;
pub mod data;
pub mod error;
pub mod nn;
pub mod sparsity;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{CsrMatrix, DenseMatrix, Scalar, SparsityPattern};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
