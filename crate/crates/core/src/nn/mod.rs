//! Layers, loss and optimizers for column-per-example batches.

mod activation;
mod batchnorm;
mod dropout;
mod linear;
mod loss;
mod optimizer;

pub use activation::{relu_backward, relu_forward, Activation};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use dropout::Dropout;
pub use linear::{DenseLinear, SparseLinear, VectorParam};
pub use loss::{accuracy, check_one_hot, softmax, LossSpec, SoftmaxCrossEntropy};
pub use optimizer::{dense_step, sparse_step, OptimizerSpec};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Mutable view of one parameter tensor next to its current gradient.
pub struct ParamMut<'a, T> {
    pub name: &'static str,
    pub values: &'a mut [T],
    pub grads: &'a [T],
}

/// Standalone activation layer.
pub struct ActivationLayer<T = f32> {
    activation: Activation,
    output: Option<DenseMatrix<T>>,
}

impl<T: Scalar> ActivationLayer<T> {
    pub fn new(activation: Activation) -> Self {
        Self {
            activation,
            output: None,
        }
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn forward(&mut self, mut x: DenseMatrix<T>, mode: Mode) -> DenseMatrix<T> {
        self.activation.apply_in_place(&mut x);
        self.output = (mode == Mode::Training).then(|| x.clone());
        x
    }

    pub fn backward(&mut self, mut dy: DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let out = self
            .output
            .take()
            .ok_or_else(|| Error::state("activation backward called without a training forward pass"))?;
        self.activation.backward_in_place(&mut dy, &out)?;
        Ok(dy)
    }
}

/// One compiled layer of a sequential model.
pub enum Layer<T = f32> {
    Sparse(SparseLinear<T>),
    Dense(DenseLinear<T>),
    BatchNorm(BatchNorm<T>),
    Dropout(Dropout<T>),
    Activation(ActivationLayer<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&mut self, x: DenseMatrix<T>, mode: Mode) -> Result<DenseMatrix<T>> {
        match self {
            Layer::Sparse(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Activation(l) => Ok(l.forward(x, mode)),
        }
    }

    /// Backpropagates `dy`. Linear layers skip computing `dX` when
    /// `need_input_grad` is false and then return `None`.
    pub fn backward(&mut self, dy: DenseMatrix<T>, need_input_grad: bool) -> Result<Option<DenseMatrix<T>>> {
        match self {
            Layer::Sparse(l) => l.backward(dy, need_input_grad),
            Layer::Dense(l) => l.backward(dy, need_input_grad),
            Layer::BatchNorm(l) => l.backward(dy).map(Some),
            Layer::Dropout(l) => l.backward(dy).map(Some),
            Layer::Activation(l) => l.backward(dy).map(Some),
        }
    }

    pub fn optimize(&mut self, eta: T) -> Result<()> {
        match self {
            Layer::Sparse(l) => l.optimize(eta),
            Layer::Dense(l) => l.optimize(eta),
            Layer::BatchNorm(l) => l.optimize(eta),
            Layer::Dropout(_) | Layer::Activation(_) => Ok(()),
        }
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        match self {
            Layer::Sparse(l) => l.params_mut(),
            Layer::Dense(l) => l.params_mut(),
            Layer::BatchNorm(l) => l.params_mut(),
            Layer::Dropout(_) | Layer::Activation(_) => Vec::new(),
        }
    }

    /// `(n_in, n_out, stored weights)` for linear layers. Masked layers
    /// count only the weights their mask keeps.
    pub fn weight_stats(&self) -> Option<(usize, usize, usize)> {
        match self {
            Layer::Sparse(l) => Some((l.n_in(), l.n_out(), l.weights().nnz())),
            Layer::Dense(l) => Some((l.n_in(), l.n_out(), l.active_weights())),
            _ => None,
        }
    }

    /// Trainable scalars, counting stored weights only.
    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Sparse(l) => l.weights().nnz() + l.n_out(),
            Layer::Dense(l) => l.active_weights() + l.n_out(),
            Layer::BatchNorm(l) => 2 * l.features(),
            Layer::Dropout(_) | Layer::Activation(_) => 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Sparse(_) => "sparse",
            Layer::Dense(l) if l.mask().is_some() => "masked_dense",
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Dropout(_) => "dropout",
            Layer::Activation(_) => "activation",
        }
    }
}
