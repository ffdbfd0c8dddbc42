use crate::error::{Error, Result};
use crate::nn::optimizer::{dense_step, sparse_step};
use crate::nn::{Activation, Mode, OptimizerSpec, ParamMut};
use crate::tensor::{
    add_bias, dense_matmul, hadamard_in_place, row_sums, sddmm_into, spmm, spmm_transposed, CsrMatrix, DenseMatrix,
    Scalar, Transpose,
};

/// Dense vector parameter (bias, batch-norm affine terms) with its gradient
/// and optional momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorParam<T> {
    pub values: Vec<T>,
    pub grads: Vec<T>,
    pub velocity: Option<Vec<T>>,
}

impl<T: Scalar> VectorParam<T> {
    pub fn new(values: Vec<T>, spec: &OptimizerSpec) -> Self {
        let n = values.len();
        Self {
            values,
            grads: vec![T::zero(); n],
            velocity: spec.has_velocity().then(|| vec![T::zero(); n]),
        }
    }

    pub fn step(&mut self, spec: &OptimizerSpec, eta: T) -> Result<()> {
        dense_step(spec, &mut self.values, &self.grads, self.velocity.as_deref_mut(), eta)
    }
}

struct ForwardCache<T> {
    input: DenseMatrix<T>,
    output: Option<DenseMatrix<T>>,
}

/// Linear layer whose weights are a CSR matrix with a fixed pattern.
pub struct SparseLinear<T = f32> {
    weights: CsrMatrix<T>,
    grad_weights: CsrMatrix<T>,
    velocity: Option<CsrMatrix<T>>,
    bias: VectorParam<T>,
    activation: Activation,
    optimizer: OptimizerSpec,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> SparseLinear<T> {
    pub fn new(weights: CsrMatrix<T>, bias: Vec<T>, activation: Activation, optimizer: OptimizerSpec) -> Result<Self> {
        optimizer.validate()?;
        if bias.len() != weights.nrows() {
            return Err(Error::invalid(format!(
                "bias length {} vs {} output units",
                bias.len(),
                weights.nrows()
            )));
        }
        let pattern = weights.pattern().clone();
        Ok(Self {
            grad_weights: CsrMatrix::zeros_like(&pattern),
            velocity: optimizer.has_velocity().then(|| CsrMatrix::zeros_like(&pattern)),
            bias: VectorParam::new(bias, &optimizer),
            weights,
            activation,
            optimizer,
            cache: None,
        })
    }

    pub fn n_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &CsrMatrix<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut CsrMatrix<T> {
        &mut self.weights
    }

    pub fn grad_weights(&self) -> &CsrMatrix<T> {
        &self.grad_weights
    }

    pub fn velocity(&self) -> Option<&CsrMatrix<T>> {
        self.velocity.as_ref()
    }

    pub fn bias(&self) -> &[T] {
        &self.bias.values
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias.values
    }

    pub fn grad_bias(&self) -> &[T] {
        &self.bias.grads
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn optimizer(&self) -> &OptimizerSpec {
        &self.optimizer
    }

    /// `act(W·X + b)`; caches `X` (and the output, for ReLU) in training mode.
    pub fn forward(&mut self, x: DenseMatrix<T>, mode: Mode) -> Result<DenseMatrix<T>> {
        let mut y = spmm(&self.weights, &x)?;
        add_bias(&mut y, &self.bias.values)?;
        self.activation.apply_in_place(&mut y);
        self.cache = match mode {
            Mode::Training => Some(ForwardCache {
                input: x,
                output: (self.activation != Activation::NoActivation).then(|| y.clone()),
            }),
            Mode::Inference => None,
        };
        Ok(y)
    }

    /// Fills the weight and bias gradients; returns `dX` when requested.
    pub fn backward(&mut self, mut dy: DenseMatrix<T>, need_input_grad: bool) -> Result<Option<DenseMatrix<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::state("sparse layer backward called without a training forward pass"))?;
        if let Some(out) = &cache.output {
            self.activation.backward_in_place(&mut dy, out)?;
        }
        sddmm_into(&mut self.grad_weights, &dy, &cache.input)?;
        self.bias.grads = row_sums(&dy);
        if need_input_grad {
            Ok(Some(spmm_transposed(&self.weights, &dy)?))
        } else {
            Ok(None)
        }
    }

    pub fn optimize(&mut self, eta: T) -> Result<()> {
        sparse_step(
            &self.optimizer,
            &mut self.weights,
            &self.grad_weights,
            self.velocity.as_mut(),
            eta,
        )?;
        self.bias.step(&self.optimizer, eta)
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut {
                name: "weights",
                values: self.weights.values_mut(),
                grads: self.grad_weights.values(),
            },
            ParamMut {
                name: "bias",
                values: &mut self.bias.values,
                grads: &self.bias.grads,
            },
        ]
    }
}

/// Linear layer with dense weights. With a mask it emulates a sparse layer
/// the way mask-based training does: gradients and momentum are masked
/// before every step and the weights re-masked after.
pub struct DenseLinear<T = f32> {
    weights: DenseMatrix<T>,
    grad_weights: DenseMatrix<T>,
    velocity: Option<DenseMatrix<T>>,
    mask: Option<DenseMatrix<T>>,
    bias: VectorParam<T>,
    activation: Activation,
    optimizer: OptimizerSpec,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> DenseLinear<T> {
    pub fn new(
        weights: DenseMatrix<T>,
        bias: Vec<T>,
        activation: Activation,
        optimizer: OptimizerSpec,
    ) -> Result<Self> {
        optimizer.validate()?;
        if bias.len() != weights.rows() {
            return Err(Error::invalid(format!(
                "bias length {} vs {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        let (r, c) = weights.shape();
        Ok(Self {
            grad_weights: DenseMatrix::zeros(r, c),
            velocity: optimizer.has_velocity().then(|| DenseMatrix::zeros(r, c)),
            mask: None,
            bias: VectorParam::new(bias, &optimizer),
            weights,
            activation,
            optimizer,
            cache: None,
        })
    }

    /// Attaches a binary mask and zeroes the weights outside it.
    pub fn with_mask(mut self, mask: DenseMatrix<T>) -> Result<Self> {
        self.weights.same_shape(&mask, "mask")?;
        if mask.as_slice().iter().any(|&m| m != T::zero() && m != T::one()) {
            return Err(Error::invalid("mask must be binary"));
        }
        hadamard_in_place(&mut self.weights, &mask)?;
        self.mask = Some(mask);
        Ok(self)
    }

    /// Masked dense layer holding exactly the values of a sparse one.
    pub fn masked_from_sparse(
        sparse: &CsrMatrix<T>,
        bias: Vec<T>,
        activation: Activation,
        optimizer: OptimizerSpec,
    ) -> Result<Self> {
        let mask = sparse.pattern().to_mask();
        Self::new(sparse.to_dense(), bias, activation, optimizer)?.with_mask(mask)
    }

    pub fn n_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &DenseMatrix<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut DenseMatrix<T> {
        &mut self.weights
    }

    pub fn grad_weights(&self) -> &DenseMatrix<T> {
        &self.grad_weights
    }

    pub fn mask(&self) -> Option<&DenseMatrix<T>> {
        self.mask.as_ref()
    }

    pub fn bias(&self) -> &[T] {
        &self.bias.values
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias.values
    }

    pub fn grad_bias(&self) -> &[T] {
        &self.bias.grads
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn optimizer(&self) -> &OptimizerSpec {
        &self.optimizer
    }

    /// Number of weights the mask keeps (all of them when unmasked).
    pub fn active_weights(&self) -> usize {
        match &self.mask {
            Some(m) => m.as_slice().iter().filter(|&&v| v != T::zero()).count(),
            None => self.weights.len(),
        }
    }

    pub fn forward(&mut self, x: DenseMatrix<T>, mode: Mode) -> Result<DenseMatrix<T>> {
        let mut y = dense_matmul(&self.weights, Transpose::No, &x, Transpose::No)?;
        add_bias(&mut y, &self.bias.values)?;
        self.activation.apply_in_place(&mut y);
        self.cache = match mode {
            Mode::Training => Some(ForwardCache {
                input: x,
                output: (self.activation != Activation::NoActivation).then(|| y.clone()),
            }),
            Mode::Inference => None,
        };
        Ok(y)
    }

    pub fn backward(&mut self, mut dy: DenseMatrix<T>, need_input_grad: bool) -> Result<Option<DenseMatrix<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::state("dense layer backward called without a training forward pass"))?;
        if let Some(out) = &cache.output {
            self.activation.backward_in_place(&mut dy, out)?;
        }
        self.grad_weights = dense_matmul(&dy, Transpose::No, &cache.input, Transpose::Yes)?;
        if let Some(mask) = &self.mask {
            hadamard_in_place(&mut self.grad_weights, mask)?;
        }
        self.bias.grads = row_sums(&dy);
        if need_input_grad {
            Ok(Some(dense_matmul(&self.weights, Transpose::Yes, &dy, Transpose::No)?))
        } else {
            Ok(None)
        }
    }

    pub fn optimize(&mut self, eta: T) -> Result<()> {
        if let (Some(mask), Some(v)) = (&self.mask, self.velocity.as_mut()) {
            hadamard_in_place(v, mask)?;
        }
        dense_step(
            &self.optimizer,
            self.weights.as_mut_slice(),
            self.grad_weights.as_slice(),
            self.velocity.as_mut().map(|v| v.as_mut_slice()),
            eta,
        )?;
        if let Some(mask) = &self.mask {
            hadamard_in_place(&mut self.weights, mask)?;
        }
        self.bias.step(&self.optimizer, eta)
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut {
                name: "weights",
                values: self.weights.as_mut_slice(),
                grads: self.grad_weights.as_slice(),
            },
            ParamMut {
                name: "bias",
                values: &mut self.bias.values,
                grads: &self.bias.grads,
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SparsityPattern;

    fn diag_layer() -> SparseLinear<f32> {
        let w = CsrMatrix::from_dense(&DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]])).unwrap();
        SparseLinear::new(
            w,
            vec![1.0, 1.0],
            Activation::NoActivation,
            OptimizerSpec::GradientDescent,
        )
        .unwrap()
    }

    #[test]
    fn identity_forward() {
        let p = SparsityPattern::full(2, 2).unwrap();
        let w = CsrMatrix::gather(&p, &DenseMatrix::identity(2)).unwrap();
        let mut l = SparseLinear::new(
            w,
            vec![0.0; 2],
            Activation::NoActivation,
            OptimizerSpec::GradientDescent,
        )
        .unwrap();
        let x = DenseMatrix::from_rows(&[vec![1.0f32, -2.0], vec![3.0, 4.0]]);
        assert_eq!(l.forward(x.clone(), Mode::Training).unwrap(), x);
    }

    #[test]
    fn diagonal_forward_with_bias() {
        let mut l = diag_layer();
        let y = l
            .forward(DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]), Mode::Training)
            .unwrap();
        assert_eq!(y, DenseMatrix::from_rows(&[vec![3.0], vec![4.0]]));
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut l = diag_layer();
        l.forward(
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]),
            Mode::Training,
        )
        .unwrap();
        let dx = l.backward(DenseMatrix::zeros(2, 2), true).unwrap().unwrap();
        assert!(l.grad_weights().values().iter().all(|&v| v == 0.0));
        assert!(l.grad_bias().iter().all(|&v| v == 0.0));
        assert_eq!(dx, DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn single_entry_gradient() {
        let w = CsrMatrix::from_parts(1, 2, vec![0, 1], vec![1], vec![0.5f64]).unwrap();
        let mut l = SparseLinear::new(w, vec![0.0], Activation::NoActivation, OptimizerSpec::GradientDescent).unwrap();
        l.forward(DenseMatrix::from_rows(&[vec![7.0], vec![3.0]]), Mode::Training)
            .unwrap();
        l.backward(DenseMatrix::from_rows(&[vec![2.0]]), false).unwrap();
        assert_eq!(l.grad_weights().values(), &[2.0 * 3.0]);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut l = diag_layer();
        assert!(matches!(
            l.backward(DenseMatrix::zeros(2, 1), true),
            Err(Error::State(_))
        ));
        l.forward(DenseMatrix::zeros(2, 1), Mode::Inference).unwrap();
        assert!(matches!(
            l.backward(DenseMatrix::zeros(2, 1), true),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn mask_is_enforced_after_step() {
        let w = DenseMatrix::from_rows(&[vec![1.0f32, 2.0], vec![3.0, 4.0]]);
        let mask = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mut l = DenseLinear::new(w, vec![0.0; 2], Activation::ReLU, OptimizerSpec::nesterov(0.9))
            .unwrap()
            .with_mask(mask.clone())
            .unwrap();
        for _ in 0..3 {
            l.forward(
                DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]),
                Mode::Training,
            )
            .unwrap();
            l.backward(DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 0.5]]), true)
                .unwrap();
            l.optimize(0.1).unwrap();
            assert_eq!(l.weights().get(0, 1), 0.0);
            assert_eq!(l.weights().get(1, 0), 0.0);
        }
        assert_eq!(l.active_weights(), 2);
        assert!(DenseLinear::new(
            DenseMatrix::<f32>::zeros(1, 1),
            vec![0.0],
            Activation::ReLU,
            OptimizerSpec::GradientDescent
        )
        .unwrap()
        .with_mask(DenseMatrix::filled(1, 1, 0.5))
        .is_err());
    }
}
