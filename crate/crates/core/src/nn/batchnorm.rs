use crate::error::{Error, Result};
use crate::nn::linear::VectorParam;
use crate::nn::{Mode, OptimizerSpec, ParamMut};
use crate::tensor::{DenseMatrix, Scalar};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-feature normalization over the batch (column) dimension.
///
/// Training mode uses batch statistics and folds them into the running
/// estimates (`running ← (1 − m)·running + m·batch`, unbiased variance);
/// inference mode is the affine map given by the running estimates.
pub struct BatchNorm<T = f32> {
    gamma: VectorParam<T>,
    beta: VectorParam<T>,
    running_mean: Vec<T>,
    running_var: Vec<T>,
    eps: T,
    stats_momentum: T,
    optimizer: OptimizerSpec,
    cache: Option<(DenseMatrix<T>, Vec<T>)>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize, optimizer: OptimizerSpec) -> Result<Self> {
        optimizer.validate()?;
        Ok(Self {
            gamma: VectorParam::new(vec![T::one(); features], &optimizer),
            beta: VectorParam::new(vec![T::zero(); features], &optimizer),
            running_mean: vec![T::zero(); features],
            running_var: vec![T::one(); features],
            eps: T::from_f64(BN_EPS),
            stats_momentum: T::from_f64(BN_MOMENTUM),
            optimizer,
            cache: None,
        })
    }

    /// Restores a layer from stored parameters and statistics.
    pub fn from_parts(
        gamma: Vec<T>,
        beta: Vec<T>,
        running_mean: Vec<T>,
        running_var: Vec<T>,
        optimizer: OptimizerSpec,
    ) -> Result<Self> {
        let n = gamma.len();
        if beta.len() != n || running_mean.len() != n || running_var.len() != n {
            return Err(Error::invalid("batch norm parameter lengths differ"));
        }
        if running_var.iter().any(|&v| v < T::zero()) {
            return Err(Error::invalid("batch norm running variance must be non-negative"));
        }
        let mut bn = Self::new(n, optimizer)?;
        bn.gamma.values = gamma;
        bn.beta.values = beta;
        bn.running_mean = running_mean;
        bn.running_var = running_var;
        Ok(bn)
    }

    pub fn features(&self) -> usize {
        self.gamma.values.len()
    }

    pub fn gamma(&self) -> &[T] {
        &self.gamma.values
    }

    pub fn gamma_mut(&mut self) -> &mut [T] {
        &mut self.gamma.values
    }

    pub fn beta(&self) -> &[T] {
        &self.beta.values
    }

    pub fn beta_mut(&mut self) -> &mut [T] {
        &mut self.beta.values
    }

    pub fn running_mean(&self) -> &[T] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[T] {
        &self.running_var
    }

    pub fn optimizer(&self) -> &OptimizerSpec {
        &self.optimizer
    }

    pub fn forward(&mut self, x: DenseMatrix<T>, mode: Mode) -> Result<DenseMatrix<T>> {
        let (f, n) = x.shape();
        if f != self.features() {
            return Err(Error::invalid(format!(
                "batch norm expects {} features, got {f}",
                self.features()
            )));
        }
        match mode {
            Mode::Inference => {
                let mut y = x;
                for i in 0..f {
                    let scale = self.gamma.values[i] / (self.running_var[i] + self.eps).sqrt();
                    let (mu, b) = (self.running_mean[i], self.beta.values[i]);
                    y.row_mut(i).iter_mut().for_each(|v| *v = scale * (*v - mu) + b);
                }
                self.cache = None;
                Ok(y)
            }
            Mode::Training => {
                if n < 2 {
                    return Err(Error::invalid(
                        "batch norm needs at least 2 examples per batch in training mode",
                    ));
                }
                let nt = T::from_f64(n as f64);
                let m = self.stats_momentum;
                let mut xhat = x;
                let mut inv_std = Vec::with_capacity(f);
                let mut y = DenseMatrix::zeros(f, n);
                for i in 0..f {
                    let row = xhat.row_mut(i);
                    let mean = row.iter().copied().sum::<T>() / nt;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
                    let is = T::one() / (var + self.eps).sqrt();
                    row.iter_mut().for_each(|v| *v = (*v - mean) * is);
                    let (g, b) = (self.gamma.values[i], self.beta.values[i]);
                    for (o, &h) in y.row_mut(i).iter_mut().zip(xhat.row(i)) {
                        *o = g * h + b;
                    }
                    self.running_mean[i] = (T::one() - m) * self.running_mean[i] + m * mean;
                    let unbiased = var * nt / (nt - T::one());
                    self.running_var[i] = (T::one() - m) * self.running_var[i] + m * unbiased;
                    inv_std.push(is);
                }
                self.cache = Some((xhat, inv_std));
                Ok(y)
            }
        }
    }

    pub fn backward(&mut self, dy: DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let (xhat, inv_std) = self
            .cache
            .take()
            .ok_or_else(|| Error::state("batch norm backward called without a training forward pass"))?;
        xhat.same_shape(&dy, "batch norm backward")?;
        let (f, n) = dy.shape();
        let nt = T::from_f64(n as f64);
        let mut dx = DenseMatrix::zeros(f, n);
        for (i, &istd) in inv_std.iter().enumerate().take(f) {
            let (dyr, hr) = (dy.row(i), xhat.row(i));
            let sum_dy: T = dyr.iter().copied().sum();
            let sum_dy_h: T = dyr.iter().zip(hr).map(|(&d, &h)| d * h).sum();
            self.beta.grads[i] = sum_dy;
            self.gamma.grads[i] = sum_dy_h;
            let g = self.gamma.values[i];
            let scale = g * istd / nt;
            for ((o, &d), &h) in dx.row_mut(i).iter_mut().zip(dyr).zip(hr) {
                *o = scale * (nt * d - sum_dy - h * sum_dy_h);
            }
        }
        Ok(dx)
    }

    pub fn optimize(&mut self, eta: T) -> Result<()> {
        self.gamma.step(&self.optimizer, eta)?;
        self.beta.step(&self.optimizer, eta)
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut {
                name: "gamma",
                values: &mut self.gamma.values,
                grads: &self.gamma.grads,
            },
            ParamMut {
                name: "beta",
                values: &mut self.beta.values,
                grads: &self.beta.grads,
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[vec![1.0, 4.0, -2.0, 0.5], vec![10.0, 11.0, 13.0, 9.0]])
    }

    #[test]
    fn training_output_is_normalized() {
        let mut bn = BatchNorm::<f64>::new(2, OptimizerSpec::GradientDescent).unwrap();
        let y = bn.forward(input(), Mode::Training).unwrap();
        for i in 0..2 {
            let mean: f64 = y.row(i).iter().sum::<f64>() / 4.0;
            let var: f64 = y.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() <= 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
        assert!(bn.running_var().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_gamma_gives_beta_and_no_input_gradient() {
        let mut bn = BatchNorm::<f64>::from_parts(
            vec![0.0; 2],
            vec![0.25, -1.0],
            vec![0.0; 2],
            vec![1.0; 2],
            OptimizerSpec::GradientDescent,
        )
        .unwrap();
        let y = bn.forward(input(), Mode::Training).unwrap();
        assert!(y.row(0).iter().all(|&v| v == 0.25));
        assert!(y.row(1).iter().all(|&v| v == -1.0));
        let dx = bn.backward(DenseMatrix::filled(2, 4, 1.5)).unwrap();
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_of_one_rejected_in_training() {
        let mut bn = BatchNorm::<f32>::new(2, OptimizerSpec::GradientDescent).unwrap();
        assert!(bn.forward(DenseMatrix::zeros(2, 1), Mode::Training).is_err());
        assert!(bn.forward(DenseMatrix::zeros(2, 1), Mode::Inference).is_ok());
    }

    #[test]
    fn inference_is_affine() {
        let mut bn = BatchNorm::<f64>::from_parts(
            vec![2.0],
            vec![1.0],
            vec![3.0],
            vec![4.0 - BN_EPS],
            OptimizerSpec::GradientDescent,
        )
        .unwrap();
        let y = bn
            .forward(DenseMatrix::from_rows(&[vec![3.0, 5.0, 7.0]]), Mode::Inference)
            .unwrap();
        assert_eq!(y.row(0), &[1.0, 3.0, 5.0]);
    }
}
