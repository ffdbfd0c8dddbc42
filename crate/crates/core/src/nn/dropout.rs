use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::sparsity::Rng;
use crate::tensor::{hadamard_in_place, DenseMatrix, Scalar};

/// Inverted dropout: survivors are scaled by `1/(1 − p)` during training so
/// that inference is the identity.
pub struct Dropout<T = f32> {
    p: f64,
    rng: Rng,
    mask: Option<DenseMatrix<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(p: f64, rng: Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!(
                "dropout probability must lie in [0, 1), got {p}"
            )));
        }
        Ok(Self { p, rng, mask: None })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Replaces the mask generator, e.g. to replay an identical mask.
    pub fn reseed(&mut self, rng: Rng) {
        self.rng = rng;
    }

    pub fn forward(&mut self, x: DenseMatrix<T>, mode: Mode) -> Result<DenseMatrix<T>> {
        if mode == Mode::Inference {
            self.mask = None;
            return Ok(x);
        }
        if self.p == 0.0 {
            self.mask = Some(DenseMatrix::filled(x.rows(), x.cols(), T::one()));
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - self.p));
        let mut mask = DenseMatrix::zeros(x.rows(), x.cols());
        for m in mask.as_mut_slice() {
            if self.rng.random::<f64>() >= self.p {
                *m = keep;
            }
        }
        let mut y = x;
        hadamard_in_place(&mut y, &mask)?;
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, dy: DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| Error::state("dropout backward called without a training forward pass"))?;
        let mut dx = dy;
        hadamard_in_place(&mut dx, &mask)?;
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::{Seed, Stream};

    fn rng() -> Rng {
        Seed(7).stream(Stream::Dropout, 0)
    }

    #[test]
    fn zero_probability_is_identity() {
        let x = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f32);
        let mut d = Dropout::new(0.0, rng()).unwrap();
        assert_eq!(d.forward(x.clone(), Mode::Training).unwrap(), x);
        assert_eq!(d.backward(x.clone()).unwrap(), x);
    }

    #[test]
    fn inference_is_identity() {
        let x = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f32);
        let mut d = Dropout::new(0.9, rng()).unwrap();
        assert_eq!(d.forward(x.clone(), Mode::Inference).unwrap(), x);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Dropout::<f32>::new(1.0, rng()).is_err());
        assert!(Dropout::<f32>::new(-0.1, rng()).is_err());
    }

    #[test]
    fn preserves_mean() {
        let x = DenseMatrix::from_fn(100, 1000, |i, j| 1.0 + ((i * 7 + j * 13) % 17) as f64 / 17.0);
        let mean_x = x.as_slice().iter().sum::<f64>() / x.len() as f64;
        let mut d = Dropout::new(0.3, rng()).unwrap();
        let y = d.forward(x, Mode::Training).unwrap();
        let mean_y = y.as_slice().iter().sum::<f64>() / y.len() as f64;
        assert!((mean_y - mean_x).abs() / mean_x < 0.02);
    }

    #[test]
    fn backward_applies_same_mask() {
        let x = DenseMatrix::filled(4, 50, 1.0f64);
        let mut d = Dropout::new(0.5, rng()).unwrap();
        let y = d.forward(x.clone(), Mode::Training).unwrap();
        let dx = d.backward(x).unwrap();
        assert_eq!(y, dx);
    }
}
