use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{relu_mask_in_place, DenseMatrix, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    NoActivation,
    ReLU,
}

impl Activation {
    pub fn apply_in_place<T: Scalar>(self, x: &mut DenseMatrix<T>) {
        if self == Activation::ReLU {
            x.as_mut_slice().iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = T::zero();
                }
            });
        }
    }

    /// Backpropagates through the activation given its forward *output*.
    /// For ReLU, `output > 0` exactly when the input was positive; the
    /// derivative at 0 is taken to be 0.
    pub fn backward_in_place<T: Scalar>(self, grad: &mut DenseMatrix<T>, output: &DenseMatrix<T>) -> Result<()> {
        match self {
            Activation::NoActivation => Ok(()),
            Activation::ReLU => relu_mask_in_place(grad, output),
        }
    }
}

pub fn relu_forward<T: Scalar>(x: &DenseMatrix<T>) -> DenseMatrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(dy: &DenseMatrix<T>, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let mut out = dy.clone();
    relu_mask_in_place(&mut out, x)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_sign_split() {
        let x = DenseMatrix::from_rows(&[vec![-1.0f32, 2.0]]);
        assert_eq!(relu_forward(&x), DenseMatrix::from_rows(&[vec![0.0, 2.0]]));
        let dy = DenseMatrix::from_rows(&[vec![5.0f32, 5.0]]);
        assert_eq!(
            relu_backward(&dy, &x).unwrap(),
            DenseMatrix::from_rows(&[vec![0.0, 5.0]])
        );
    }

    #[test]
    fn relu_identity_on_nonnegative() {
        let x = DenseMatrix::from_rows(&[vec![0.0f32, 1.0, 3.5]]);
        assert_eq!(relu_forward(&x), x);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let x = DenseMatrix::from_rows(&[vec![0.0f64]]);
        let dy = DenseMatrix::from_rows(&[vec![1.0f64]]);
        assert_eq!(relu_backward(&dy, &x).unwrap().get(0, 0), 0.0);
    }
}
