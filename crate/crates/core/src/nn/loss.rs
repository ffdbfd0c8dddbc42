use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Scalar};

/// Loss functions available to the training loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    #[default]
    SoftmaxCrossEntropy,
}

/// Softmax followed by cross entropy, per column (one column per example).
#[derive(Clone, Copy, Debug, Default)]
pub struct SoftmaxCrossEntropy;

fn check_shapes<T: Scalar>(y: &DenseMatrix<T>, t: &DenseMatrix<T>) -> Result<()> {
    if y.shape() != t.shape() {
        return Err(Error::invalid(format!(
            "loss: output {:?} vs targets {:?}",
            y.shape(),
            t.shape()
        )));
    }
    Ok(())
}

/// Verifies every column of `t` is a one-hot vector.
pub fn check_one_hot<T: Scalar>(t: &DenseMatrix<T>) -> Result<()> {
    for j in 0..t.cols() {
        let mut ones = 0;
        for i in 0..t.rows() {
            let v = t.get(i, j);
            if v == T::one() {
                ones += 1;
            } else if v != T::zero() {
                return Err(Error::invalid(format!("target column {j} is not one-hot")));
            }
        }
        if ones != 1 {
            return Err(Error::invalid(format!("target column {j} is not one-hot")));
        }
    }
    Ok(())
}

/// Column-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(y: &DenseMatrix<T>) -> DenseMatrix<T> {
    let (k, n) = y.shape();
    let mut out = DenseMatrix::zeros(k, n);
    for j in 0..n {
        let mut max = T::neg_infinity();
        for i in 0..k {
            max = max.max(y.get(i, j));
        }
        let mut sum = T::zero();
        for i in 0..k {
            let e = (y.get(i, j) - max).exp();
            out.set(i, j, e);
            sum += e;
        }
        for i in 0..k {
            out.set(i, j, out.get(i, j) / sum);
        }
    }
    out
}

impl SoftmaxCrossEntropy {
    /// Sum over the batch of `−log softmax(y)[target]`.
    pub fn loss<T: Scalar>(&self, y: &DenseMatrix<T>, t: &DenseMatrix<T>) -> Result<T> {
        check_shapes(y, t)?;
        let (k, n) = y.shape();
        let mut total = T::zero();
        for j in 0..n {
            let mut max = T::neg_infinity();
            for i in 0..k {
                max = max.max(y.get(i, j));
            }
            let mut sum = T::zero();
            for i in 0..k {
                sum += (y.get(i, j) - max).exp();
            }
            let log_z = max + sum.ln();
            for i in 0..k {
                let ti = t.get(i, j);
                if ti != T::zero() {
                    total += ti * (log_z - y.get(i, j));
                }
            }
        }
        Ok(total)
    }

    /// `softmax(y) − t`, column by column; unscaled by batch size.
    pub fn gradient<T: Scalar>(&self, y: &DenseMatrix<T>, t: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        check_shapes(y, t)?;
        let mut g = softmax(y);
        for (gi, &ti) in g.as_mut_slice().iter_mut().zip(t.as_slice()) {
            *gi -= ti;
        }
        Ok(g)
    }

    pub fn loss_checked<T: Scalar>(&self, y: &DenseMatrix<T>, t: &DenseMatrix<T>) -> Result<T> {
        check_one_hot(t)?;
        self.loss(y, t)
    }

    pub fn gradient_checked<T: Scalar>(&self, y: &DenseMatrix<T>, t: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        check_one_hot(t)?;
        self.gradient(y, t)
    }
}

/// Fraction of columns whose arg-max matches the target's arg-max.
pub fn accuracy<T: Scalar>(y: &DenseMatrix<T>, t: &DenseMatrix<T>) -> Result<f64> {
    check_shapes(y, t)?;
    if y.cols() == 0 {
        return Ok(0.0);
    }
    let argmax = |m: &DenseMatrix<T>, j: usize| {
        (0..m.rows())
            .max_by(|&a, &b| {
                m.get(a, j)
                    .partial_cmp(&m.get(b, j))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0)
    };
    let hits = (0..y.cols()).filter(|&j| argmax(y, j) == argmax(t, j)).count();
    Ok(hits as f64 / y.cols() as f64)
}
