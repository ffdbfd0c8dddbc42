use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{axpby, sparse_combine, CsrMatrix, Scalar};

/// Per-layer update rule. No weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    #[default]
    GradientDescent,
    Momentum {
        mu: f64,
        nesterov: bool,
    },
}

impl OptimizerSpec {
    pub fn momentum(mu: f64) -> Self {
        OptimizerSpec::Momentum { mu, nesterov: false }
    }

    pub fn nesterov(mu: f64) -> Self {
        OptimizerSpec::Momentum { mu, nesterov: true }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OptimizerSpec::GradientDescent => Ok(()),
            OptimizerSpec::Momentum { mu, .. } if (0.0..1.0).contains(&mu) => Ok(()),
            OptimizerSpec::Momentum { mu, .. } => Err(Error::invalid(format!(
                "momentum coefficient must lie in [0, 1), got {mu}"
            ))),
        }
    }

    pub fn has_velocity(&self) -> bool {
        matches!(self, OptimizerSpec::Momentum { .. })
    }
}

/// One optimizer step on a sparse parameter, done entirely with
/// [`sparse_combine`]:
///
/// * gradient descent: `w ← w − η·g`
/// * momentum: `v ← μ·v + g`, then `w ← w − η·v`
/// * Nesterov: `v ← μ·v + g`, then `w ← w − η·g − η·μ·v`
pub fn sparse_step<T: Scalar>(
    spec: &OptimizerSpec,
    w: &mut CsrMatrix<T>,
    g: &CsrMatrix<T>,
    velocity: Option<&mut CsrMatrix<T>>,
    eta: T,
) -> Result<()> {
    match (*spec, velocity) {
        (OptimizerSpec::GradientDescent, _) => sparse_combine(T::one(), w, -eta, g),
        (OptimizerSpec::Momentum { mu, nesterov }, Some(v)) => {
            let mu = T::from_f64(mu);
            sparse_combine(mu, v, T::one(), g)?;
            if nesterov {
                sparse_combine(T::one(), w, -eta, g)?;
                sparse_combine(T::one(), w, -(eta * mu), v)
            } else {
                sparse_combine(T::one(), w, -eta, v)
            }
        }
        (OptimizerSpec::Momentum { .. }, None) => Err(Error::state("momentum optimizer without a velocity buffer")),
    }
}

/// Same update rule as [`sparse_step`] on contiguous dense storage.
pub fn dense_step<T: Scalar>(
    spec: &OptimizerSpec,
    w: &mut [T],
    g: &[T],
    velocity: Option<&mut [T]>,
    eta: T,
) -> Result<()> {
    if w.len() != g.len() {
        return Err(Error::invalid(format!(
            "optimizer: parameter length {} vs gradient length {}",
            w.len(),
            g.len()
        )));
    }
    match (*spec, velocity) {
        (OptimizerSpec::GradientDescent, _) => axpby(T::one(), w, -eta, g),
        (OptimizerSpec::Momentum { mu, nesterov }, Some(v)) => {
            if v.len() != w.len() {
                return Err(Error::invalid("optimizer: velocity length mismatch"));
            }
            let mu = T::from_f64(mu);
            axpby(mu, v, T::one(), g);
            if nesterov {
                axpby(T::one(), w, -eta, g);
                axpby(T::one(), w, -(eta * mu), v);
            } else {
                axpby(T::one(), w, -eta, v);
            }
        }
        (OptimizerSpec::Momentum { .. }, None) => {
            return Err(Error::state("momentum optimizer without a velocity buffer"))
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SparsityPattern;

    #[test]
    fn gd_step() {
        let mut w = vec![1.0f64];
        dense_step(&OptimizerSpec::GradientDescent, &mut w, &[2.0], None, 0.1).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_zero_velocity_is_noop() {
        let p = SparsityPattern::full(2, 2).unwrap();
        let mut w = CsrMatrix::new(p.clone(), vec![1.0f32, -2.0, 3.0, 0.5]).unwrap();
        let before = w.clone();
        let g = CsrMatrix::zeros_like(&p);
        let mut v = CsrMatrix::zeros_like(&p);
        sparse_step(&OptimizerSpec::nesterov(0.9), &mut w, &g, Some(&mut v), 0.1).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn rejects_bad_mu_and_missing_state() {
        assert!(OptimizerSpec::momentum(1.0).validate().is_err());
        assert!(OptimizerSpec::momentum(-0.1).validate().is_err());
        let mut w = vec![0.0f32];
        assert!(dense_step(&OptimizerSpec::momentum(0.5), &mut w, &[1.0], None, 0.1).is_err());
        assert!(dense_step(&OptimizerSpec::GradientDescent, &mut w, &[1.0, 2.0], None, 0.1).is_err());
    }

    #[test]
    fn sparse_step_rejects_foreign_pattern() {
        let p = SparsityPattern::full(1, 2).unwrap();
        let q = SparsityPattern::from_sorted_positions(1, 2, &[0]).unwrap();
        let mut w = CsrMatrix::<f32>::zeros_like(&p);
        let g = CsrMatrix::<f32>::zeros_like(&q);
        assert!(sparse_step(&OptimizerSpec::GradientDescent, &mut w, &g, None, 0.1).is_err());
    }
}
