use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{one_hot, Dataset};
use crate::error::{Error, Result};
use crate::sparsity::Rng;
use crate::tensor::{DenseMatrix, Scalar};

/// Gaussian blobs: one isotropic cluster per class around a random center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub features: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of each cluster.
    pub spread: f64,
}

impl BlobSpec {
    pub fn new(classes: usize, features: usize, train_per_class: usize, spread: f64) -> Self {
        Self {
            classes,
            features,
            train_per_class,
            test_per_class: (train_per_class / 4).max(1),
            spread,
        }
    }
}

/// Draws a blob dataset. Centers have standard-normal coordinates; example
/// `i` belongs to class `i mod classes`.
pub fn synthetic_blobs<T: Scalar>(spec: &BlobSpec, rng: &mut Rng) -> Result<Dataset<T>> {
    if spec.classes == 0 || spec.features == 0 || spec.train_per_class == 0 {
        return Err(Error::invalid("blob dataset needs positive sizes"));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::invalid("blob spread must be finite and >= 0"));
    }
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.features).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let draw = |n: usize, rng: &mut Rng| -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        let labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
        let mut x = DenseMatrix::zeros(spec.features, n);
        for (j, &c) in labels.iter().enumerate() {
            for (f, &mu) in centers[c].iter().enumerate() {
                let noise: f64 = if spec.spread == 0.0 {
                    0.0
                } else {
                    StandardNormal.sample(rng)
                };
                x.set(f, j, T::from_f64(mu + spec.spread * noise));
            }
        }
        Ok((x, one_hot(&labels, spec.classes)?))
    };
    let (x_train, t_train) = draw(spec.classes * spec.train_per_class, rng)?;
    let (x_test, t_test) = draw(spec.classes * spec.test_per_class, rng)?;
    Dataset::new(x_train, t_train, x_test, t_test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::{Seed, Stream};

    #[test]
    fn zero_spread_collapses_classes() {
        let spec = BlobSpec::new(3, 5, 4, 0.0);
        let ds = synthetic_blobs::<f32>(&spec, &mut Seed(1).stream(Stream::Data, 0)).unwrap();
        for j in 3..ds.n_train() {
            for f in 0..5 {
                assert_eq!(ds.x_train.get(f, j), ds.x_train.get(f, j % 3));
            }
        }
    }

    #[test]
    fn seed_repeat_is_bit_identical() {
        let spec = BlobSpec::new(4, 7, 10, 0.5);
        let a = synthetic_blobs::<f32>(&spec, &mut Seed(9).stream(Stream::Data, 0)).unwrap();
        let b = synthetic_blobs::<f32>(&spec, &mut Seed(9).stream(Stream::Data, 0)).unwrap();
        assert_eq!(a.x_train, b.x_train);
        assert_eq!(a.x_test, b.x_test);
        assert_eq!(a.t_train, b.t_train);
    }
}
