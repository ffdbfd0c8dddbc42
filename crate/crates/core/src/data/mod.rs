//! Datasets and model persistence.

mod archive;
mod augment;
mod cifar;
pub mod npy;
mod synthetic;

pub use archive::{
    load_model, model_size_report, save_model, ArchiveInfo, LayerEntry, LayerSize, Manifest, SizeReport, MANIFEST_FILE,
    SCHEMA_VERSION,
};
pub use augment::{augment_batch, augment_image, AugmentParams, PAD};
pub use cifar::{
    channel_stats, denormalize_pixel, images_to_matrix, load_cifar10, load_cifar10_records, normalize_pixel,
    parse_batch, CHANNEL_MEAN, CHANNEL_STD, IMAGE_BYTES, IMAGE_SIDE, RECORDS_PER_FILE, RECORD_BYTES, TEST_FILE,
    TRAIN_FILES,
};
pub use synthetic::{synthetic_blobs, BlobSpec};

use crate::error::{Error, Result};
use crate::nn::check_one_hot;
use crate::tensor::{DenseMatrix, Scalar};

/// Raw 8-bit images, one `IMAGE_BYTES` record per example, channel planar.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImages {
    data: Vec<u8>,
}

impl RawImages {
    pub fn new(data: Vec<u8>) -> Result<Self> {
        if !data.len().is_multiple_of(IMAGE_BYTES) {
            return Err(Error::invalid("raw image buffer is not a whole number of images"));
        }
        Ok(Self { data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / IMAGE_BYTES
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.data[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }
}

/// Train and test splits, examples as columns, one-hot targets.
#[derive(Clone, Debug)]
pub struct Dataset<T = f32> {
    pub x_train: DenseMatrix<T>,
    pub t_train: DenseMatrix<T>,
    pub x_test: DenseMatrix<T>,
    pub t_test: DenseMatrix<T>,
    /// Unnormalized training images, present when augmentation is possible.
    pub raw_train: Option<RawImages>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        x_train: DenseMatrix<T>,
        t_train: DenseMatrix<T>,
        x_test: DenseMatrix<T>,
        t_test: DenseMatrix<T>,
    ) -> Result<Self> {
        if x_train.cols() != t_train.cols() || x_test.cols() != t_test.cols() {
            return Err(Error::invalid("inputs and targets disagree on example count"));
        }
        if x_test.cols() > 0 && (x_train.rows() != x_test.rows() || t_train.rows() != t_test.rows()) {
            return Err(Error::invalid("train and test splits disagree on dimensions"));
        }
        check_one_hot(&t_train)?;
        check_one_hot(&t_test)?;
        if !x_train.is_finite() || !x_test.is_finite() {
            return Err(Error::invalid("dataset contains non-finite inputs"));
        }
        Ok(Self {
            x_train,
            t_train,
            x_test,
            t_test,
            raw_train: None,
        })
    }

    pub fn with_raw_train(mut self, raw: RawImages) -> Result<Self> {
        if raw.len() != self.n_train() || self.features() != IMAGE_BYTES {
            return Err(Error::invalid("raw images do not match the training split"));
        }
        self.raw_train = Some(raw);
        Ok(self)
    }

    pub fn n_train(&self) -> usize {
        self.x_train.cols()
    }

    pub fn n_test(&self) -> usize {
        self.x_test.cols()
    }

    pub fn features(&self) -> usize {
        self.x_train.rows()
    }

    pub fn classes(&self) -> usize {
        self.t_train.rows()
    }
}

/// `classes × labels.len()` one-hot matrix.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<DenseMatrix<T>> {
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
    }
    Ok(DenseMatrix::from_fn(classes, labels.len(), |i, j| {
        if labels[j] == i {
            T::one()
        } else {
            T::zero()
        }
    }))
}
