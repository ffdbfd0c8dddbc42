//! Mini-batch SGD loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{augment_batch, Dataset};
use crate::error::{Error, Result};
use crate::nn::{accuracy, SoftmaxCrossEntropy};
use crate::sparsity::{Seed, Stream};
use crate::tensor::{DenseMatrix, Scalar};
use crate::train::{LrSchedule, SequentialModel};

/// Columns per forward pass during evaluation.
const EVAL_CHUNK: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: Seed,
    /// Random flip and crop of the raw training images each batch.
    /// Ignored when the dataset carries no raw images.
    pub augment: bool,
    /// Measure train and test accuracy after every epoch.
    pub evaluate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 100,
            shuffle: true,
            seed: Seed::default(),
            augment: false,
            evaluate: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-example loss over the epoch's batches.
    pub train_loss: f64,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    /// Time spent in forward, loss gradient, backward and update.
    pub seconds: f64,
}

/// Inference-mode accuracy of `model` on `(x, t)`.
pub fn evaluate<T: Scalar>(model: &mut SequentialModel<T>, x: &DenseMatrix<T>, t: &DenseMatrix<T>) -> Result<f64> {
    let n = x.cols();
    if n == 0 {
        return Ok(0.0);
    }
    let mut correct = 0.0;
    let mut start = 0;
    while start < n {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let y = model.predict(&x.select_columns(&idx))?;
        correct += accuracy(&y, &t.select_columns(&idx))? * idx.len() as f64;
        start += EVAL_CHUNK;
    }
    Ok(correct / n as f64)
}

pub fn sgd_train<T: Scalar>(
    model: &mut SequentialModel<T>,
    data: &Dataset<T>,
    loss: &SoftmaxCrossEntropy,
    schedule: &LrSchedule,
    config: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    sgd_train_with(model, data, loss, schedule, config, |_| {})
}

/// Like [`sgd_train`], calling `on_epoch` after each epoch.
pub fn sgd_train_with<T: Scalar>(
    model: &mut SequentialModel<T>,
    data: &Dataset<T>,
    loss: &SoftmaxCrossEntropy,
    schedule: &LrSchedule,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    schedule.validate()?;
    let n = data.n_train();
    if config.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if n < config.batch_size {
        return Err(Error::invalid(format!(
            "{n} training examples cannot fill a batch of {}",
            config.batch_size
        )));
    }
    if data.features() != model.input_size() {
        return Err(Error::invalid(format!(
            "dataset has {} features, model expects {}",
            data.features(),
            model.input_size()
        )));
    }
    if data.classes() != model.output_size() {
        return Err(Error::invalid(format!(
            "dataset has {} classes, model outputs {}",
            data.classes(),
            model.output_size()
        )));
    }
    let k = n / config.batch_size;
    let scale = T::from_f64(1.0 / config.batch_size as f64);
    let raw = data.raw_train.as_ref().filter(|_| config.augment);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = schedule.lr_at(epoch, config.epochs);
        if config.shuffle {
            order.sort_unstable();
            order.shuffle(&mut config.seed.stream(Stream::Shuffle, epoch as u64));
        }
        let mut aug_rng = config.seed.stream(Stream::Augment, epoch as u64);
        let mut seconds = 0.0;
        let mut total_loss = 0.0;
        for b in 0..k {
            let idx = &order[b * config.batch_size..(b + 1) * config.batch_size];
            let x = match raw {
                Some(raw) => augment_batch(raw, idx, &mut aug_rng),
                None => data.x_train.select_columns(idx),
            };
            let t = data.t_train.select_columns(idx);

            let started = Instant::now();
            let y = model.feedforward(&x)?;
            let mut dy = loss.gradient(&y, &t)?;
            dy.scale_in_place(scale);
            model.backpropagate(&y, dy)?;
            model.optimize(lr)?;
            seconds += started.elapsed().as_secs_f64();

            let l = loss.loss(&y, &t)?.as_f64();
            if !l.is_finite() {
                return Err(Error::state(format!("loss diverged in epoch {epoch}, batch {b}")));
            }
            total_loss += l;
        }
        let (train_acc, test_acc) = if config.evaluate {
            let train = evaluate(model, &data.x_train, &data.t_train)?;
            let test = (data.n_test() > 0)
                .then(|| evaluate(model, &data.x_test, &data.t_test))
                .transpose()?;
            (Some(train), test)
        } else {
            (None, None)
        };
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_loss: total_loss / (k * config.batch_size) as f64,
            train_acc,
            test_acc,
            seconds,
        };
        on_epoch(&metrics);
        history.push(metrics);
    }
    Ok(history)
}
