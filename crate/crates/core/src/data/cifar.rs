use std::path::Path;

use crate::data::{one_hot, Dataset, RawImages};
use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Scalar};

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_BYTES: usize = 3 * IMAGE_SIDE * IMAGE_SIDE;
pub const RECORD_BYTES: usize = IMAGE_BYTES + 1;
pub const RECORDS_PER_FILE: usize = 10_000;
pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

/// Per-channel mean and standard deviation of the training split, pixels in [0, 1].
pub const CHANNEL_MEAN: [f64; 3] = [0.4914, 0.4822, 0.4465];
pub const CHANNEL_STD: [f64; 3] = [0.2470, 0.2435, 0.2616];

#[inline]
pub fn normalize_pixel(p: u8, channel: usize) -> f64 {
    (p as f64 / 255.0 - CHANNEL_MEAN[channel]) / CHANNEL_STD[channel]
}

/// Inverse of [`normalize_pixel`], returning the pixel scaled to [0, 1].
#[inline]
pub fn denormalize_pixel(x: f64, channel: usize) -> f64 {
    x * CHANNEL_STD[channel] + CHANNEL_MEAN[channel]
}

/// Splits a batch file into pixels and labels. The whole buffer must hold
/// exactly `records` records.
pub fn parse_batch(bytes: &[u8], records: usize, path: &Path) -> Result<(Vec<u8>, Vec<usize>)> {
    if bytes.len() != records * RECORD_BYTES {
        return Err(Error::format(
            path,
            format!(
                "expected {} bytes ({records} records), found {}",
                records * RECORD_BYTES,
                bytes.len()
            ),
        ));
    }
    let mut pixels = Vec::with_capacity(records * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(records);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        if rec[0] > 9 {
            return Err(Error::format(path, format!("record {i} has label {}", rec[0])));
        }
        labels.push(rec[0] as usize);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((pixels, labels))
}

fn read_batch(dir: &Path, name: &str, records: usize) -> Result<(Vec<u8>, Vec<usize>)> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    parse_batch(&bytes, records, &path)
}

/// Normalized `IMAGE_BYTES × count` matrix from consecutive raw images.
pub fn images_to_matrix<T: Scalar>(raw: &[u8]) -> DenseMatrix<T> {
    let count = raw.len() / IMAGE_BYTES;
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut m = DenseMatrix::zeros(IMAGE_BYTES, count);
    for (j, img) in raw.chunks_exact(IMAGE_BYTES).enumerate() {
        for (f, &p) in img.iter().enumerate() {
            m.set(f, j, T::from_f64(normalize_pixel(p, f / plane)));
        }
    }
    m
}

/// Loads the binary CIFAR-10 distribution from `dir`.
pub fn load_cifar10(dir: impl AsRef<Path>) -> Result<Dataset<f32>> {
    load_cifar10_records(dir, RECORDS_PER_FILE)
}

/// Same as [`load_cifar10`] with a custom number of records per file.
pub fn load_cifar10_records(dir: impl AsRef<Path>, records_per_file: usize) -> Result<Dataset<f32>> {
    let dir = dir.as_ref();
    let mut train_px = Vec::with_capacity(TRAIN_FILES.len() * records_per_file * IMAGE_BYTES);
    let mut train_labels = Vec::new();
    for name in TRAIN_FILES {
        let (px, labels) = read_batch(dir, name, records_per_file)?;
        train_px.extend(px);
        train_labels.extend(labels);
    }
    let (test_px, test_labels) = read_batch(dir, TEST_FILE, records_per_file)?;
    let ds = Dataset::new(
        images_to_matrix(&train_px),
        one_hot(&train_labels, 10)?,
        images_to_matrix(&test_px),
        one_hot(&test_labels, 10)?,
    )?;
    ds.with_raw_train(RawImages::new(train_px)?)
}

/// Population mean and standard deviation per channel of raw images, in [0, 1] units.
pub fn channel_stats(raw: &RawImages) -> ([f64; 3], [f64; 3]) {
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut sum = [0f64; 3];
    let mut sq = [0f64; 3];
    for img in raw.as_bytes().chunks_exact(IMAGE_BYTES) {
        for c in 0..3 {
            for &p in &img[c * plane..(c + 1) * plane] {
                let v = p as f64 / 255.0;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
    }
    let n = (raw.len() * plane) as f64;
    let mean = sum.map(|s| s / n);
    let mut std = [0f64; 3];
    for c in 0..3 {
        std[c] = (sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt();
    }
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_inverts() {
        for c in 0..3 {
            for p in 0..=255u8 {
                let back = denormalize_pixel(normalize_pixel(p, c), c);
                let want = p as f64 / 255.0;
                assert!((back - want).abs() <= f64::EPSILON * 2.0, "p={p} c={c}");
            }
        }
    }

    #[test]
    fn bad_label_rejected() {
        let mut rec = vec![0u8; RECORD_BYTES];
        rec[0] = 10;
        assert!(matches!(
            parse_batch(&rec, 1, Path::new("x")),
            Err(Error::Format { .. })
        ));
    }
}
