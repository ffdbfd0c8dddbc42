use rand::Rng as _;

use crate::data::cifar::{normalize_pixel, IMAGE_BYTES, IMAGE_SIDE};
use crate::data::RawImages;
use crate::sparsity::Rng;
use crate::tensor::{DenseMatrix, Scalar};

/// Zero padding around each side before the random crop.
pub const PAD: i32 = 4;

/// Random horizontal flip followed by a 32×32 crop of the zero-padded
/// image, expressed as the crop's offset `(dx, dy)` from center.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentParams {
    pub flip: bool,
    pub dx: i32,
    pub dy: i32,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        flip: false,
        dx: 0,
        dy: 0,
    };

    pub fn sample(rng: &mut Rng) -> Self {
        Self {
            flip: rng.random_bool(0.5),
            dx: rng.random_range(-PAD..=PAD),
            dy: rng.random_range(-PAD..=PAD),
        }
    }
}

/// Writes the augmented copy of `src` into `dst`: output pixel `(r, c)`
/// comes from `(r + dy, c + dx)` of the (optionally flipped) source, or 0
/// outside it.
pub fn augment_image(src: &[u8], params: AugmentParams, dst: &mut [u8]) {
    assert_eq!(src.len(), IMAGE_BYTES);
    assert_eq!(dst.len(), IMAGE_BYTES);
    let side = IMAGE_SIDE as i32;
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    for ch in 0..3 {
        let s = &src[ch * plane..(ch + 1) * plane];
        let d = &mut dst[ch * plane..(ch + 1) * plane];
        for r in 0..side {
            for c in 0..side {
                let (sr, sc) = (r + params.dy, c + params.dx);
                d[(r * side + c) as usize] = if (0..side).contains(&sr) && (0..side).contains(&sc) {
                    let sc = if params.flip { side - 1 - sc } else { sc };
                    s[(sr * side + sc) as usize]
                } else {
                    0
                };
            }
        }
    }
}

/// Augments and normalizes the selected training images into a
/// `IMAGE_BYTES × indices.len()` batch.
pub fn augment_batch<T: Scalar>(raw: &RawImages, indices: &[usize], rng: &mut Rng) -> DenseMatrix<T> {
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut out = DenseMatrix::zeros(IMAGE_BYTES, indices.len());
    let mut buf = vec![0u8; IMAGE_BYTES];
    for (j, &idx) in indices.iter().enumerate() {
        augment_image(raw.image(idx), AugmentParams::sample(rng), &mut buf);
        for (f, &p) in buf.iter().enumerate() {
            out.set(f, j, T::from_f64(normalize_pixel(p, f / plane)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_with_pixel(r: usize, c: usize) -> Vec<u8> {
        let mut img = vec![0u8; IMAGE_BYTES];
        for ch in 0..3 {
            img[ch * 1024 + r * 32 + c] = 255;
        }
        img
    }

    fn find_white(img: &[u8]) -> Option<(i32, i32)> {
        (0..1024)
            .find(|&i| img[i] == 255)
            .map(|i| ((i / 32) as i32, (i % 32) as i32))
    }

    #[test]
    fn identity_params_copy() {
        let src: Vec<u8> = (0..IMAGE_BYTES).map(|i| (i % 251) as u8).collect();
        let mut dst = vec![0u8; IMAGE_BYTES];
        augment_image(&src, AugmentParams::IDENTITY, &mut dst);
        assert_eq!(src, dst);
    }

    #[test]
    fn flip_is_involution() {
        let src: Vec<u8> = (0..IMAGE_BYTES).map(|i| (i * 7 % 256) as u8).collect();
        let flip = AugmentParams {
            flip: true,
            ..AugmentParams::IDENTITY
        };
        let mut once = vec![0u8; IMAGE_BYTES];
        let mut twice = vec![0u8; IMAGE_BYTES];
        augment_image(&src, flip, &mut once);
        assert_ne!(once, src);
        augment_image(&once, flip, &mut twice);
        assert_eq!(twice, src);
    }

    #[test]
    fn displacement_within_pad() {
        let mut rng = crate::sparsity::Seed(3).stream(crate::sparsity::Stream::Augment, 0);
        let (r0, c0) = (15, 16);
        let src = image_with_pixel(r0, c0);
        let mut dst = vec![0u8; IMAGE_BYTES];
        for _ in 0..500 {
            let p = AugmentParams::sample(&mut rng);
            assert!((-PAD..=PAD).contains(&p.dx) && (-PAD..=PAD).contains(&p.dy));
            augment_image(&src, AugmentParams { flip: false, ..p }, &mut dst);
            let (r, c) = find_white(&dst).expect("pixel stays in view");
            assert_eq!((r0 as i32 - r, c0 as i32 - c), (p.dy, p.dx));
        }
    }
}
