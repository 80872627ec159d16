//! Two-class blob images used to train and exercise the tiny CNN fixture.
//!
//! Each 16×16 frame holds one bright elongated Gaussian blob at a random
//! position over a noisy mid-grey background: horizontal for class 0, vertical for
//! class 1. The ground-truth mask is the blob core. Pixel values are quantised to multiples of 1/255 so
//! an 8-bit PNG round trip is lossless.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::Image;
use crate::saliency::BinaryMask;

pub const BLOB_SIZE: usize = 16;

const BLOB_LONG: f64 = 4.5;
const BLOB_SHORT: f64 = 1.25;
const BLOB_PEAK: f64 = 0.9;
const MASK_LEVEL: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSample {
    pub image: Image,
    pub mask: BinaryMask,
    pub class: usize,
}

/// `count` samples with alternating classes, fully determined by `seed`.
pub fn blob_dataset(count: usize, seed: u64) -> Vec<BlobSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = Normal::new(0.3, 0.15).expect("valid normal");
    (0..count)
        .map(|i| {
            let class = i % 2;
            let cy: f64 = rng.random_range(5.5..10.5);
            let cx: f64 = rng.random_range(5.5..10.5);
            let (sx, sy) = if class == 0 { (BLOB_LONG, BLOB_SHORT) } else { (BLOB_SHORT, BLOB_LONG) };
            let n = BLOB_SIZE * BLOB_SIZE;
            let mut pixels = Vec::with_capacity(n);
            let mut bits = Vec::with_capacity(n);
            for y in 0..BLOB_SIZE {
                for x in 0..BLOB_SIZE {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    let bump = libm::exp(-(dx * dx / (sx * sx) + dy * dy / (sy * sy)) / 2.0);
                    let bg: f64 = background.sample(&mut rng);
                    let v = bg.clamp(0.0, 1.0).max(BLOB_PEAK * bump);
                    pixels.push(libm::round(v * 255.0) / 255.0);
                    bits.push(bump > MASK_LEVEL);
                }
            }
            BlobSample {
                image: Image::new(1, BLOB_SIZE, BLOB_SIZE, pixels).expect("valid blob image"),
                mask: BinaryMask::new(BLOB_SIZE, BLOB_SIZE, bits).expect("valid blob mask"),
                class,
            }
        })
        .collect()
}
