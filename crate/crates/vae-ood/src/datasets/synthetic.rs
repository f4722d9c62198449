//! Synthetic OOD datasets: uniform pixel noise and per-image constants.

use super::{ImageBatch, Split};
use crate::error::Result;
use crate::nn::init::seeded_rng;
use rand::Rng;

const NOISE_STREAM: u64 = 0x401;
const CONSTANT_STREAM: u64 = 0x402;

/// Every pixel i.i.d. uniform in [0, 255].
pub fn gen_noise(count: usize, size: usize, channels: usize, seed: u64) -> Result<ImageBatch> {
    let mut rng = seeded_rng(seed, NOISE_STREAM);
    let pixels = (0..count * channels * size * size)
        .map(|_| rng.random_range(0..=255u8))
        .collect();
    ImageBatch::new("noise", Split::Test, count, channels, size, size, pixels)
}

/// One uniform value per image, replicated across all pixels and channels.
pub fn gen_constant(count: usize, size: usize, channels: usize, seed: u64) -> Result<ImageBatch> {
    let mut rng = seeded_rng(seed, CONSTANT_STREAM);
    let stride = channels * size * size;
    let mut pixels = vec![0u8; count * stride];
    for img in pixels.chunks_exact_mut(stride) {
        img.fill(rng.random_range(0..=255u8));
    }
    ImageBatch::new("constant", Split::Test, count, channels, size, size, pixels)
}
