//! Seeded weight initialization: truncated normal, fan-in scaled.

use super::tensor::{Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Normal(0, std) with samples beyond two standard deviations redrawn.
pub fn truncated_normal<T: Scalar>(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let normal = StandardNormal;
    let data = (0..shape.iter().product::<usize>())
        .map(|_| {
            loop {
                let draw: f64 = normal.sample(rng);
                if draw.abs() <= 2.0 {
                    return T::from_f64(draw * std);
                }
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape/product consistent by construction")
}

/// Fan-in scaled init for conv / deconv / linear weights: std = 1 / sqrt(fan_in).
pub fn fan_in_weights<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    truncated_normal(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}

/// Deterministic sub-stream derivation so independent call sites never share
/// or race a generator.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut base = [0u8; 32];
    base[..8].copy_from_slice(&seed.to_le_bytes());
    base[8..16].copy_from_slice(&stream.to_le_bytes());
    base[16..24].copy_from_slice(b"vae-ood!");
    ChaCha8Rng::from_seed(base)
}

/// Standard-normal noise tensor from a dedicated stream.
pub fn normal_noise<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let normal = StandardNormal;
    let data = (0..shape.iter().product::<usize>())
        .map(|_| {
            let v: f64 = normal.sample(rng);
            T::from_f64(v)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape/product consistent by construction")
}

/// Uniform bytes, used by synthetic datasets and mask generation.
pub fn uniform_bytes(count: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..count).map(|_| rng.random_range(0..=255u8)).collect()
}
