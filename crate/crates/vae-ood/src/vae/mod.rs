//! The restoration VAE: convolutional encoder/decoder, ELBO objective,
//! training loop and checkpoint container.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointExtras, VaeCheckpoint};
pub use model::{elbo_loss, EncoderTrace, VaeModel};
pub use train::{apply_lossy_op, train, Freeze, InputMode, LossPoint, TrainConfig, TrainOutcome, TrainState};

use crate::datasets::ImageBatch;
use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    /// Base channel width; encoder widens to `2f`.
    pub f: usize,
    /// Latent dimension.
    pub z: usize,
    /// Input image width (square, divisible by 4).
    pub w: usize,
    pub in_channels: usize,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    /// KL weight: 1 for the standard objective, 10 for the β-VAE used as a
    /// lossy operator.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_slope() -> f64 {
    0.2
}

fn default_beta() -> f64 {
    1.0
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w % 4 != 0 || self.w == 0 {
            return Err(Error::config(format!("image width {} must be divisible by 4", self.w)));
        }
        if self.f == 0 || self.z == 0 {
            return Err(Error::config("f and z must be at least 1".to_string()));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::config(format!(
                "in_channels must be 1 or 3, got {}",
                self.in_channels
            )));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("leaky slope must be in (0,1)".to_string()));
        }
        Ok(())
    }

    /// Flattened feature length in front of the latent heads: `2f * (w/4)^2`.
    pub fn pre_head_len(&self) -> usize {
        2 * self.f * (self.w / 4) * (self.w / 4)
    }
}

/// Scale pixels to [0,1] floats in `[N, H, W, C]` layout (the encoder's input).
pub fn normalize_to_nhwc<T: Scalar>(batch: &ImageBatch) -> Tensor<T> {
    let (n, c, h, w) = (batch.n, batch.c, batch.h, batch.w);
    let plane = h * w;
    let mut data = vec![T::zero(); n * h * w * c];
    let inv = T::from_f64(1.0 / 255.0);
    for i in 0..n {
        let img = batch.image(i);
        let dst = &mut data[i * plane * c..(i + 1) * plane * c];
        for ch in 0..c {
            let src = &img[ch * plane..(ch + 1) * plane];
            for p in 0..plane {
                dst[p * c + ch] = T::from_f64(src[p] as f64) * inv;
            }
        }
    }
    Tensor::from_vec(&[n, h, w, c], data).expect("consistent dims")
}

/// Pixel classes in `[N, H, W, C]` site order (the NLL kernel's target order).
pub fn targets_nhwc(batch: &ImageBatch) -> Vec<u8> {
    let (n, c, h, w) = (batch.n, batch.c, batch.h, batch.w);
    let plane = h * w;
    let mut out = vec![0u8; n * plane * c];
    for i in 0..n {
        let img = batch.image(i);
        let dst = &mut out[i * plane * c..(i + 1) * plane * c];
        for ch in 0..c {
            let src = &img[ch * plane..(ch + 1) * plane];
            for p in 0..plane {
                dst[p * c + ch] = src[p];
            }
        }
    }
    out
}
