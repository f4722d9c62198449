//! Degradation operators that produce `x_lossy` from `x`.
//!
//! The same operator instance is used at training and scoring time; it is
//! serialized into experiment configs and checkpoint metadata so a scoring
//! run can never drift from the operator the model was trained against.

use crate::datasets::ImageBatch;
use crate::error::{Error, Result};
use crate::nn::init::seeded_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fixed internal seed for mask patterns: masks depend only on the ratio and
/// the sample index, which keeps train-time and score-time degradation of a
/// given sample identical without threading a seed through every call site.
const MASK_STREAM: u64 = 0x6d61;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossyOp {
    /// Downsample by `scale` taking the top-left pixel of each block, then
    /// upsample by pixel replication.
    Nearest { scale: usize },
    /// Bilinear down and up resampling at `scale`.
    Bilinear { scale: usize },
    /// Zero out a deterministic per-sample fraction of pixel sites (shared
    /// across channels).
    MaskZero { ratio: f64 },
    /// Reconstructions of a separately trained model (the β-VAE variant);
    /// resolved to a checkpoint by the caller.
    Model { model_ref: String },
}

impl LossyOp {
    pub fn validate(&self, image_size: usize) -> Result<()> {
        match self {
            LossyOp::Nearest { scale } | LossyOp::Bilinear { scale } => {
                if ![2, 4, 8, 16].contains(scale) {
                    return Err(Error::config(format!("scale factor {scale} not in {{2,4,8,16}}")));
                }
                if image_size % scale != 0 {
                    return Err(Error::input(format!(
                        "scale {scale} does not divide image size {image_size}"
                    )));
                }
            }
            LossyOp::MaskZero { ratio } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::config(format!("mask ratio {ratio} not in (0,1)")));
                }
            }
            LossyOp::Model { .. } => {}
        }
        Ok(())
    }

    /// Short stable name for reports and run directories.
    pub fn label(&self) -> String {
        match self {
            LossyOp::Nearest { scale } => format!("nearest{scale}"),
            LossyOp::Bilinear { scale } => format!("bilinear{scale}"),
            LossyOp::MaskZero { ratio } => format!("mask{:.0}", ratio * 100.0),
            LossyOp::Model { model_ref } => format!("model:{model_ref}"),
        }
    }
}

impl Default for LossyOp {
    fn default() -> Self {
        LossyOp::Nearest { scale: 4 }
    }
}

/// Nearest-neighbour down/up-sampling: every `S×S` block becomes the value of
/// its top-left pixel.
pub fn apply_nearest(x: &ImageBatch, scale: usize) -> Result<ImageBatch> {
    LossyOp::Nearest { scale }.validate(x.h)?;
    let (h, w) = (x.h, x.w);
    let mut pixels = x.pixels().to_vec();
    let plane = h * w;
    for img in pixels.chunks_exact_mut(plane) {
        for by in (0..h).step_by(scale) {
            for bx in (0..w).step_by(scale) {
                let v = img[by * w + bx];
                for y in by..by + scale {
                    img[y * w + bx..y * w + bx + scale].fill(v);
                }
            }
        }
    }
    rebuild(x, pixels)
}

/// Bilinear down then up resampling, rounded and clamped.
pub fn apply_bilinear(x: &ImageBatch, scale: usize) -> Result<ImageBatch> {
    LossyOp::Bilinear { scale }.validate(x.h)?;
    let small = crate::datasets::resize(x, x.h / scale)?;
    let back = crate::datasets::resize(&small, x.h)?;
    rebuild(x, back.pixels().to_vec())
}

/// Zero exactly `round(ratio * H * W)` pixel sites per channel; the site set
/// is shared across channels and deterministic in `sample_index`.
pub fn apply_mask(x: &ImageBatch, ratio: f64, first_sample_index: usize) -> Result<ImageBatch> {
    LossyOp::MaskZero { ratio }.validate(x.h)?;
    let plane = x.h * x.w;
    let zeroed = (ratio * plane as f64).round() as usize;
    let mut pixels = x.pixels().to_vec();
    let stride = x.image_len();
    for i in 0..x.n {
        let sites = mask_sites(plane, zeroed, (first_sample_index + i) as u64);
        let img = &mut pixels[i * stride..(i + 1) * stride];
        for ch in 0..x.c {
            for &s in &sites {
                img[ch * plane + s] = 0;
            }
        }
    }
    rebuild(x, pixels)
}

fn mask_sites(plane: usize, zeroed: usize, sample_index: u64) -> Vec<usize> {
    let mut rng = seeded_rng(sample_index, MASK_STREAM);
    let mut sites: Vec<usize> = (0..plane).collect();
    for i in 0..plane.saturating_sub(1) {
        let j = rng.random_range(i..plane);
        sites.swap(i, j);
    }
    sites.truncate(zeroed);
    sites
}

fn rebuild(x: &ImageBatch, pixels: Vec<u8>) -> Result<ImageBatch> {
    ImageBatch::new(x.dataset_id.clone(), x.split, x.n, x.c, x.h, x.w, pixels)
}
