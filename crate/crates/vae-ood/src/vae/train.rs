//! Restoration training: lossy inputs, original targets, Adam on the ELBO.

use super::{normalize_to_nhwc, targets_nhwc, VaeModel};
use crate::datasets::ImageBatch;
use crate::error::{Error, Result};
use crate::lossy::{self, LossyOp};
use crate::nn::{adam_step, init, AdamState, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Micro-batch rows processed per forward/backward pass. Purely an internal
/// memory/cache knob: gradients accumulate across micro-batches, so the
/// update is identical to a full-batch step (fixed at compile time because
/// it also pins the noise stream alignment).
const MICRO_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Freeze {
    #[default]
    None,
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// Restoration: degrade the input, reconstruct the original.
    #[default]
    LossyToOriginal,
    /// Vanilla VAE.
    OriginalToOriginal,
    /// Degraded on both sides (the ER_lossy pre-training variant).
    LossyToLossy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub freeze: Freeze,
    #[serde(default)]
    pub input_mode: InputMode,
    /// Degradation applied to inputs; required unless the mode is
    /// original→original.
    #[serde(default)]
    pub lossy_op: Option<LossyOp>,
    /// Optional hard cap on optimizer steps (tests and overfit probes).
    #[serde(default)]
    pub max_steps: Option<usize>,
}

fn default_lr() -> f64 {
    3e-4
}

fn default_batch() -> usize {
    128
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1".to_string()));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be >= 1".to_string()));
        }
        if self.input_mode != InputMode::OriginalToOriginal && self.lossy_op.is_none() {
            return Err(Error::config(
                "lossy input mode needs a lossy_op".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Optimizer and RNG state carried across a save/resume boundary.
pub struct TrainState {
    pub adam: AdamState<f32>,
    pub data_rng_pos: u128,
    pub noise_rng_pos: u128,
    pub completed_epochs: usize,
    pub global_step: u64,
}

pub struct TrainOutcome {
    pub loss_curve: Vec<LossPoint>,
    pub final_loss: f64,
    pub state: TrainState,
}

/// Degrade a batch with the configured operator. Sample indices are the
/// dataset positions, which keeps per-sample masks stable across epochs and
/// between training and scoring.
pub fn apply_lossy_op(
    op: &LossyOp,
    batch: &ImageBatch,
    model_op: Option<&VaeModel<f32>>,
) -> Result<ImageBatch> {
    match op {
        LossyOp::Nearest { scale } => lossy::apply_nearest(batch, *scale),
        LossyOp::Bilinear { scale } => lossy::apply_bilinear(batch, *scale),
        LossyOp::MaskZero { ratio } => lossy::apply_mask(batch, *ratio, 0),
        LossyOp::Model { model_ref } => {
            let model = model_op.ok_or_else(|| {
                Error::config(format!("lossy op needs model '{model_ref}' but none was supplied"))
            })?;
            crate::scoring::model_reconstruction_u8(model, batch)
        }
    }
}

/// Train in place. `resume` continues a previous run (optimizer moments and
/// RNG positions restored), adding epochs up to `cfg.epochs` total.
pub fn train(
    model: &mut VaeModel<f32>,
    data: &ImageBatch,
    cfg: &TrainConfig,
    lossy_model: Option<&VaeModel<f32>>,
    resume: Option<TrainState>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.n == 0 {
        return Err(Error::input("empty training set".to_string()));
    }
    if data.c != model.config.in_channels || data.h != model.config.w {
        return Err(Error::config(format!(
            "dataset {}x{}x{} does not match model {}x{} ({} ch)",
            data.c, data.h, data.w, model.config.w, model.config.w, model.config.in_channels
        )));
    }

    let lossy_batch = match cfg.input_mode {
        InputMode::OriginalToOriginal => None,
        _ => Some(apply_lossy_op(
            cfg.lossy_op.as_ref().expect("validated"),
            data,
            lossy_model,
        )?),
    };
    let input_batch = lossy_batch.as_ref().unwrap_or(data);
    let target_batch = match cfg.input_mode {
        InputMode::LossyToLossy => input_batch,
        _ => data,
    };

    let inputs: Tensor<f32> = normalize_to_nhwc(input_batch);
    let targets = targets_nhwc(target_batch);

    let batch = cfg.batch.min(data.n);
    let steps_per_epoch = data.n / batch;
    if steps_per_epoch == 0 {
        return Err(Error::input("fewer images than one batch".to_string()));
    }

    let mut data_rng = init::seeded_rng(cfg.seed, 0xda7a);
    let mut noise_rng = init::seeded_rng(cfg.seed, 0x0153);
    let (mut adam, start_epoch, mut global_step) = match resume {
        Some(state) => {
            data_rng.set_word_pos(state.data_rng_pos);
            noise_rng.set_word_pos(state.noise_rng_pos);
            (state.adam, state.completed_epochs, state.global_step)
        }
        None => (AdamState::new(cfg.lr as f32, model.params()), 0, 0),
    };
    adam.lr = cfg.lr as f32;

    let frozen = model.frozen_mask(match cfg.freeze {
        Freeze::None => None,
        Freeze::Encoder => Some("encoder."),
        Freeze::Decoder => Some("decoder."),
    });
    let skip_encoder = cfg.freeze == Freeze::Encoder;
    let beta = model.config.beta as f32;
    let site_count = model.config.w * model.config.w * model.config.in_channels;

    let mut curve = Vec::new();
    let mut indices: Vec<usize> = (0..data.n).collect();
    let mut final_loss = f64::NAN;
    let mut done = false;

    for epoch in start_epoch..cfg.epochs {
        if done {
            break;
        }
        let epoch_start = std::time::Instant::now();
        // Fisher-Yates reshuffle per epoch.
        for i in 0..data.n.saturating_sub(1) {
            let j = data_rng.random_range(i..data.n);
            indices.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for step in 0..steps_per_epoch {
            let step_indices = &indices[step * batch..(step + 1) * batch];
            model.zero_grads();
            let weight = 1.0f32 / batch as f32;
            let mut nll_sum = 0.0;
            let mut kl_sum = 0.0;

            for chunk in step_indices.chunks(MICRO_BATCH) {
                let (x, t) = gather_micro(&inputs, &targets, chunk, site_count, model.config.in_channels);
                let noise = init::normal_noise(&[chunk.len(), model.config.z], &mut noise_rng);
                let (nll, kl) =
                    model.train_step_accumulate(&x, &t, &noise, beta, weight, skip_encoder)?;
                nll_sum += nll;
                kl_sum += kl;
            }

            let recon = nll_sum / batch as f64;
            let kl = kl_sum / batch as f64;
            let loss = recon + model.config.beta * kl;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss {loss} at epoch {epoch} step {step}"
                )));
            }
            adam_step(model.params_mut(), &mut adam, &frozen)?;
            global_step += 1;
            curve.push(LossPoint {
                step: global_step,
                loss,
                recon,
                kl,
            });
            epoch_loss += loss;
            final_loss = loss;

            if cfg.max_steps.map(|m| global_step >= m as u64).unwrap_or(false) {
                done = true;
                break;
            }
        }
        log::info!(
            "epoch {epoch}: mean loss {:.3} ({:.1}s, {} steps)",
            epoch_loss / steps_per_epoch as f64,
            epoch_start.elapsed().as_secs_f64(),
            global_step
        );
    }

    Ok(TrainOutcome {
        loss_curve: curve,
        final_loss,
        state: TrainState {
            adam,
            data_rng_pos: data_rng.get_word_pos(),
            noise_rng_pos: noise_rng.get_word_pos(),
            completed_epochs: cfg.epochs,
            global_step,
        },
    })
}

/// Copy selected rows into contiguous micro-batch tensors.
fn gather_micro(
    inputs: &Tensor<f32>,
    targets: &[u8],
    indices: &[usize],
    site_count: usize,
    _channels: usize,
) -> (Tensor<f32>, Vec<u8>) {
    let shape = inputs.shape();
    let row = shape[1] * shape[2] * shape[3];
    let mut x = Vec::with_capacity(indices.len() * row);
    let mut t = Vec::with_capacity(indices.len() * site_count);
    for &i in indices {
        x.extend_from_slice(&inputs.data()[i * row..(i + 1) * row]);
        t.extend_from_slice(&targets[i * site_count..(i + 1) * site_count]);
    }
    (
        Tensor::from_vec(&[indices.len(), shape[1], shape[2], shape[3]], x)
            .expect("consistent dims"),
        t,
    )
}
