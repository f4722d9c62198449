//! Per-sample OOD scores.
//!
//! The primary score is the restoration improvement
//! `E(x) = e(x, x_lossy) - e(x, x')` plus a complexity compensation term
//! `lambda * (L(x) - L(x_lossy))`. Higher means more in-distribution. The
//! log-likelihood (LL) and input-complexity (IC) baselines come along in
//! every record so one scoring pass feeds all three evaluations.

use crate::complexity::complexity;
use crate::datasets::ImageBatch;
use crate::error::{Error, Result};
use crate::lossy::LossyOp;
use crate::nn::{categorical_nll, expected_pixel_values, gaussian_kl, Tensor};
use crate::vae::{apply_lossy_op, normalize_to_nhwc, targets_nhwc, VaeModel};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Point-mass clip for the image-vs-image cross-entropy: the matching class
/// carries probability `1 - 1e-6`, the rest share the remainder uniformly.
const LIFT_EPS: f64 = 1e-6;

/// Images scored per forward pass.
const SCORE_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ErrorFn {
    #[default]
    Ce,
    Mae,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeEPolicy {
    /// Eq. form taken literally: the complexity term is always added.
    #[default]
    AlwaysAdd,
    /// Add the complexity term only when the improvement is non-negative.
    SkipComplexityWhenENegative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub error_fn: ErrorFn,
    /// Override the checkpoint's degradation operator (needed to score a
    /// vanilla checkpoint that never had one).
    #[serde(default)]
    pub lossy_op: Option<LossyOp>,
    #[serde(default)]
    pub negative_e_policy: NegativeEPolicy,
}

fn default_lambda() -> f64 {
    1.0
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            lambda: 1.0,
            error_fn: ErrorFn::Ce,
            lossy_op: None,
            negative_e_policy: NegativeEPolicy::AlwaysAdd,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreRecord {
    pub sample: usize,
    pub e_lossy: f64,
    pub e_recon: f64,
    pub e: f64,
    pub complexity_delta: f64,
    pub er: f64,
    pub ll: f64,
    pub ic: f64,
    pub config_digest: String,
}

/// Deterministic reconstruction (posterior mean, expected pixel values)
/// rounded back to `u8` planes. Doubles as the model-based lossy operator.
pub fn model_reconstruction_u8(model: &VaeModel<f32>, batch: &ImageBatch) -> Result<ImageBatch> {
    if batch.c != model.config.in_channels || batch.h != model.config.w {
        return Err(Error::config(format!(
            "batch {}x{}x{} does not fit model ({}ch, w={})",
            batch.c, batch.h, batch.w, model.config.in_channels, model.config.w
        )));
    }
    let mut pixels = vec![0u8; batch.pixels().len()];
    let stride = batch.image_len();
    for start in (0..batch.n).step_by(SCORE_CHUNK) {
        let end = (start + SCORE_CHUNK).min(batch.n);
        let chunk = batch.select(&(start..end).collect::<Vec<_>>())?;
        let x: Tensor<f32> = normalize_to_nhwc(&chunk);
        let (mu, _) = model.encode(&x)?;
        let logits = model.decode(&mu)?;
        let expected = expected_pixel_values(&logits, model.config.in_channels)?;
        // NHWC sites back to NCHW planes.
        let (c, plane) = (batch.c, batch.h * batch.w);
        for i in 0..chunk.n {
            let dst = &mut pixels[(start + i) * stride..(start + i + 1) * stride];
            for p in 0..plane {
                for ch in 0..c {
                    dst[ch * plane + p] =
                        expected[(i * plane + p) * c + ch].round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    ImageBatch::new(
        batch.dataset_id.clone(),
        batch.split,
        batch.n,
        batch.c,
        batch.h,
        batch.w,
        pixels,
    )
}

/// Image-vs-image error for the chosen function, summed over sites.
/// CE lifts the reference image to a clipped point-mass categorical.
pub fn image_error(fn_kind: ErrorFn, x: &[u8], reference: &[u8]) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(Error::input("image size mismatch".to_string()));
    }
    let e = match fn_kind {
        ErrorFn::Mae => x
            .iter()
            .zip(reference)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum(),
        ErrorFn::Mse => x
            .iter()
            .zip(reference)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum(),
        ErrorFn::Ce => {
            let match_cost = -(1.0 - LIFT_EPS).ln();
            let miss_cost = -(LIFT_EPS / 255.0).ln();
            x.iter()
                .zip(reference)
                .map(|(&a, &b)| if a == b { match_cost } else { miss_cost })
                .sum()
        }
    };
    Ok(e)
}

/// Error between an image and real-valued reconstruction pixels (MAE/MSE) in
/// the same site order.
fn image_error_real(fn_kind: ErrorFn, x: &[u8], recon: &[f32]) -> f64 {
    match fn_kind {
        ErrorFn::Mae => x
            .iter()
            .zip(recon)
            .map(|(&a, &r)| (a as f64 - r as f64).abs())
            .sum(),
        ErrorFn::Mse => x
            .iter()
            .zip(recon)
            .map(|(&a, &r)| {
                let d = a as f64 - r as f64;
                d * d
            })
            .sum(),
        ErrorFn::Ce => unreachable!("CE reconstruction error comes from logits"),
    }
}

/// The improvement metric `E = e(x, x_lossy) - e(x, x')`.
pub fn e_score(e_lossy: f64, e_recon: f64) -> f64 {
    e_lossy - e_recon
}

/// Combine improvement and complexity change under the configured policy.
pub fn er_from_parts(e: f64, delta_nats: f64, cfg: &ScoreConfig) -> f64 {
    match cfg.negative_e_policy {
        NegativeEPolicy::AlwaysAdd => e + cfg.lambda * delta_nats,
        NegativeEPolicy::SkipComplexityWhenENegative => {
            if e >= 0.0 {
                e + cfg.lambda * delta_nats
            } else {
                e
            }
        }
    }
}

/// Score every sample of `batch` against a checkpointed model.
///
/// The degradation operator comes from `cfg.lossy_op`, falling back to the
/// operator stored in the checkpoint metadata (`trained_op`).
pub fn score_batch(
    model: &VaeModel<f32>,
    trained_op: Option<&LossyOp>,
    batch: &ImageBatch,
    cfg: &ScoreConfig,
    lossy_model: Option<&VaeModel<f32>>,
    config_digest: &str,
) -> Result<Vec<ScoreRecord>> {
    cfg.validate()?;
    let op = cfg
        .lossy_op
        .as_ref()
        .or(trained_op)
        .ok_or_else(|| {
            Error::config("no lossy operator: neither the config nor the checkpoint names one".to_string())
        })?;
    op.validate(batch.h)?;

    let lossy = apply_lossy_op(op, batch, lossy_model)?;
    let channels = model.config.in_channels;
    let dims = batch.image_len() as f64;
    let mut records = Vec::with_capacity(batch.n);

    for start in (0..batch.n).step_by(SCORE_CHUNK) {
        let end = (start + SCORE_CHUNK).min(batch.n);
        let idx: Vec<usize> = (start..end).collect();
        let x_chunk = batch.select(&idx)?;
        let lossy_chunk = lossy.select(&idx)?;

        // Restoration path: reconstruct from the degraded input.
        let x_lossy_in: Tensor<f32> = normalize_to_nhwc(&lossy_chunk);
        let (mu_r, _) = model.encode(&x_lossy_in)?;
        let logits_restore = model.decode(&mu_r)?;

        // Likelihood path: the model as a plain VAE on the raw input.
        let x_raw: Tensor<f32> = normalize_to_nhwc(&x_chunk);
        let (mu, lv) = model.encode(&x_raw)?;
        let logits_raw = model.decode(&mu)?;

        let targets = targets_nhwc(&x_chunk);
        let nll_raw = categorical_nll(&logits_raw, &targets, channels)?;
        let kl_raw = gaussian_kl(&mu, &lv)?;

        let e_recon_all: Vec<f64> = match cfg.error_fn {
            ErrorFn::Ce => categorical_nll(&logits_restore, &targets, channels)?
                .iter()
                .map(|&v| v as f64)
                .collect(),
            _ => {
                let expected = expected_pixel_values(&logits_restore, channels)?;
                let sites = x_chunk.image_len();
                (0..x_chunk.n)
                    .map(|i| {
                        image_error_real(
                            cfg.error_fn,
                            &targets[i * sites..(i + 1) * sites],
                            &expected[i * sites..(i + 1) * sites],
                        )
                    })
                    .collect()
            }
        };

        let lossy_targets = targets_nhwc(&lossy_chunk);
        for i in 0..x_chunk.n {
            let sites = x_chunk.image_len();
            let e_lossy = image_error(
                cfg.error_fn,
                &targets[i * sites..(i + 1) * sites],
                &lossy_targets[i * sites..(i + 1) * sites],
            )?;
            let e_recon = e_recon_all[i];
            let e = e_score(e_lossy, e_recon);
            let delta = crate::complexity::complexity_delta(x_chunk.view(i), lossy_chunk.view(i));
            let er = er_from_parts(e, delta, cfg);

            let nll = nll_raw[i] as f64;
            let kl = kl_raw[i] as f64;
            let ll = -(nll + kl);
            let nll_bits_per_dim = nll / std::f64::consts::LN_2 / dims;
            let l_bits_per_dim = complexity(x_chunk.view(i)).bits as f64 / dims;
            let ic = -nll_bits_per_dim - l_bits_per_dim;

            records.push(ScoreRecord {
                sample: start + i,
                e_lossy,
                e_recon,
                e,
                complexity_delta: delta,
                er,
                ll,
                ic,
                config_digest: config_digest.to_string(),
            });
        }
    }
    Ok(records)
}

/// Digest binding a score file to the producing configuration and model.
pub fn scoring_digest(cfg: &ScoreConfig, model_provenance: &str) -> String {
    let payload = format!(
        "{}|{}",
        toml::to_string(cfg).unwrap_or_default(),
        model_provenance
    );
    crate::util::sha256_hex(payload)[..16].to_string()
}

/// Write records as JSON-lines.
pub fn write_records_jsonl(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    for r in records {
        serde_json::to_writer(&mut file, r).map_err(|e| Error::Other(e.to_string()))?;
        file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    file.lines()
        .map(|line| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::format(path, e.to_string()))
        })
        .collect()
}

/// Write records as CSV with a fixed column order.
pub fn write_records_csv(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let io = |e| Error::io(path, e);
    writeln!(file, "sample,e_lossy,e_recon,e,complexity_delta,er,ll,ic,config_digest").map_err(io)?;
    for r in records {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{}",
            r.sample, r.e_lossy, r.e_recon, r.e, r.complexity_delta, r.er, r.ll, r.ic, r.config_digest
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_constant, gen_noise, Split};
    use crate::vae::VaeConfig;

    fn tiny_model(seed: u64) -> VaeModel<f32> {
        VaeModel::new(
            VaeConfig {
                f: 2,
                z: 4,
                w: 16,
                in_channels: 1,
                leaky_slope: 0.2,
                beta: 1.0,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn identical_images_have_zero_mae() {
        let a = [5u8, 10, 200];
        assert_eq!(image_error(ErrorFn::Mae, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn extreme_single_site_errors() {
        assert_eq!(image_error(ErrorFn::Mae, &[0], &[255]).unwrap(), 255.0);
        assert_eq!(image_error(ErrorFn::Mse, &[0], &[255]).unwrap(), 65025.0);
    }

    #[test]
    fn ce_of_uniform_logits_is_ln_256_per_site() {
        let logits = Tensor::<f32>::zeros(&[1, 1, 1, 256]);
        let nll = categorical_nll(&logits, &[44], 1).unwrap();
        assert!((nll[0] as f64 - 256f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn ce_lift_is_near_zero_on_match_and_large_on_miss() {
        let match_e = image_error(ErrorFn::Ce, &[7], &[7]).unwrap();
        let miss_e = image_error(ErrorFn::Ce, &[7], &[8]).unwrap();
        assert!(match_e < 1e-5);
        assert!((miss_e - (255.0f64 / 1e-6).ln()).abs() < 1e-9);
    }

    #[test]
    fn perfect_restoration_makes_e_the_lossy_error() {
        let e_lossy = 123.0;
        assert_eq!(e_score(e_lossy, 0.0), e_lossy);
        // No improvement at all gives exactly zero.
        assert_eq!(e_score(e_lossy, e_lossy), 0.0);
    }

    #[test]
    fn lambda_zero_reduces_er_to_e() {
        let cfg = ScoreConfig {
            lambda: 0.0,
            ..Default::default()
        };
        for (e, d) in [(1.5, 100.0), (-2.0, 55.0), (0.0, -3.0)] {
            assert_eq!(er_from_parts(e, d, &cfg), e);
        }
    }

    #[test]
    fn negative_e_policy_gates_the_complexity_term() {
        let always = ScoreConfig::default();
        let skip = ScoreConfig {
            negative_e_policy: NegativeEPolicy::SkipComplexityWhenENegative,
            ..Default::default()
        };
        assert_eq!(er_from_parts(-1.0, 10.0, &always), 9.0);
        assert_eq!(er_from_parts(-1.0, 10.0, &skip), -1.0);
        assert_eq!(er_from_parts(1.0, 10.0, &skip), 11.0);
    }

    #[test]
    fn constant_image_er_equals_e() {
        // The nearest operator is the identity on constants, so the
        // complexity delta vanishes and E = -e_recon <= 0 under MAE.
        let model = tiny_model(3);
        let batch = gen_constant(2, 16, 1, 8).unwrap();
        let cfg = ScoreConfig {
            error_fn: ErrorFn::Mae,
            lossy_op: Some(LossyOp::Nearest { scale: 4 }),
            ..Default::default()
        };
        let records = score_batch(&model, None, &batch, &cfg, None, "t").unwrap();
        for r in &records {
            assert_eq!(r.complexity_delta, 0.0);
            assert_eq!(r.er, r.e);
            assert_eq!(r.e_lossy, 0.0);
            assert!(r.e <= 0.0);
        }
    }

    #[test]
    fn scoring_is_deterministic() {
        let model = tiny_model(5);
        let batch = gen_noise(3, 16, 1, 21).unwrap();
        let cfg = ScoreConfig {
            lossy_op: Some(LossyOp::Nearest { scale: 4 }),
            ..Default::default()
        };
        let a = score_batch(&model, None, &batch, &cfg, None, "t").unwrap();
        let b = score_batch(&model, None, &batch, &cfg, None, "t").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ll_is_consistent_with_elbo_parts() {
        let model = tiny_model(9);
        let batch = gen_noise(2, 16, 1, 4).unwrap();
        let cfg = ScoreConfig {
            lossy_op: Some(LossyOp::Nearest { scale: 4 }),
            ..Default::default()
        };
        let records = score_batch(&model, None, &batch, &cfg, None, "t").unwrap();

        let x: Tensor<f32> = normalize_to_nhwc(&batch);
        let (mu, lv) = model.encode(&x).unwrap();
        let logits = model.decode(&mu).unwrap();
        let nll = categorical_nll(&logits, &targets_nhwc(&batch), 1).unwrap();
        let kl = gaussian_kl(&mu, &lv).unwrap();
        for (i, r) in records.iter().enumerate() {
            let want = -(nll[i] as f64 + kl[i] as f64);
            assert!((r.ll - want).abs() < 1e-6, "sample {i}");
            assert!(r.ic.is_finite() && r.ic < 0.0);
        }
    }

    #[test]
    fn reconstruction_as_u8_has_model_shape_and_range() {
        let model = tiny_model(13);
        let batch = gen_noise(2, 16, 1, 30).unwrap();
        let recon = model_reconstruction_u8(&model, &batch).unwrap();
        assert_eq!((recon.n, recon.c, recon.h, recon.w), (2, 1, 16, 16));
        let again = model_reconstruction_u8(&model, &batch).unwrap();
        assert_eq!(recon.pixels(), again.pixels());
    }

    #[test]
    fn jsonl_round_trip() {
        let rec = ScoreRecord {
            sample: 3,
            e_lossy: 1.0,
            e_recon: 0.25,
            e: 0.75,
            complexity_delta: 10.0,
            er: 10.75,
            ll: -100.0,
            ic: -9.5,
            config_digest: "abcd".to_string(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        write_records_jsonl(&path, &[rec.clone()]).unwrap();
        assert_eq!(read_records_jsonl(&path).unwrap(), vec![rec]);
    }

    #[test]
    fn mismatched_channels_is_config_error() {
        let model = tiny_model(2);
        let batch = gen_noise(1, 16, 3, 2).unwrap();
        let cfg = ScoreConfig {
            lossy_op: Some(LossyOp::Nearest { scale: 4 }),
            ..Default::default()
        };
        assert!(score_batch(&model, None, &batch, &cfg, None, "t").is_err());
        let _ = ImageBatch::new("x", Split::Test, 0, 1, 4, 4, vec![]);
    }
}
