//! Checkpoint container: header (format version, config, training
//! provenance), then named parameter tensors, optionally followed by
//! optimizer moments and RNG positions so training can resume exactly.

use super::train::TrainState;
use super::{InputMode, VaeConfig, VaeModel};
use crate::container::{read_record, write_record};
use crate::error::{Error, Result};
use crate::lossy::LossyOp;
use crate::nn::{AdamState, Parameter, Tensor};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"VODCKPT1";
const VERSION: u32 = 1;

/// Training provenance: enough to reproduce the scoring configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub dataset_id: String,
    #[serde(default)]
    pub lossy_op: Option<LossyOp>,
    #[serde(default)]
    pub input_mode: InputMode,
    pub epochs: usize,
    pub seed: u64,
    pub final_loss: f64,
}

/// Optimizer scalars and RNG positions (moments live in tensor records).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointExtras {
    pub adam_step: u64,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// u128 positions as strings (TOML has no 128-bit integers).
    pub data_rng_pos: String,
    pub noise_rng_pos: String,
    pub completed_epochs: usize,
    pub global_step: u64,
}

pub struct VaeCheckpoint {
    pub config: VaeConfig,
    pub meta: CheckpointMeta,
    pub params: Vec<Parameter<f32>>,
    pub extras: Option<CheckpointExtras>,
    /// Present only when extras are: optimizer moment buffers by param order.
    pub moments: Option<(Vec<Vec<f32>>, Vec<Vec<f32>>)>,
}

impl VaeCheckpoint {
    pub fn from_model(model: &VaeModel<f32>, meta: CheckpointMeta) -> Self {
        VaeCheckpoint {
            config: model.config.clone(),
            meta,
            params: model.params().to_vec(),
            extras: None,
            moments: None,
        }
    }

    pub fn with_state(mut self, state: &TrainState) -> Self {
        self.extras = Some(CheckpointExtras {
            adam_step: state.adam.step,
            lr: state.adam.lr,
            beta1: state.adam.beta1,
            beta2: state.adam.beta2,
            eps: state.adam.eps,
            data_rng_pos: state.data_rng_pos.to_string(),
            noise_rng_pos: state.noise_rng_pos.to_string(),
            completed_epochs: state.completed_epochs,
            global_step: state.global_step,
        });
        self.moments = Some((state.adam.m.clone(), state.adam.v.clone()));
        self
    }

    pub fn model(&self) -> Result<VaeModel<f32>> {
        VaeModel::from_parts(self.config.clone(), self.params.clone())
    }

    /// Rebuild the resume state, if this checkpoint carries one.
    pub fn train_state(&self) -> Result<Option<TrainState>> {
        let (extras, moments) = match (&self.extras, &self.moments) {
            (Some(e), Some(m)) => (e, m),
            _ => return Ok(None),
        };
        let parse = |s: &str| {
            s.parse::<u128>()
                .map_err(|_| Error::format("checkpoint", "bad rng position"))
        };
        Ok(Some(TrainState {
            adam: AdamState {
                step: extras.adam_step,
                lr: extras.lr,
                beta1: extras.beta1,
                beta2: extras.beta2,
                eps: extras.eps,
                m: moments.0.clone(),
                v: moments.1.clone(),
            },
            data_rng_pos: parse(&extras.data_rng_pos)?,
            noise_rng_pos: parse(&extras.noise_rng_pos)?,
            completed_epochs: extras.completed_epochs,
            global_step: extras.global_step,
        }))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: VaeConfig,
    meta: CheckpointMeta,
    #[serde(default)]
    extras: Option<CheckpointExtras>,
}

pub fn save_checkpoint(path: &Path, ckpt: &VaeCheckpoint) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let header = Header {
        config: ckpt.config.clone(),
        meta: ckpt.meta.clone(),
        extras: ckpt.extras.clone(),
    };
    let header_bytes = toml::to_string(&header)
        .map_err(|e| Error::Other(e.to_string()))?
        .into_bytes();

    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let io = |e| Error::io(path, e);
    file.write_all(MAGIC).map_err(io)?;
    file.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    file.write_all(&(header_bytes.len() as u32).to_le_bytes()).map_err(io)?;
    file.write_all(&header_bytes).map_err(io)?;

    let moment_count = ckpt.moments.as_ref().map(|m| m.0.len() * 2).unwrap_or(0);
    let total = ckpt.params.len() + moment_count;
    file.write_all(&(total as u32).to_le_bytes()).map_err(io)?;
    for param in &ckpt.params {
        write_record(&mut file, &param.name, param.tensor.shape(), param.tensor.data())
            .map_err(io)?;
    }
    if let Some((m, v)) = &ckpt.moments {
        for (i, buf) in m.iter().enumerate() {
            write_record(&mut file, &format!("optim.m.{}", ckpt.params[i].name), &[buf.len()], buf)
                .map_err(io)?;
        }
        for (i, buf) in v.iter().enumerate() {
            write_record(&mut file, &format!("optim.v.{}", ckpt.params[i].name), &[buf.len()], buf)
                .map_err(io)?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<VaeCheckpoint> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::format(path, "not a checkpoint"));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
    if u32::from_le_bytes(word) != VERSION {
        return Err(Error::format(path, "unsupported checkpoint version"));
    }
    file.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(word) as usize];
    file.read_exact(&mut header_bytes).map_err(|e| Error::io(path, e))?;
    let header: Header = toml::from_str(
        std::str::from_utf8(&header_bytes).map_err(|_| Error::format(path, "header not utf-8"))?,
    )
    .map_err(|e| Error::format(path, e.to_string()))?;

    file.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
    let total = u32::from_le_bytes(word) as usize;
    let mut params = Vec::new();
    let mut m_bufs: Vec<(String, Vec<f32>)> = Vec::new();
    let mut v_bufs: Vec<(String, Vec<f32>)> = Vec::new();
    for _ in 0..total {
        let (name, shape, data) = read_record(&mut file).map_err(|e| Error::io(path, e))?;
        if let Some(stripped) = name.strip_prefix("optim.m.") {
            m_bufs.push((stripped.to_string(), data));
        } else if let Some(stripped) = name.strip_prefix("optim.v.") {
            v_bufs.push((stripped.to_string(), data));
        } else {
            params.push(Parameter {
                name,
                tensor: Tensor::from_vec(&shape, data)?,
            });
        }
    }

    let moments = if header.extras.is_some() {
        let align = |bufs: Vec<(String, Vec<f32>)>| -> Result<Vec<Vec<f32>>> {
            params
                .iter()
                .map(|p| {
                    bufs.iter()
                        .find(|(n, _)| n == &p.name)
                        .map(|(_, d)| d.clone())
                        .ok_or_else(|| Error::format(path, format!("missing moments for {}", p.name)))
                })
                .collect()
        };
        Some((align(m_bufs)?, align(v_bufs)?))
    } else {
        None
    };

    Ok(VaeCheckpoint {
        config: header.config,
        meta: header.meta,
        params,
        extras: header.extras,
        moments,
    })
}
