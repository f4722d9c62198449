//! Experiment configuration: the full recipe for a run (data, model,
//! training, scoring, evaluation), its two built-in scales, and benchmark
//! corpus resolution against whatever dataset files are actually on disk.

use crate::datasets::manifest::{DatasetSource, DatasetSpec, Manifest};
use crate::datasets::Split;
use crate::error::{Error, Result};
use crate::lossy::LossyOp;
use crate::scoring::ScoreConfig;
use crate::vae::{Freeze, InputMode, TrainConfig, VaeConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DATA_ENV: &str = "VAE_OOD_DATA";
pub const CACHE_ENV: &str = "VAE_OOD_CACHE";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSettings {
    pub ood_datasets: Vec<String>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Measure scoring throughput. Off makes reports bit-reproducible.
    #[serde(default = "default_true")]
    pub throughput: bool,
}

fn default_sample_count() -> usize {
    5000
}

fn default_seeds() -> Vec<u64> {
    vec![101, 102, 103, 104, 105]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    /// Training dataset (train split) in the manifest.
    pub id_train: String,
    /// In-distribution evaluation dataset (test split).
    pub id_eval: String,
    /// Deterministic subset of the training set; whole set when omitted.
    #[serde(default)]
    pub train_subset: Option<usize>,
    pub vae: VaeConfig,
    pub train: TrainConfig,
    pub score: ScoreConfig,
    pub eval: EvalSettings,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.vae.validate()?;
        self.train.validate()?;
        self.score.validate()?;
        if self.eval.seeds.is_empty() {
            return Err(Error::config("need at least one evaluation seed".to_string()));
        }
        if self.eval.sample_count == 0 {
            return Err(Error::config("sample_count must be positive".to_string()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let text = toml::to_string_pretty(self).map_err(|e| Error::Other(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Digest of everything that affects the trained model.
    pub fn model_digest_input(&self) -> String {
        format!(
            "{}|{}|{}|{:?}",
            toml::to_string(&self.vae).unwrap_or_default(),
            toml::to_string(&self.train).unwrap_or_default(),
            self.id_train,
            self.train_subset,
        )
    }
}

/// Dataset files resolved on disk for the standard benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkCorpus {
    /// In-distribution training dataset name.
    pub id_train: String,
    pub id_eval: String,
    pub in_channels: usize,
    /// OOD dataset names available right now.
    pub ood: Vec<String>,
    /// Benchmark datasets that could not be found on disk.
    pub missing: Vec<String>,
}

pub fn data_root() -> PathBuf {
    std::env::var(DATA_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from("data"))
}

pub fn cache_root() -> PathBuf {
    std::env::var(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| data_root().join("cache"))
}

/// The standard dataset registry over a data root. Entries whose files are
/// missing only fail when actually requested.
pub fn default_manifest(root: &Path) -> Manifest {
    let mut m = Manifest::default();
    let idx = |paths: Vec<PathBuf>, split: Split| DatasetSpec {
        source: DatasetSource::IdxFile,
        paths,
        target_size: 32,
        channel_policy: None,
        seed: 0,
        count: 0,
        channels: 1,
        split,
    };
    m.datasets.insert(
        "mnist-train".into(),
        idx(vec![root.join("mnist/train-images-idx3-ubyte")], Split::Train),
    );
    m.datasets.insert(
        "mnist-test".into(),
        idx(vec![root.join("mnist/t10k-images-idx3-ubyte")], Split::Test),
    );
    m.datasets.insert(
        "fashion-mnist-train".into(),
        idx(vec![root.join("fashion-mnist/train-images-idx3-ubyte")], Split::Train),
    );
    m.datasets.insert(
        "fashion-mnist-test".into(),
        idx(vec![root.join("fashion-mnist/t10k-images-idx3-ubyte")], Split::Test),
    );
    m.datasets.insert(
        "cifar10-train".into(),
        DatasetSpec {
            source: DatasetSource::CifarBinary,
            paths: (1..=5)
                .map(|i| root.join(format!("cifar-10-batches-bin/data_batch_{i}.bin")))
                .collect(),
            target_size: 32,
            channel_policy: None,
            seed: 0,
            count: 0,
            channels: 3,
            split: Split::Train,
        },
    );
    m.datasets.insert(
        "cifar10-test".into(),
        DatasetSpec {
            source: DatasetSource::CifarBinary,
            paths: vec![root.join("cifar-10-batches-bin/test_batch.bin")],
            target_size: 32,
            channel_policy: None,
            seed: 0,
            count: 0,
            channels: 3,
            split: Split::Test,
        },
    );
    for (name, channels) in [("noise", 1), ("noise-rgb", 3), ("constant", 1), ("constant-rgb", 3)]
    {
        m.datasets.insert(
            name.into(),
            DatasetSpec {
                source: if name.starts_with("noise") {
                    DatasetSource::SyntheticNoise
                } else {
                    DatasetSource::SyntheticConstant
                },
                paths: vec![],
                target_size: 32,
                channel_policy: None,
                seed: 7700,
                count: 5000,
                channels,
                split: Split::Test,
            },
        );
    }
    for folder in ["svhn-test", "kmnist-test", "lsun-test", "celeba-test"] {
        m.datasets.insert(
            folder.into(),
            DatasetSpec {
                source: DatasetSource::ImageFolder,
                paths: vec![root.join(folder)],
                target_size: 32,
                channel_policy: None,
                seed: 0,
                count: 0,
                channels: 3,
                split: Split::Test,
            },
        );
    }
    m
}

/// Resolve the benchmark against files on disk. CIFAR-10 (with SVHN/MNIST
/// OOD) is preferred when its binaries exist; otherwise FashionMNIST becomes
/// the ID dataset with MNIST and the synthetic sets as OOD.
pub fn resolve_benchmark_corpus(root: &Path) -> BenchmarkCorpus {
    let has = |rel: &str| root.join(rel).exists();
    let mut missing = Vec::new();
    if !has("cifar-10-batches-bin/data_batch_1.bin") {
        missing.push("cifar10".to_string());
    }
    if !has("svhn-test") {
        missing.push("svhn".to_string());
    }

    if missing.iter().any(|m| m == "cifar10") {
        BenchmarkCorpus {
            id_train: "fashion-mnist-train".into(),
            id_eval: "fashion-mnist-test".into(),
            in_channels: 1,
            ood: vec!["mnist-test".into(), "noise".into(), "constant".into()],
            missing,
        }
    } else {
        let mut ood = vec!["mnist-test".into()];
        if has("svhn-test") {
            ood.push("svhn-test".into());
        }
        ood.push("noise-rgb".into());
        ood.push("constant-rgb".into());
        BenchmarkCorpus {
            id_train: "cifar10-train".into(),
            id_eval: "cifar10-test".into(),
            in_channels: 3,
            ood,
            missing,
        }
    }
}

/// Desk-scale preset: f=16, 20 epochs, 20k training subset, 2000-sample
/// AUROC over 3 seeds. Small enough for a CPU, large enough to reproduce
/// the benchmark directions.
pub fn desk_preset(corpus: &BenchmarkCorpus, output_dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        name: "desk".into(),
        id_train: corpus.id_train.clone(),
        id_eval: corpus.id_eval.clone(),
        train_subset: Some(20_000),
        vae: VaeConfig {
            f: 16,
            z: 100,
            w: 32,
            in_channels: corpus.in_channels,
            leaky_slope: 0.2,
            beta: 1.0,
        },
        train: TrainConfig {
            lr: 3e-4,
            batch: 128,
            epochs: 20,
            seed: 7,
            freeze: Freeze::None,
            input_mode: InputMode::LossyToOriginal,
            lossy_op: Some(LossyOp::Nearest { scale: 4 }),
            max_steps: None,
        },
        score: ScoreConfig::default(),
        eval: EvalSettings {
            ood_datasets: corpus.ood.clone(),
            sample_count: 2000,
            seeds: vec![101, 102, 103],
            throughput: true,
        },
        output_dir,
    }
}

/// Full-scale preset matching the published setup: f=32, z=100, 200 epochs,
/// 5000-sample AUROC over 5 seeds, whole training set.
pub fn paper_preset(corpus: &BenchmarkCorpus, output_dir: PathBuf) -> ExperimentConfig {
    let mut cfg = desk_preset(corpus, output_dir);
    cfg.name = "paper".into();
    cfg.train_subset = None;
    cfg.vae.f = 32;
    cfg.train.epochs = 200;
    cfg.eval.sample_count = 5000;
    cfg.eval.seeds = default_seeds();
    cfg
}
