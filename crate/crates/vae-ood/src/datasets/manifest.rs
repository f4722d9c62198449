//! Dataset manifest and the prepare cache.
//!
//! A manifest is a TOML file mapping dataset names to sources. `prepare`
//! decodes, resizes and channel-adapts a dataset, then caches the result in
//! a small self-describing container keyed by a content digest, so repeated
//! runs with unchanged inputs never recompute.

use super::{
    adapt_channels, gen_constant, gen_noise, load_cifar10, load_idx, load_png_folder, resize,
    ChannelPolicy, ImageBatch, Split,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::Digest;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    IdxFile,
    CifarBinary,
    SyntheticNoise,
    SyntheticConstant,
    ImageFolder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub source: DatasetSource,
    /// Source files (IDX, CIFAR batches) or a single folder.
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    #[serde(default = "default_size")]
    pub target_size: usize,
    /// Explicit channel policy; omitted means "derive from the model".
    #[serde(default)]
    pub channel_policy: Option<ChannelPolicy>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub count: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_split")]
    pub split: Split,
}

fn default_size() -> usize {
    32
}

fn default_channels() -> usize {
    1
}

fn default_split() -> Split {
    Split::Test
}

impl DatasetSpec {
    pub fn validate(&self, name: &str) -> Result<()> {
        match self.source {
            DatasetSource::SyntheticNoise | DatasetSource::SyntheticConstant => {
                if self.count == 0 {
                    return Err(Error::config(format!(
                        "synthetic dataset '{name}' needs a nonzero count"
                    )));
                }
            }
            _ => {
                if self.paths.is_empty() {
                    return Err(Error::config(format!("dataset '{name}' has no paths")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub datasets: BTreeMap<String, DatasetSpec>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        for (name, spec) in &manifest.datasets {
            spec.validate(name)?;
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Other(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, name: &str) -> Result<&DatasetSpec> {
        self.datasets.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.datasets.keys().map(|s| s.as_str()).collect();
            Error::input(format!(
                "unknown dataset '{name}'; manifest defines: {}",
                known.join(", ")
            ))
        })
    }
}

/// Decode + resize + channel-adapt one dataset, through the cache.
///
/// `model_channels` drives the default adaptation: grayscale data stacks to
/// three channels for an RGB model, RGB data drops to its first channel for
/// a grayscale model.
pub fn prepare_dataset(
    name: &str,
    spec: &DatasetSpec,
    model_channels: usize,
    cache_root: &Path,
) -> Result<ImageBatch> {
    spec.validate(name)?;
    let digest = spec_digest(name, spec, model_channels)?;
    let cache_path = cache_root.join(format!("{name}-{}.batch", &digest[..16]));
    if cache_path.exists() {
        match read_batch_container(&cache_path) {
            Ok((cached_digest, batch)) if cached_digest == digest => {
                log::debug!("cache hit for dataset '{name}'");
                return Ok(batch);
            }
            _ => log::warn!("stale or unreadable cache {}; rebuilding", cache_path.display()),
        }
    }

    let raw = load_raw(name, spec)?;
    let resized = resize(&raw, spec.target_size)?;
    let policy = spec.channel_policy.unwrap_or(match (resized.c, model_channels) {
        (1, 3) => ChannelPolicy::Stack3,
        (3, 1) => ChannelPolicy::FirstChannel,
        _ => ChannelPolicy::Native,
    });
    let adapted = adapt_channels(&resized, policy)?;
    let labeled = adapted.relabeled(name, spec.split);

    std::fs::create_dir_all(cache_root).map_err(|e| Error::io(cache_root, e))?;
    write_batch_container(&cache_path, &digest, &labeled)?;
    Ok(labeled)
}

fn load_raw(name: &str, spec: &DatasetSpec) -> Result<ImageBatch> {
    match spec.source {
        DatasetSource::IdxFile => {
            let mut combined: Option<ImageBatch> = None;
            for path in &spec.paths {
                let part = load_idx(path)?;
                combined = Some(match combined {
                    None => part,
                    Some(acc) => concat(acc, part)?,
                });
            }
            Ok(combined.expect("validated non-empty paths"))
        }
        DatasetSource::CifarBinary => {
            let mut combined: Option<ImageBatch> = None;
            for path in &spec.paths {
                let part = load_cifar10(path)?;
                combined = Some(match combined {
                    None => part,
                    Some(acc) => concat(acc, part)?,
                });
            }
            Ok(combined.expect("validated non-empty paths"))
        }
        DatasetSource::SyntheticNoise => {
            gen_noise(spec.count, spec.target_size, spec.channels, spec.seed)
        }
        DatasetSource::SyntheticConstant => {
            gen_constant(spec.count, spec.target_size, spec.channels, spec.seed)
        }
        DatasetSource::ImageFolder => {
            load_png_folder(&spec.paths[0], Some(spec.target_size))
        }
    }
    .map_err(|e| match e {
        Error::Io { path, source } => Error::Io { path, source },
        other => other,
    })
    .map(|b| b.relabeled(name, spec.split))
}

fn concat(a: ImageBatch, b: ImageBatch) -> Result<ImageBatch> {
    if (a.c, a.h, a.w) != (b.c, b.h, b.w) {
        return Err(Error::input("cannot concatenate batches of different shapes".to_string()));
    }
    let mut pixels = a.pixels().to_vec();
    pixels.extend_from_slice(b.pixels());
    ImageBatch::new(a.dataset_id.clone(), a.split, a.n + b.n, a.c, a.h, a.w, pixels)
}

/// Digest over everything that determines the prepared bytes: source file
/// contents (or synthetic parameters), geometry, and adaptation target.
fn spec_digest(name: &str, spec: &DatasetSpec, model_channels: usize) -> Result<String> {
    let mut hasher = sha2::Sha256::new();
    hasher.update(b"vodb-v1");
    hasher.update(name.as_bytes());
    hasher.update(
        serde_json::to_vec(spec).map_err(|e| Error::Other(e.to_string()))?,
    );
    hasher.update(model_channels.to_le_bytes());
    match spec.source {
        DatasetSource::SyntheticNoise | DatasetSource::SyntheticConstant => {}
        DatasetSource::ImageFolder => {
            // Folder digest: names and sizes; content hashing every image
            // would defeat the point of the cache for large folders.
            let mut files: Vec<_> = std::fs::read_dir(&spec.paths[0])
                .map_err(|e| Error::io(&spec.paths[0], e))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .collect();
            files.sort();
            for f in files {
                hasher.update(f.to_string_lossy().as_bytes());
                if let Ok(meta) = f.metadata() {
                    hasher.update(meta.len().to_le_bytes());
                }
            }
        }
        _ => {
            for path in &spec.paths {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                hasher.update(&bytes);
            }
        }
    }
    Ok(crate::util::hex(hasher.finalize()))
}

const BATCH_MAGIC: &[u8; 8] = b"VODBATCH";
const BATCH_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BatchHeader {
    dataset_id: String,
    split: Split,
    digest: String,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
}

fn write_batch_container(path: &Path, digest: &str, batch: &ImageBatch) -> Result<()> {
    let header = BatchHeader {
        dataset_id: batch.dataset_id.clone(),
        split: batch.split,
        digest: digest.to_string(),
        n: batch.n,
        c: batch.c,
        h: batch.h,
        w: batch.w,
    };
    let header_bytes = toml::to_string(&header)
        .map_err(|e| Error::Other(e.to_string()))?
        .into_bytes();
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let io = |e| Error::io(path, e);
    file.write_all(BATCH_MAGIC).map_err(io)?;
    file.write_all(&BATCH_VERSION.to_le_bytes()).map_err(io)?;
    file.write_all(&(header_bytes.len() as u32).to_le_bytes()).map_err(io)?;
    file.write_all(&header_bytes).map_err(io)?;
    file.write_all(batch.pixels()).map_err(io)?;
    Ok(())
}

fn read_batch_container(path: &Path) -> Result<(String, ImageBatch)> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != BATCH_MAGIC {
        return Err(Error::format(path, "not a batch container"));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
    if u32::from_le_bytes(word) != BATCH_VERSION {
        return Err(Error::format(path, "unsupported container version"));
    }
    file.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(word) as usize];
    file.read_exact(&mut header_bytes).map_err(|e| Error::io(path, e))?;
    let header: BatchHeader = toml::from_str(
        std::str::from_utf8(&header_bytes).map_err(|_| Error::format(path, "header not utf-8"))?,
    )
    .map_err(|e| Error::format(path, e.to_string()))?;
    let mut pixels = vec![0u8; header.n * header.c * header.h * header.w];
    file.read_exact(&mut pixels).map_err(|e| Error::io(path, e))?;
    let batch = ImageBatch::new(
        header.dataset_id,
        header.split,
        header.n,
        header.c,
        header.h,
        header.w,
        pixels,
    )?;
    Ok((header.digest, batch))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_spec(count: usize) -> DatasetSpec {
        DatasetSpec {
            source: DatasetSource::SyntheticNoise,
            paths: vec![],
            target_size: 16,
            channel_policy: None,
            seed: 4,
            count,
            channels: 1,
            split: Split::Test,
        }
    }

    #[test]
    fn synthetic_manifest_runs_without_external_files() {
        let dir = tempfile::tempdir().unwrap();
        let batch = prepare_dataset("noise", &noise_spec(8), 3, dir.path()).unwrap();
        assert_eq!((batch.n, batch.c, batch.h, batch.w), (8, 3, 16, 16));
        assert_eq!(batch.dataset_id, "noise");
    }

    #[test]
    fn cache_hit_returns_identical_batch() {
        let dir = tempfile::tempdir().unwrap();
        let a = prepare_dataset("noise", &noise_spec(8), 1, dir.path()).unwrap();
        let files_before = std::fs::read_dir(dir.path()).unwrap().count();
        let b = prepare_dataset("noise", &noise_spec(8), 1, dir.path()).unwrap();
        let files_after = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(a, b);
        assert_eq!(files_before, files_after);
    }

    #[test]
    fn digest_changes_when_source_file_changes() {
        let dir = tempfile::tempdir().unwrap();
        let idx_path = dir.path().join("toy-idx3-ubyte");
        let make_idx = |fill: u8| {
            let mut bytes = vec![0, 0, 0x08, 3];
            for d in [2u32, 4, 4] {
                bytes.extend_from_slice(&d.to_be_bytes());
            }
            bytes.extend(std::iter::repeat(fill).take(32));
            bytes
        };
        std::fs::write(&idx_path, make_idx(1)).unwrap();
        let spec = DatasetSpec {
            source: DatasetSource::IdxFile,
            paths: vec![idx_path.clone()],
            target_size: 4,
            channel_policy: None,
            seed: 0,
            count: 0,
            channels: 1,
            split: Split::Train,
        };
        let d1 = spec_digest("toy", &spec, 1).unwrap();
        std::fs::write(&idx_path, make_idx(2)).unwrap();
        let d2 = spec_digest("toy", &spec, 1).unwrap();
        assert_ne!(d1, d2);
    }

    #[test]
    fn unknown_dataset_error_lists_entries() {
        let mut manifest = Manifest::default();
        manifest.datasets.insert("alpha".into(), noise_spec(1));
        manifest.datasets.insert("beta".into(), noise_spec(1));
        let err = manifest.get("gamma").unwrap_err().to_string();
        assert!(err.contains("alpha") && err.contains("beta"), "{err}");
    }

    #[test]
    fn manifest_toml_round_trip() {
        let mut manifest = Manifest::default();
        manifest.datasets.insert("noise".into(), noise_spec(5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        manifest.save(&path).unwrap();
        let loaded = Manifest::load(&path).unwrap();
        assert_eq!(loaded.datasets["noise"].count, 5);
    }
}
