//! Dataset ingestion and preprocessing.
//!
//! Loaders are bit-exact (re-reading a file yields an identical batch) and
//! synthetic generators are fully determined by their seed. All batches are
//! unsigned 8-bit `N×C×H×W` with square images and 1 or 3 channels.

mod cifar;
mod folder;
mod idx;
pub mod manifest;
mod resize;
mod synthetic;

pub use cifar::load_cifar10;
pub use folder::load_png_folder;
pub use idx::load_idx;
pub use manifest::{DatasetSource, DatasetSpec, Manifest};
pub use resize::resize;
pub use synthetic::{gen_constant, gen_noise};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// How to reconcile a dataset's channel count with the model's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelPolicy {
    /// Keep the stored channels.
    #[default]
    Native,
    /// Reduce RGB to its first channel.
    FirstChannel,
    /// Replicate grayscale into three identical channels.
    Stack3,
}

/// A batch of images, `N×C×H×W`, owned pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBatch {
    pub dataset_id: String,
    pub split: Split,
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pixels: Vec<u8>,
}

impl ImageBatch {
    pub fn new(
        dataset_id: impl Into<String>,
        split: Split,
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        if c != 1 && c != 3 {
            return Err(Error::input(format!("channel count must be 1 or 3, got {c}")));
        }
        if h != w {
            return Err(Error::input(format!("images must be square, got {h}x{w}")));
        }
        if pixels.len() != n * c * h * w {
            return Err(Error::input(format!(
                "pixel buffer {} does not match {}x{}x{}x{}",
                pixels.len(),
                n,
                c,
                h,
                w
            )));
        }
        Ok(ImageBatch {
            dataset_id: dataset_id.into(),
            split,
            n,
            c,
            h,
            w,
            pixels,
        })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// One image as its `C*H*W` slice.
    pub fn image(&self, index: usize) -> &[u8] {
        let stride = self.c * self.h * self.w;
        &self.pixels[index * stride..(index + 1) * stride]
    }

    pub fn image_len(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Replace the identifying metadata, keeping pixels.
    pub fn relabeled(mut self, dataset_id: impl Into<String>, split: Split) -> Self {
        self.dataset_id = dataset_id.into();
        self.split = split;
        self
    }

    /// Borrowed view of one image.
    pub fn view(&self, index: usize) -> ImageRef<'_> {
        ImageRef {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.image(index),
        }
    }

    /// Select images by index into a new batch.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let stride = self.image_len();
        let mut pixels = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            if i >= self.n {
                return Err(Error::input(format!("index {i} out of range {}", self.n)));
            }
            pixels.extend_from_slice(self.image(i));
        }
        ImageBatch::new(
            self.dataset_id.clone(),
            self.split,
            indices.len(),
            self.c,
            self.h,
            self.w,
            pixels,
        )
    }
}

/// A single image borrowed from a batch: planes (`C×H×W`) of `u8`.
#[derive(Debug, Clone, Copy)]
pub struct ImageRef<'a> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: &'a [u8],
}

impl ImageRef<'_> {
    /// Interleave planes into `H×W×C` scanline order (what PNG wants).
    pub fn interleaved(&self) -> Vec<u8> {
        if self.c == 1 {
            return self.data.to_vec();
        }
        let plane = self.h * self.w;
        let mut out = Vec::with_capacity(self.data.len());
        for p in 0..plane {
            for ch in 0..self.c {
                out.push(self.data[ch * plane + p]);
            }
        }
        out
    }
}

/// Reduce or replicate channels according to the policy.
pub fn adapt_channels(batch: &ImageBatch, policy: ChannelPolicy) -> Result<ImageBatch> {
    match (policy, batch.c) {
        (ChannelPolicy::Native, _) | (ChannelPolicy::FirstChannel, 1) => Ok(batch.clone()),
        (ChannelPolicy::FirstChannel, 3) => {
            let plane = batch.h * batch.w;
            let mut pixels = Vec::with_capacity(batch.n * plane);
            for i in 0..batch.n {
                pixels.extend_from_slice(&batch.image(i)[..plane]);
            }
            ImageBatch::new(
                batch.dataset_id.clone(),
                batch.split,
                batch.n,
                1,
                batch.h,
                batch.w,
                pixels,
            )
        }
        (ChannelPolicy::Stack3, 1) => {
            let plane = batch.h * batch.w;
            let mut pixels = Vec::with_capacity(batch.n * 3 * plane);
            for i in 0..batch.n {
                let img = batch.image(i);
                for _ in 0..3 {
                    pixels.extend_from_slice(img);
                }
            }
            ImageBatch::new(
                batch.dataset_id.clone(),
                batch.split,
                batch.n,
                3,
                batch.h,
                batch.w,
                pixels,
            )
        }
        (ChannelPolicy::Stack3, c) => Err(Error::config(format!(
            "stack-3 expects grayscale input, got {c} channels"
        ))),
        (policy, c) => Err(Error::config(format!(
            "channel policy {policy:?} incompatible with {c} channels"
        ))),
    }
}

/// Uniform sample of `n` images without replacement, deterministic in `seed`.
/// Requests larger than the dataset fall back to a full permutation with a
/// warning.
pub fn sample_eval_subset(batch: &ImageBatch, n: usize, seed: u64) -> Result<ImageBatch> {
    let take = if n > batch.n {
        log::warn!(
            "requested {n} eval samples from {} ({}); using all",
            batch.dataset_id,
            batch.n
        );
        batch.n
    } else {
        n
    };
    let mut rng = crate::nn::init::seeded_rng(seed, 0x5a3); // subset stream
    let mut indices: Vec<usize> = (0..batch.n).collect();
    // Fisher-Yates, taking the first `take` entries.
    use rand::Rng;
    for i in 0..batch.n.saturating_sub(1) {
        let j = rng.random_range(i..batch.n);
        indices.swap(i, j);
    }
    indices.truncate(take);
    batch.select(&indices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_batch(n: usize, h: usize) -> ImageBatch {
        let pixels: Vec<u8> = (0..n * h * h).map(|v| (v % 251) as u8).collect();
        ImageBatch::new("toy", Split::Test, n, 1, h, h, pixels).unwrap()
    }

    #[test]
    fn stack3_then_first_channel_round_trips() {
        let g = gray_batch(4, 8);
        let rgb = adapt_channels(&g, ChannelPolicy::Stack3).unwrap();
        assert_eq!((rgb.n, rgb.c, rgb.h, rgb.w), (4, 3, 8, 8));
        let back = adapt_channels(&rgb, ChannelPolicy::FirstChannel).unwrap();
        assert_eq!(back.pixels(), g.pixels());
    }

    #[test]
    fn first_channel_takes_plane_zero() {
        let mut pixels = vec![0u8; 2 * 3 * 4 * 4];
        for i in 0..2 * 16 {
            pixels[i / 16 * 48 + i % 16] = 7; // R plane
        }
        let rgb = ImageBatch::new("toy", Split::Test, 2, 3, 4, 4, pixels).unwrap();
        let g = adapt_channels(&rgb, ChannelPolicy::FirstChannel).unwrap();
        assert!(g.pixels().iter().all(|&v| v == 7));
    }

    #[test]
    fn stack3_on_rgb_is_error() {
        let rgb = ImageBatch::new("toy", Split::Test, 1, 3, 4, 4, vec![0; 48]).unwrap();
        assert!(adapt_channels(&rgb, ChannelPolicy::Stack3).is_err());
    }

    #[test]
    fn subset_of_full_size_is_permutation() {
        let b = gray_batch(10, 4);
        let s = sample_eval_subset(&b, 10, 3).unwrap();
        assert_eq!(s.n, 10);
        let mut seen: Vec<&[u8]> = (0..10).map(|i| s.image(i)).collect();
        let mut orig: Vec<&[u8]> = (0..10).map(|i| b.image(i)).collect();
        seen.sort();
        orig.sort();
        assert_eq!(seen, orig);
    }

    #[test]
    fn subsets_deterministic_and_seed_sensitive() {
        let b = gray_batch(64, 4);
        let a1 = sample_eval_subset(&b, 16, 9).unwrap();
        let a2 = sample_eval_subset(&b, 16, 9).unwrap();
        assert_eq!(a1.pixels(), a2.pixels());
        let other = sample_eval_subset(&b, 16, 10).unwrap();
        assert_ne!(a1.pixels(), other.pixels());
    }

    #[test]
    fn oversized_request_returns_everything() {
        let b = gray_batch(5, 4);
        let s = sample_eval_subset(&b, 50, 1).unwrap();
        assert_eq!(s.n, 5);
    }
}
