//! Out-of-distribution detection by restoration error reduction.
//!
//! A convolutional VAE is trained to restore original images from lossy
//! inputs (nearest-neighbour down/up-sampling by default). At test time a
//! sample is scored by how much the reconstruction improves on the lossy
//! input, compensated by the change in PNG-compressed complexity:
//!
//! ```text
//! ER(x) = e(x, x_lossy) - e(x, x') + lambda * (L(x) - L(x_lossy))
//! ```
//!
//! Higher scores mean more in-distribution. The crate also ships the plain
//! log-likelihood (LL) and input-complexity (IC) baselines, AUROC
//! evaluation, and an ablation harness over the design choices.

pub mod complexity;
pub mod datasets;
pub mod container;
pub mod error;
pub mod lossy;
pub mod nn;
pub mod scoring;
pub mod util;
pub mod vae;

pub use error::{Error, Result};
