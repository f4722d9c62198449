//! Input-complexity estimation by lossless compression.
//!
//! The estimate is the full encoded PNG length (headers included) in bits.
//! Only the *difference* between two same-shape images is ever used in
//! scores, which cancels the constant container overhead approximately;
//! nothing here assumes exact cancellation.
//!
//! The encoder configuration is pinned. Changing it invalidates comparisons
//! across runs, so the settings string travels inside every estimate.

use crate::datasets::ImageRef;
use serde::{Deserialize, Serialize};

pub const COMPRESSOR: &str = "png";
pub const SETTINGS: &str = "compression=high,filter=adaptive,depth=8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    /// Total compressed size in bits, full stream.
    pub bits: u64,
    /// `bits * ln 2`, commensurate with cross-entropy in nats.
    pub nats: f64,
    pub compressor: String,
    pub settings: String,
}

/// Compress one image and report its encoded length.
pub fn complexity(img: ImageRef<'_>) -> ComplexityEstimate {
    let bytes = encode_png(img);
    let bits = bytes.len() as u64 * 8;
    ComplexityEstimate {
        bits,
        nats: bits as f64 * std::f64::consts::LN_2,
        compressor: COMPRESSOR.to_string(),
        settings: SETTINGS.to_string(),
    }
}

/// `L(x) - L(x_lossy)` in nats.
pub fn complexity_delta(x: ImageRef<'_>, x_lossy: ImageRef<'_>) -> f64 {
    complexity(x).nats - complexity(x_lossy).nats
}

/// Encode to an in-memory PNG stream with the pinned settings.
pub fn encode_png(img: ImageRef<'_>) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.w as u32, img.h as u32);
        encoder.set_color(if img.c == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::High);
        encoder.set_filter(png::Filter::Adaptive);
        let mut writer = encoder.write_header().expect("in-memory png header");
        writer
            .write_image_data(&img.interleaved())
            .expect("in-memory png payload");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_constant, gen_noise};
    use sha2::Digest;

    #[test]
    fn repeated_calls_are_bit_identical() {
        let batch = gen_noise(1, 32, 3, 3).unwrap();
        let a = complexity(batch.view(0));
        let b = complexity(batch.view(0));
        assert_eq!(a, b);
        assert_eq!(a.nats, a.bits as f64 * std::f64::consts::LN_2);
    }

    #[test]
    fn constant_compresses_smaller_than_noise() {
        let noise = gen_noise(1, 32, 1, 5).unwrap();
        let constant = gen_constant(1, 32, 1, 5).unwrap();
        let ln = complexity(noise.view(0)).bits;
        let lc = complexity(constant.view(0)).bits;
        assert!(lc < ln, "constant {lc} !< noise {ln}");
    }

    #[test]
    fn delta_of_identical_images_is_zero() {
        let batch = gen_noise(1, 16, 1, 9).unwrap();
        assert_eq!(complexity_delta(batch.view(0), batch.view(0)), 0.0);
    }

    #[test]
    fn block_constant_version_of_noise_has_positive_delta() {
        let batch = gen_noise(1, 32, 1, 21).unwrap();
        let lossy = crate::lossy::apply_nearest(&batch, 4).unwrap();
        assert!(complexity_delta(batch.view(0), lossy.view(0)) > 0.0);
    }

    #[test]
    fn golden_digest_pins_the_encoder_configuration() {
        // A silent change in png version or settings shows up here before it
        // silently shifts every score in a long experiment.
        let noise = gen_noise(1, 32, 3, 12345).unwrap();
        let digest = crate::util::sha256_hex(encode_png(noise.view(0)));
        assert_eq!(
            digest,
            "ddf3a7741237734629115b62f9ec2c0331d1a2c173ff37a30309cd201175bf27" // frozen from the first verified build
        );
    }
}
