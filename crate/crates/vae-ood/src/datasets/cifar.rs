//! CIFAR-10 binary batch loader: records of 1 label byte followed by 3072
//! pixel bytes (red, green, blue planes of a 32×32 image). Labels are
//! discarded; training here is unsupervised.

use super::{ImageBatch, Split};
use crate::error::{Error, Result};
use std::path::Path;

const RECORD: usize = 1 + 3 * 32 * 32;

pub fn load_cifar10(path: &Path) -> Result<ImageBatch> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % RECORD != 0 {
        return Err(Error::format(
            path,
            format!("{} bytes is not a whole number of {RECORD}-byte records", bytes.len()),
        ));
    }
    let n = bytes.len() / RECORD;
    let mut pixels = Vec::with_capacity(n * 3072);
    for rec in bytes.chunks_exact(RECORD) {
        pixels.extend_from_slice(&rec[1..]); // planes are already C-major
    }
    ImageBatch::new("cifar10", Split::Train, n, 3, 32, 32, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_maps_planes_to_channels() {
        // Manual byte-offset oracle: label, then 1024 red, 1024 green, 1024 blue.
        let mut record = vec![7u8]; // label, ignored
        record.extend(std::iter::repeat(10u8).take(1024));
        record.extend(std::iter::repeat(20u8).take(1024));
        record.extend(std::iter::repeat(30u8).take(1024));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        std::fs::write(&path, &record).unwrap();

        let batch = load_cifar10(&path).unwrap();
        assert_eq!((batch.n, batch.c, batch.h, batch.w), (1, 3, 32, 32));
        let img = batch.image(0);
        assert!(img[..1024].iter().all(|&v| v == 10));
        assert!(img[1024..2048].iter().all(|&v| v == 20));
        assert!(img[2048..].iter().all(|&v| v == 30));
    }

    #[test]
    fn many_records_count_correctly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        std::fs::write(&path, vec![0u8; RECORD * 50]).unwrap();
        assert_eq!(load_cifar10(&path).unwrap().n, 50);
    }

    #[test]
    fn trailing_partial_record_rejected_without_partial_batch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        std::fs::write(&path, vec![0u8; RECORD * 2 + RECORD / 2]).unwrap();
        assert!(load_cifar10(&path).is_err());
    }
}
