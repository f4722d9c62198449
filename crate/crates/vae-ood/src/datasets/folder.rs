//! Directory-of-PNG loader, the generic path for datasets that do not ship
//! in a dedicated binary format. Files load in sorted name order so batches
//! are reproducible; an optional target size resizes each image on the way
//! in so mixed-size folders still stack.

use super::{resize, ImageBatch, Split};
use crate::error::{Error, Result};
use std::path::Path;

pub fn load_png_folder(dir: &Path, target_size: Option<usize>) -> Result<ImageBatch> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "png").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::input(format!("no .png files under {}", dir.display())));
    }

    let mut images: Vec<ImageBatch> = Vec::with_capacity(files.len());
    let mut channels = 0usize;
    for file in &files {
        let img = load_png(file)?;
        let img = match target_size {
            Some(t) => resize(&img, t)?,
            None => img,
        };
        if channels == 0 {
            channels = img.c;
        } else if channels != img.c {
            return Err(Error::format(
                file,
                format!("mixed channel counts in folder ({channels} then {})", img.c),
            ));
        }
        images.push(img);
    }
    let (c, h, w) = (images[0].c, images[0].h, images[0].w);
    if images.iter().any(|i| i.h != h || i.w != w) {
        return Err(Error::input(
            "folder images have mixed sizes; pass a target size".to_string(),
        ));
    }
    let mut pixels = Vec::with_capacity(images.len() * c * h * w);
    for img in &images {
        pixels.extend_from_slice(img.pixels());
    }
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "folder".to_string());
    ImageBatch::new(name, Split::Test, images.len(), c, h, w, pixels)
}

/// Decode a single 8-bit PNG into planes; alpha is dropped.
fn load_png(path: &Path) -> Result<ImageBatch> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().expect("png buffer size")];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let samples = info.color_type.samples();
    let interleaved = &buf[..info.buffer_size()];

    let c = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
        png::ColorType::Rgb | png::ColorType::Rgba => 3,
        other => {
            return Err(Error::format(path, format!("unsupported color type {other:?}")));
        }
    };
    // De-interleave scanlines into planes, skipping alpha.
    let mut planes = vec![0u8; c * h * w];
    for p in 0..h * w {
        for ch in 0..c {
            planes[ch * h * w + p] = interleaved[p * samples + ch];
        }
    }
    let size = h.max(w);
    if h != w {
        // Keep square by letterboxing onto a zero canvas before any resize.
        let mut canvas = vec![0u8; c * size * size];
        let (oy, ox) = ((size - h) / 2, (size - w) / 2);
        for ch in 0..c {
            for y in 0..h {
                let src = ch * h * w + y * w;
                let dst = ch * size * size + (y + oy) * size + ox;
                canvas[dst..dst + w].copy_from_slice(&planes[src..src + w]);
            }
        }
        planes = canvas;
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ImageBatch::new(stem, Split::Test, 1, c, size, size, planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::encode_png;
    use crate::datasets::gen_noise;

    #[test]
    fn folder_round_trips_encoded_batches() {
        let batch = gen_noise(3, 16, 3, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for i in 0..batch.n {
            std::fs::write(dir.path().join(format!("{i:03}.png")), encode_png(batch.view(i)))
                .unwrap();
        }
        let loaded = load_png_folder(dir.path(), None).unwrap();
        assert_eq!(loaded.pixels(), batch.pixels());
    }

    #[test]
    fn loader_resizes_to_target() {
        let batch = gen_noise(2, 16, 1, 78).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for i in 0..batch.n {
            std::fs::write(dir.path().join(format!("{i}.png")), encode_png(batch.view(i)))
                .unwrap();
        }
        let loaded = load_png_folder(dir.path(), Some(32)).unwrap();
        assert_eq!((loaded.n, loaded.c, loaded.h, loaded.w), (2, 1, 32, 32));
    }

    #[test]
    fn empty_folder_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_png_folder(dir.path(), None).is_err());
    }
}
