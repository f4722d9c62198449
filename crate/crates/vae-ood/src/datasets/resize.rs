//! Bilinear resampling for preprocessing. Pixel centers align via the
//! half-pixel convention; results round to nearest and clamp to [0, 255].

use super::ImageBatch;
use crate::error::Result;

pub fn resize(batch: &ImageBatch, target: usize) -> Result<ImageBatch> {
    if batch.h == target {
        return Ok(batch.clone());
    }
    let (h, w, c) = (batch.h, batch.w, batch.c);
    let scale = h as f64 / target as f64;
    let plane_in = h * w;
    let plane_out = target * target;
    let mut pixels = vec![0u8; batch.n * c * plane_out];

    for i in 0..batch.n {
        let src = batch.image(i);
        let dst = &mut pixels[i * c * plane_out..(i + 1) * c * plane_out];
        for ch in 0..c {
            let sp = &src[ch * plane_in..(ch + 1) * plane_in];
            let dp = &mut dst[ch * plane_out..(ch + 1) * plane_out];
            for oy in 0..target {
                let sy = ((oy as f64 + 0.5) * scale - 0.5).clamp(0.0, (h - 1) as f64);
                let y0 = sy.floor() as usize;
                let y1 = (y0 + 1).min(h - 1);
                let fy = sy - y0 as f64;
                for ox in 0..target {
                    let sx = ((ox as f64 + 0.5) * scale - 0.5).clamp(0.0, (w - 1) as f64);
                    let x0 = sx.floor() as usize;
                    let x1 = (x0 + 1).min(w - 1);
                    let fx = sx - x0 as f64;
                    let v = sp[y0 * w + x0] as f64 * (1.0 - fx) * (1.0 - fy)
                        + sp[y0 * w + x1] as f64 * fx * (1.0 - fy)
                        + sp[y1 * w + x0] as f64 * (1.0 - fx) * fy
                        + sp[y1 * w + x1] as f64 * fx * fy;
                    dp[oy * target + ox] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    ImageBatch::new(
        batch.dataset_id.clone(),
        batch.split,
        batch.n,
        c,
        target,
        target,
        pixels,
    )
}
