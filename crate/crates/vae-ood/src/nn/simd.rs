//! Vectorized elementwise kernels for the softmax hot path.

use wide::f32x8;

/// In-place `exp` over a slice, 8 lanes at a time.
pub fn exp_f32_slice(xs: &mut [f32]) {
    let (chunks, tail) = xs.split_at_mut(xs.len() - xs.len() % 8);
    for chunk in chunks.chunks_exact_mut(8) {
        let v = f32x8::from([
            chunk[0], chunk[1], chunk[2], chunk[3], chunk[4], chunk[5], chunk[6], chunk[7],
        ]);
        chunk.copy_from_slice(&v.exp().to_array());
    }
    for x in tail {
        *x = x.exp();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_scalar_exp_over_softmax_range() {
        // Softmax arguments are max-subtracted, so only (-inf, 0] matters,
        // but check a symmetric range anyway.
        let mut xs: Vec<f32> = (-800..=160).map(|i| i as f32 * 0.1).collect();
        let reference: Vec<f64> = xs.iter().map(|&x| (x as f64).exp()).collect();
        exp_f32_slice(&mut xs);
        for (&got, &want) in xs.iter().zip(&reference) {
            let want = want as f32;
            let tol = if want > 0.0 { want * 2e-6 + 1e-40 } else { 1e-40 };
            assert!(
                (got - want).abs() <= tol,
                "exp mismatch: got {got:e}, want {want:e}"
            );
        }
    }

    #[test]
    fn handles_short_slices() {
        let mut xs = [0.5f32, -1.0, 2.0];
        exp_f32_slice(&mut xs);
        assert!((xs[0] - 0.5f32.exp()).abs() < 1e-6);
        assert!((xs[2] - 2.0f32.exp()).abs() < 1e-5);
    }
}
