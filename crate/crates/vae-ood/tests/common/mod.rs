//! Shared test machinery: the central finite-difference oracle and small
//! deterministic fixtures. Everything here is independent of the backward
//! implementations it is used to check.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-4;

/// Central finite differences of a scalar-valued function at `x`.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Largest relative error between an analytic gradient and its
/// finite-difference estimate. Denominator floors at 1 so entries that are
/// exactly zero on both sides compare cleanly.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Assert the analytic gradient of `f` at `x` against central differences.
pub fn assert_gradient<F>(label: &str, f: F, x: &[f64], analytic: &[f64])
where
    F: Fn(&[f64]) -> f64,
{
    let numeric = finite_difference_gradient(&f, x, FD_STEP);
    let err = max_relative_error(analytic, &numeric);
    assert!(
        err < FD_REL_TOL,
        "{label}: max relative gradient error {err:.3e} exceeds {FD_REL_TOL:.0e}"
    );
}

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    vae_ood::nn::init::seeded_rng(seed, 0x7e57)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_bytes(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.random_range(0..=255u8)).collect()
}
