//! Gaussian reparameterization, KL divergence against the standard normal
//! prior, and the 256-way categorical pixel likelihood.
//!
//! Logits for the categorical likelihood are laid out `[N, H, W, C*256]`
//! with the 256 class values contiguous per (h, w, c) site, matching the
//! decoder's final convolution. Targets arrive in `[N, H, W, C]` site order;
//! `u8` storage makes every target a valid class index.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const PIXEL_CLASSES: usize = 256;

/// `z = mu + exp(0.5 * log_var) * noise`.
pub fn reparameterize<T: Scalar>(
    mu: &Tensor<T>,
    log_var: &Tensor<T>,
    noise: &Tensor<T>,
) -> Result<Tensor<T>> {
    if mu.shape() != log_var.shape() || mu.shape() != noise.shape() {
        return Err(Error::config("reparameterize expects equal shapes".to_string()));
    }
    let half = T::from_f64(0.5);
    let mut z = mu.clone();
    for ((zi, lv), eps) in z.data_mut().iter_mut().zip(log_var.data()).zip(noise.data()) {
        *zi += (*lv * half).exp() * *eps;
    }
    Ok(z)
}

/// Gradients of [`reparameterize`] with respect to `mu` and `log_var`.
/// Noise is a constant of the graph.
pub fn reparameterize_backward<T: Scalar>(
    log_var: &Tensor<T>,
    noise: &Tensor<T>,
    grad_z: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if log_var.shape() != grad_z.shape() || noise.shape() != grad_z.shape() {
        return Err(Error::config("reparameterize_backward shape mismatch".to_string()));
    }
    let half = T::from_f64(0.5);
    let grad_mu = grad_z.clone();
    let mut grad_log_var = grad_z.clone();
    for ((g, lv), eps) in grad_log_var
        .data_mut()
        .iter_mut()
        .zip(log_var.data())
        .zip(noise.data())
    {
        *g *= half * (*lv * half).exp() * *eps;
    }
    Ok((grad_mu, grad_log_var))
}

/// Per-sample `D_KL(N(mu, diag exp(log_var)) || N(0, I))` for `[N, Z]` inputs:
/// `0.5 * sum_d (mu^2 + exp(log_var) - 1 - log_var)`.
pub fn gaussian_kl<T: Scalar>(mu: &Tensor<T>, log_var: &Tensor<T>) -> Result<Vec<T>> {
    if mu.shape() != log_var.shape() || mu.shape().len() != 2 {
        return Err(Error::config("gaussian_kl expects matching [N, Z] inputs".to_string()));
    }
    let (n, z) = (mu.shape()[0], mu.shape()[1]);
    let half = T::from_f64(0.5);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = T::zero();
        for d in 0..z {
            let m = mu.data()[i * z + d];
            let lv = log_var.data()[i * z + d];
            acc += m * m + lv.exp() - T::one() - lv;
        }
        out.push(acc * half);
    }
    Ok(out)
}

/// Gradients of [`gaussian_kl`]; `upstream` is one factor per sample.
pub fn gaussian_kl_backward<T: Scalar>(
    mu: &Tensor<T>,
    log_var: &Tensor<T>,
    upstream: &[T],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, z) = (mu.shape()[0], mu.shape()[1]);
    if upstream.len() != n {
        return Err(Error::config("gaussian_kl_backward upstream length mismatch".to_string()));
    }
    let half = T::from_f64(0.5);
    let mut grad_mu = Tensor::zeros(mu.shape());
    let mut grad_lv = Tensor::zeros(mu.shape());
    for i in 0..n {
        let u = upstream[i];
        for d in 0..z {
            let idx = i * z + d;
            grad_mu.data_mut()[idx] = u * mu.data()[idx];
            grad_lv.data_mut()[idx] = u * half * (log_var.data()[idx].exp() - T::one());
        }
    }
    Ok((grad_mu, grad_lv))
}

fn check_logits<T: Scalar>(logits: &Tensor<T>, targets: &[u8], channels: usize) -> Result<(usize, usize)> {
    let s = logits.shape();
    if s.len() != 4 || s[3] != channels * PIXEL_CLASSES {
        return Err(Error::config(format!(
            "expected logits [N,H,W,{}*256], got {:?}",
            channels, s
        )));
    }
    let n = s[0];
    let sites_per_sample = s[1] * s[2] * channels;
    if targets.len() != n * sites_per_sample {
        return Err(Error::input(format!(
            "targets length {} does not match {} sites",
            targets.len(),
            n * sites_per_sample
        )));
    }
    Ok((n, sites_per_sample))
}

/// Per-sample negative log-likelihood in nats: for every (h, w, c) site, the
/// cross-entropy of the 256-way softmax against the target pixel class,
/// summed over sites.
pub fn categorical_nll<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[u8],
    channels: usize,
) -> Result<Vec<T>> {
    let (n, sites) = check_logits(logits, targets, channels)?;
    let mut out = vec![T::zero(); n];
    let mut row = [T::zero(); PIXEL_CLASSES];
    for (site, &target) in targets.iter().enumerate() {
        let base = site * PIXEL_CLASSES;
        let src = &logits.data()[base..base + PIXEL_CLASSES];
        let max = src.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        for (r, &s) in row.iter_mut().zip(src) {
            *r = s - max;
        }
        let target_shifted = row[target as usize];
        T::exp_slice(&mut row);
        let denom = row.iter().fold(T::zero(), |a, &b| a + b);
        out[site / sites] += denom.ln() - target_shifted;
    }
    Ok(out)
}

/// Fused loss + gradient: replaces the logits buffer with
/// `upstream[n] * (softmax - onehot(target))` and returns the per-sample NLL
/// computed in the same pass.
pub fn categorical_nll_backward_inplace<T: Scalar>(
    logits: &mut Tensor<T>,
    targets: &[u8],
    channels: usize,
    upstream: &[T],
) -> Result<Vec<T>> {
    let (n, sites) = check_logits(logits, targets, channels)?;
    if upstream.len() != n {
        return Err(Error::config("upstream length mismatch".to_string()));
    }
    let mut nll = vec![T::zero(); n];
    let data = logits.data_mut();
    for (site, &target) in targets.iter().enumerate() {
        let sample = site / sites;
        let row = &mut data[site * PIXEL_CLASSES..(site + 1) * PIXEL_CLASSES];
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        for r in row.iter_mut() {
            *r -= max;
        }
        let target_shifted = row[target as usize];
        T::exp_slice(row);
        let denom = row.iter().fold(T::zero(), |a, &b| a + b);
        nll[sample] += denom.ln() - target_shifted;

        let scale = upstream[sample] / denom;
        for r in row.iter_mut() {
            *r *= scale;
        }
        row[target as usize] -= upstream[sample];
    }
    Ok(nll)
}

/// Per-site expected pixel value `sum_v v * softmax(logits)[v]`, in `[N,H,W,C]`
/// site order.
pub fn expected_pixel_values<T: Scalar>(logits: &Tensor<T>, channels: usize) -> Result<Vec<T>> {
    let s = logits.shape();
    if s.len() != 4 || s[3] != channels * PIXEL_CLASSES {
        return Err(Error::config(format!(
            "expected logits [N,H,W,{}*256], got {:?}",
            channels, s
        )));
    }
    let total_sites = logits.len() / PIXEL_CLASSES;
    let mut out = Vec::with_capacity(total_sites);
    let mut row = [T::zero(); PIXEL_CLASSES];
    for site in 0..total_sites {
        let base = site * PIXEL_CLASSES;
        let src = &logits.data()[base..base + PIXEL_CLASSES];
        let max = src.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        for (r, &s) in row.iter_mut().zip(src) {
            *r = s - max;
        }
        T::exp_slice(&mut row);
        let mut denom = T::zero();
        let mut weighted = T::zero();
        for (v, &p) in row.iter().enumerate() {
            denom += p;
            weighted += T::from_f64(v as f64) * p;
        }
        out.push(weighted / denom);
    }
    Ok(out)
}
