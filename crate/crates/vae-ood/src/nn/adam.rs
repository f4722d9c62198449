//! Adam with bias correction.

use super::tensor::{Parameter, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar = f32> {
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// First/second moment buffers, one pair per parameter, aligned by index.
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: T, params: &[Parameter<T>]) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
            m: params.iter().map(|p| vec![T::zero(); p.tensor.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.tensor.len()]).collect(),
        }
    }
}

/// One Adam update over `params` from their accumulated gradients. Parameters
/// whose index is set in `frozen` are left untouched, moments included.
pub fn adam_step<T: Scalar>(
    params: &mut [Parameter<T>],
    state: &mut AdamState<T>,
    frozen: &[bool],
) -> Result<()> {
    if params.len() != state.m.len() || params.len() != frozen.len() {
        return Err(Error::config("adam state does not match parameter list".to_string()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = T::one() - state.beta1.powi(t);
    let bc2 = T::one() - state.beta2.powi(t);
    let one = T::one();

    for (idx, param) in params.iter_mut().enumerate() {
        if frozen[idx] {
            continue;
        }
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let (data, grad) = param
            .tensor
            .data_and_grad()
            .ok_or_else(|| Error::config(format!("parameter {} has no gradient", param.name)))?;
        for i in 0..data.len() {
            let g = grad[i];
            m[i] = state.beta1 * m[i] + (one - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (one - state.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
