//! Leaky rectifier.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn leaky_relu_forward<T: Scalar>(input: &Tensor<T>, slope: T) -> Result<Tensor<T>> {
    check_slope(slope)?;
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < T::zero() {
            *v *= slope;
        }
    }
    Ok(out)
}

/// In-place variant for the training fast path.
pub fn leaky_relu_inplace<T: Scalar>(data: &mut [T], slope: T) {
    for v in data {
        if *v < T::zero() {
            *v *= slope;
        }
    }
}

/// Gradient with respect to the input; `input` is the pre-activation value.
/// The derivative at exactly zero takes the non-negative branch.
pub fn leaky_relu_backward<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    slope: T,
) -> Result<Tensor<T>> {
    check_slope(slope)?;
    if input.shape() != grad_out.shape() {
        return Err(Error::config("leaky_relu_backward shape mismatch".to_string()));
    }
    let mut grad = grad_out.clone();
    for (g, x) in grad.data_mut().iter_mut().zip(input.data()) {
        if *x < T::zero() {
            *g *= slope;
        }
    }
    Ok(grad)
}

/// Backward using the forward *output* and the grad buffer in place. Valid
/// because the activation preserves sign, so `output < 0 ⇔ input < 0`.
pub fn leaky_relu_backward_inplace<T: Scalar>(output: &[T], grad: &mut [T], slope: T) {
    for (g, y) in grad.iter_mut().zip(output) {
        if *y < T::zero() {
            *g *= slope;
        }
    }
}

fn check_slope<T: Scalar>(slope: T) -> Result<()> {
    if slope <= T::zero() || slope >= T::one() {
        return Err(Error::config(format!(
            "leaky_relu slope must be in (0,1), got {slope:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_definition_at_slope_point_two() {
        let x = Tensor::<f32>::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = leaky_relu_forward(&x, 0.2).unwrap();
        assert_eq!(y.data(), &[-0.2, 0.0, 2.0]);
    }

    #[test]
    fn nonnegative_input_unchanged() {
        let x = Tensor::<f32>::from_vec(&[4], vec![0.0, 0.5, 1.0, 7.0]).unwrap();
        let y = leaky_relu_forward(&x, 0.2).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn slope_outside_unit_interval_rejected() {
        let x = Tensor::<f32>::zeros(&[1]);
        assert!(leaky_relu_forward(&x, 0.0).is_err());
        assert!(leaky_relu_forward(&x, 1.0).is_err());
    }
}
