//! Affine map `y = x W + b` with weight `[D, K]`.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn linear_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, d) = dims2(input)?;
    let (wd, k) = dims2(weight)?;
    if d != wd || bias.shape() != [k] {
        return Err(Error::config(format!(
            "linear shapes do not compose: input {:?}, weight {:?}, bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[n, k]);
    unsafe {
        T::gemm(
            n,
            d,
            k,
            T::one(),
            input.data().as_ptr(),
            d as isize,
            1,
            weight.data().as_ptr(),
            k as isize,
            1,
            T::zero(),
            out.data_mut().as_mut_ptr(),
            k as isize,
            1,
        );
    }
    for row in out.data_mut().chunks_exact_mut(k) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += *b;
        }
    }
    Ok(out)
}

pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, d) = dims2(input)?;
    let (_, k) = dims2(weight)?;
    if grad_out.shape() != [n, k] {
        return Err(Error::config("grad_out shape mismatch in linear_backward".to_string()));
    }

    let mut grad_input = Tensor::zeros(&[n, d]);
    let mut grad_weight = Tensor::zeros(&[d, k]);
    let mut grad_bias = Tensor::zeros(&[k]);
    unsafe {
        // dX = dY @ W^T
        T::gemm(
            n,
            k,
            d,
            T::one(),
            grad_out.data().as_ptr(),
            k as isize,
            1,
            weight.data().as_ptr(),
            1,
            k as isize,
            T::zero(),
            grad_input.data_mut().as_mut_ptr(),
            d as isize,
            1,
        );
        // dW = X^T @ dY
        T::gemm(
            d,
            n,
            k,
            T::one(),
            input.data().as_ptr(),
            1,
            d as isize,
            grad_out.data().as_ptr(),
            k as isize,
            1,
            T::zero(),
            grad_weight.data_mut().as_mut_ptr(),
            k as isize,
            1,
        );
    }
    for row in grad_out.data().chunks_exact(k) {
        for (g, v) in grad_bias.data_mut().iter_mut().zip(row) {
            *g += *v;
        }
    }
    Ok((grad_input, grad_weight, grad_bias))
}

fn dims2<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [a, b] => Ok((*a, *b)),
        other => Err(Error::config(format!("expected 2-d tensor, got {other:?}"))),
    }
}
