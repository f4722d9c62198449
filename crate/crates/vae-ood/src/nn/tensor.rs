//! Dense tensors over `f32`/`f64` with an optional gradient buffer.
//!
//! Everything is stored contiguously in row-major order. There is no
//! computation graph: kernels in this module family come in explicit
//! forward/backward pairs and gradients are accumulated into the `grad`
//! buffer of the tensors that requested them.

use crate::error::{Error, Result};

/// Element type for all kernels. `f32` is the training dtype, `f64` exists
/// for finite-difference gradient checking.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssign + Default + Send + Sync + std::fmt::Debug + 'static
{
    fn from_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;

    /// General matrix multiply, `C = alpha * A * B + beta * C`, with explicit
    /// row/column strides so transposed views never need materializing.
    ///
    /// # Safety
    /// Pointers must be valid for the given dimensions and strides, and `c`
    /// must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Elementwise `x <- exp(x)`. The `f32` implementation is SIMD-vectorized.
    fn exp_slice(xs: &mut [Self]);
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn exp_slice(xs: &mut [Self]) {
        crate::nn::simd::exp_f32_slice(xs);
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn exp_slice(xs: &mut [Self]) {
        for x in xs {
            *x = x.exp();
        }
    }
}

/// Contiguous n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::config(format!(
                "tensor data length {} does not match shape {:?} (= {})",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
        if flag && self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.data.len()]);
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        if self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.data.len()]);
        }
        self.grad.as_deref_mut().unwrap()
    }

    /// Mutable data alongside the (read-only) gradient, for optimizer updates.
    pub fn data_and_grad(&mut self) -> Option<(&mut [T], &[T])> {
        match &mut self.grad {
            Some(g) => Some((&mut self.data, g.as_slice())),
            None => None,
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_deref_mut() {
            g.fill(T::zero());
        }
    }

    /// Accumulate `delta` into the gradient buffer.
    pub fn accumulate_grad(&mut self, delta: &[T]) {
        assert_eq!(delta.len(), self.data.len(), "gradient shape mismatch");
        let g = self.grad_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += *di;
        }
    }

    /// Reinterpret as a new shape with identical element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::config(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        self.grad = None;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Cast every element through `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.into_f64())).collect(),
            requires_grad: false,
            grad: None,
        }
    }
}

/// A named trainable tensor. Names are dotted paths such as
/// `encoder.conv1.weight` and must be unique within a model.
#[derive(Debug, Clone)]
pub struct Parameter<T: Scalar = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, mut tensor: Tensor<T>) -> Self {
        tensor.set_requires_grad(true);
        Parameter {
            name: name.into(),
            tensor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grad_buffer_matches_shape_and_accumulates() {
        let mut t = Tensor::<f32>::zeros(&[2, 2]);
        t.set_requires_grad(true);
        t.accumulate_grad(&[1.0, 2.0, 3.0, 4.0]);
        t.accumulate_grad(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0, 5.0]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0; 4]);
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::<f32>::from_vec(&[2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        let r = t.reshaped(&[3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data()[4], 4.0);
        assert!(Tensor::<f32>::zeros(&[2, 2]).reshaped(&[5]).is_err());
    }
}
