//! Reverse-mode differentiable kernels: exactly the set needed to train the
//! convolutional VAE, each as an explicit forward/backward pair.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod distributions;
pub mod init;
pub mod linear;
pub mod simd;
pub mod tensor;

pub use activation::{leaky_relu_backward, leaky_relu_backward_inplace, leaky_relu_forward};
pub use adam::{adam_step, AdamState};
pub use conv::{
    conv2d_backward, conv2d_forward, conv_out_extent, deconv2d_backward, deconv2d_forward,
    deconv_out_extent,
};
pub use distributions::{
    categorical_nll, categorical_nll_backward_inplace, expected_pixel_values, gaussian_kl,
    gaussian_kl_backward, reparameterize, reparameterize_backward, PIXEL_CLASSES,
};
pub use linear::{linear_backward, linear_forward};
pub use tensor::{Parameter, Scalar, Tensor};
