//! 2-D convolution and transposed convolution, forward and backward.
//!
//! Activations are laid out `[N, H, W, C]` so that im2col rows are
//! contiguous channel runs and the whole batch reduces to one GEMM per
//! layer. Convolution weights are `[Cout, Cin, k, k]`; transposed
//! convolution weights are `[Cin, Cout, k, k]`.
//!
//! The four kernels share two primitives: a patch gather (im2col) and its
//! adjoint scatter (col2im). Forward conv gathers from the input; the
//! input gradient scatters. Transposed conv is the mirror image: forward
//! scatters, the input gradient gathers. Gradient checks in the test
//! suite confirm the pairs are exact adjoints.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Output spatial extent of a convolution (floor convention).
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::config(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output spatial extent of a transposed convolution.
pub fn deconv_out_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Result<usize> {
    if output_pad >= stride {
        return Err(Error::config(format!(
            "output_padding {output_pad} must be < stride {stride}"
        )));
    }
    let expansive = (input - 1) * stride + kernel + output_pad;
    if expansive < 2 * pad {
        return Err(Error::config(format!(
            "padding {pad} too large for transposed conv output {expansive}"
        )));
    }
    Ok(expansive - 2 * pad)
}

/// Grid geometry shared by the gather/scatter primitives. `pos_*` is the
/// grid being iterated (conv output or deconv input); `img_*` is the plane
/// being sampled or written, with `c` channels.
struct PatchGeom {
    pos_h: usize,
    pos_w: usize,
    img_h: usize,
    img_w: usize,
    c: usize,
    k: usize,
    stride: usize,
    pad: isize,
}

/// cols[pos][kh][kw][c] = img[pos_h*stride - pad + kh][pos_w*stride - pad + kw][c], 0 outside.
fn gather_patches<T: Scalar>(g: &PatchGeom, img: &[T], cols: &mut [T]) {
    let kk = g.k * g.k * g.c;
    debug_assert_eq!(cols.len(), g.pos_h * g.pos_w * kk);
    debug_assert_eq!(img.len(), g.img_h * g.img_w * g.c);
    for ph in 0..g.pos_h {
        for pw in 0..g.pos_w {
            let row = (ph * g.pos_w + pw) * kk;
            for kh in 0..g.k {
                let ih = (ph * g.stride + kh) as isize - g.pad;
                for kw in 0..g.k {
                    let iw = (pw * g.stride + kw) as isize - g.pad;
                    let dst = row + (kh * g.k + kw) * g.c;
                    if ih >= 0 && (ih as usize) < g.img_h && iw >= 0 && (iw as usize) < g.img_w {
                        let src = (ih as usize * g.img_w + iw as usize) * g.c;
                        cols[dst..dst + g.c].copy_from_slice(&img[src..src + g.c]);
                    } else {
                        cols[dst..dst + g.c].fill(T::zero());
                    }
                }
            }
        }
    }
}

/// Adjoint of [`gather_patches`]: img[...] += cols[pos][kh][kw][c].
fn scatter_patches<T: Scalar>(g: &PatchGeom, cols: &[T], img: &mut [T]) {
    let kk = g.k * g.k * g.c;
    debug_assert_eq!(cols.len(), g.pos_h * g.pos_w * kk);
    debug_assert_eq!(img.len(), g.img_h * g.img_w * g.c);
    for ph in 0..g.pos_h {
        for pw in 0..g.pos_w {
            let row = (ph * g.pos_w + pw) * kk;
            for kh in 0..g.k {
                let ih = (ph * g.stride + kh) as isize - g.pad;
                if ih < 0 || ih as usize >= g.img_h {
                    continue;
                }
                for kw in 0..g.k {
                    let iw = (pw * g.stride + kw) as isize - g.pad;
                    if iw < 0 || iw as usize >= g.img_w {
                        continue;
                    }
                    let src = row + (kh * g.k + kw) * g.c;
                    let dst = (ih as usize * g.img_w + iw as usize) * g.c;
                    for c in 0..g.c {
                        img[dst + c] += cols[src + c];
                    }
                }
            }
        }
    }
}

fn check_conv_args<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    in_axis: usize,
) -> Result<()> {
    if input.shape().len() != 4 {
        return Err(Error::config(format!(
            "expected 4-d [N,H,W,C] input, got {:?}",
            input.shape()
        )));
    }
    if weight.shape().len() != 4 || weight.shape()[2] != weight.shape()[3] {
        return Err(Error::config(format!(
            "expected square 4-d weight, got {:?}",
            weight.shape()
        )));
    }
    let in_c = input.shape()[3];
    if weight.shape()[in_axis] != in_c {
        return Err(Error::config(format!(
            "input has {} channels but weight is {:?}",
            in_c,
            weight.shape()
        )));
    }
    let out_c = weight.shape()[1 - in_axis];
    if bias.shape() != [out_c] {
        return Err(Error::config(format!(
            "bias shape {:?} does not match {} output channels",
            bias.shape(),
            out_c
        )));
    }
    Ok(())
}

/// Reorder `[Cout, Cin, k, k]` into the GEMM-ready `[(kh, kw, cin), cout]`.
fn weight_to_cols_major<T: Scalar>(w: &Tensor<T>) -> Vec<T> {
    let (co, ci, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let mut out = vec![T::zero(); w.len()];
    let data = w.data();
    for o in 0..co {
        for i in 0..ci {
            for kh in 0..k {
                for kw in 0..k {
                    out[((kh * k + kw) * ci + i) * co + o] = data[((o * ci + i) * k + kh) * k + kw];
                }
            }
        }
    }
    out
}

/// Same reorder for transposed-conv weights `[Cin, Cout, k, k]`.
fn deconv_weight_to_cols_major<T: Scalar>(w: &Tensor<T>) -> Vec<T> {
    let (ci, co, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let mut out = vec![T::zero(); w.len()];
    let data = w.data();
    for i in 0..ci {
        for o in 0..co {
            for kh in 0..k {
                for kw in 0..k {
                    out[(i * k * k + kh * k + kw) * co + o] = data[((i * co + o) * k + kh) * k + kw];
                }
            }
        }
    }
    out
}

/// Convolution forward over a `[N, H, W, Cin]` input with weight
/// `[Cout, Cin, k, k]`, producing `[N, OH, OW, Cout]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    check_conv_args(input, weight, bias, 1)?;
    let (n, h, w, in_c) = dims4(input);
    let (out_c, k) = (weight.shape()[0], weight.shape()[2]);
    let oh = conv_out_extent(h, k, stride, pad)?;
    let ow = conv_out_extent(w, k, stride, pad)?;

    let kk = k * k * in_c;
    let geom = PatchGeom {
        pos_h: oh,
        pos_w: ow,
        img_h: h,
        img_w: w,
        c: in_c,
        k,
        stride,
        pad: pad as isize,
    };
    let wcols = weight_to_cols_major(weight);
    let mut cols = vec![T::zero(); n * oh * ow * kk];
    for i in 0..n {
        gather_patches(
            &geom,
            &input.data()[i * h * w * in_c..(i + 1) * h * w * in_c],
            &mut cols[i * oh * ow * kk..(i + 1) * oh * ow * kk],
        );
    }

    let m = n * oh * ow;
    let mut out = Tensor::zeros(&[n, oh, ow, out_c]);
    unsafe {
        T::gemm(
            m,
            kk,
            out_c,
            T::one(),
            cols.as_ptr(),
            kk as isize,
            1,
            wcols.as_ptr(),
            out_c as isize,
            1,
            T::zero(),
            out.data_mut().as_mut_ptr(),
            out_c as isize,
            1,
        );
    }
    add_channel_bias(out.data_mut(), bias.data());
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, h, w, in_c) = dims4(input);
    let (out_c, k) = (weight.shape()[0], weight.shape()[2]);
    let (gn, oh, ow, gc) = dims4(grad_out);
    if gn != n || gc != out_c {
        return Err(Error::config("grad_out shape mismatch in conv2d_backward".to_string()));
    }

    let kk = k * k * in_c;
    let geom = PatchGeom {
        pos_h: oh,
        pos_w: ow,
        img_h: h,
        img_w: w,
        c: in_c,
        k,
        stride,
        pad: pad as isize,
    };

    // Recompute the forward cols (cheaper than holding them across layers).
    let mut cols = vec![T::zero(); n * oh * ow * kk];
    for i in 0..n {
        gather_patches(
            &geom,
            &input.data()[i * h * w * in_c..(i + 1) * h * w * in_c],
            &mut cols[i * oh * ow * kk..(i + 1) * oh * ow * kk],
        );
    }

    let m = n * oh * ow;
    // grad weight in cols-major [(kh,kw,ci), co], transposed back afterwards.
    let mut gw_cols = vec![T::zero(); kk * out_c];
    unsafe {
        T::gemm(
            kk,
            m,
            out_c,
            T::one(),
            cols.as_ptr(),
            1,
            kk as isize,
            grad_out.data().as_ptr(),
            out_c as isize,
            1,
            T::zero(),
            gw_cols.as_mut_ptr(),
            out_c as isize,
            1,
        );
    }
    let mut grad_weight = Tensor::zeros(weight.shape());
    {
        let gw = grad_weight.data_mut();
        for o in 0..out_c {
            for i in 0..in_c {
                for kh in 0..k {
                    for kw in 0..k {
                        gw[((o * in_c + i) * k + kh) * k + kw] =
                            gw_cols[((kh * k + kw) * in_c + i) * out_c + o];
                    }
                }
            }
        }
    }

    // grad input: dcols = grad_out @ W^T, then scatter back.
    let wcols = weight_to_cols_major(weight);
    let mut dcols = cols; // reuse allocation
    unsafe {
        T::gemm(
            m,
            out_c,
            kk,
            T::one(),
            grad_out.data().as_ptr(),
            out_c as isize,
            1,
            wcols.as_ptr(),
            1,
            out_c as isize,
            T::zero(),
            dcols.as_mut_ptr(),
            kk as isize,
            1,
        );
    }
    let mut grad_input = Tensor::zeros(input.shape());
    for i in 0..n {
        scatter_patches(
            &geom,
            &dcols[i * oh * ow * kk..(i + 1) * oh * ow * kk],
            &mut grad_input.data_mut()[i * h * w * in_c..(i + 1) * h * w * in_c],
        );
    }

    let grad_bias = channel_bias_grad(grad_out.data(), out_c);
    Ok((grad_input, grad_weight, Tensor::from_vec(&[out_c], grad_bias)?))
}

/// Transposed convolution forward over `[N, H, W, Cin]` with weight
/// `[Cin, Cout, k, k]`, producing `[N, OH, OW, Cout]`.
pub fn deconv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Result<Tensor<T>> {
    check_conv_args(input, weight, bias, 0)?;
    let (n, h, w, in_c) = dims4(input);
    let (out_c, k) = (weight.shape()[1], weight.shape()[2]);
    let oh = deconv_out_extent(h, k, stride, pad, output_pad)?;
    let ow = deconv_out_extent(w, k, stride, pad, output_pad)?;

    let kk = k * k * out_c;
    let wcols = deconv_weight_to_cols_major(weight);
    let m = n * h * w;
    // cols[(n,pix), (kh,kw,co)] = x[(n,pix), ci] @ wcols[ci, (kh,kw,co)]
    let mut cols = vec![T::zero(); m * kk];
    unsafe {
        T::gemm(
            m,
            in_c,
            kk,
            T::one(),
            input.data().as_ptr(),
            in_c as isize,
            1,
            wcols.as_ptr(),
            kk as isize,
            1,
            T::zero(),
            cols.as_mut_ptr(),
            kk as isize,
            1,
        );
    }

    let geom = PatchGeom {
        pos_h: h,
        pos_w: w,
        img_h: oh,
        img_w: ow,
        c: out_c,
        k,
        stride,
        pad: pad as isize,
    };
    let mut out = Tensor::zeros(&[n, oh, ow, out_c]);
    for i in 0..n {
        scatter_patches(
            &geom,
            &cols[i * h * w * kk..(i + 1) * h * w * kk],
            &mut out.data_mut()[i * oh * ow * out_c..(i + 1) * oh * ow * out_c],
        );
    }
    add_channel_bias(out.data_mut(), bias.data());
    Ok(out)
}

/// Gradients of [`deconv2d_forward`].
pub fn deconv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, h, w, in_c) = dims4(input);
    let (out_c, k) = (weight.shape()[1], weight.shape()[2]);
    let (gn, oh, ow, gc) = dims4(grad_out);
    if gn != n || gc != out_c {
        return Err(Error::config("grad_out shape mismatch in deconv2d_backward".to_string()));
    }

    let kk = k * k * out_c;
    let geom = PatchGeom {
        pos_h: h,
        pos_w: w,
        img_h: oh,
        img_w: ow,
        c: out_c,
        k,
        stride,
        pad: pad as isize,
    };
    // dcols is the gather of grad_out over the scatter geometry.
    let mut dcols = vec![T::zero(); n * h * w * kk];
    for i in 0..n {
        gather_patches(
            &geom,
            &grad_out.data()[i * oh * ow * out_c..(i + 1) * oh * ow * out_c],
            &mut dcols[i * h * w * kk..(i + 1) * h * w * kk],
        );
    }

    let m = n * h * w;
    let wcols = deconv_weight_to_cols_major(weight);
    let mut grad_input = Tensor::zeros(input.shape());
    unsafe {
        // dX[(n,pix), ci] = dcols[(n,pix), kk] @ wcols[ci, kk]^T
        T::gemm(
            m,
            kk,
            in_c,
            T::one(),
            dcols.as_ptr(),
            kk as isize,
            1,
            wcols.as_ptr(),
            1,
            kk as isize,
            T::zero(),
            grad_input.data_mut().as_mut_ptr(),
            in_c as isize,
            1,
        );
    }

    let mut gw_cols = vec![T::zero(); in_c * kk];
    unsafe {
        // dWcols[ci, kk] = X^T[(ci), (n,pix)] @ dcols[(n,pix), kk]
        T::gemm(
            in_c,
            m,
            kk,
            T::one(),
            input.data().as_ptr(),
            1,
            in_c as isize,
            dcols.as_ptr(),
            kk as isize,
            1,
            T::zero(),
            gw_cols.as_mut_ptr(),
            kk as isize,
            1,
        );
    }
    let mut grad_weight = Tensor::zeros(weight.shape());
    {
        let gw = grad_weight.data_mut();
        for i in 0..in_c {
            for o in 0..out_c {
                for kh in 0..k {
                    for kw in 0..k {
                        gw[((i * out_c + o) * k + kh) * k + kw] =
                            gw_cols[i * kk + (kh * k + kw) * out_c + o];
                    }
                }
            }
        }
    }

    let grad_bias = channel_bias_grad(grad_out.data(), out_c);
    Ok((grad_input, grad_weight, Tensor::from_vec(&[out_c], grad_bias)?))
}

fn dims4<T: Scalar>(t: &Tensor<T>) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

fn add_channel_bias<T: Scalar>(data: &mut [T], bias: &[T]) {
    for row in data.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += *b;
        }
    }
}

fn channel_bias_grad<T: Scalar>(grad_out: &[T], out_c: usize) -> Vec<T> {
    let mut gb = vec![T::zero(); out_c];
    for row in grad_out.chunks_exact(out_c) {
        for (g, v) in gb.iter_mut().zip(row) {
            *g += *v;
        }
    }
    gb
}
