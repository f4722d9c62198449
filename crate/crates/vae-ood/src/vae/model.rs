//! Encoder/decoder network.
//!
//! Encoder: four 5×5 convolutions (stride 1,2,1,2), LeakyReLU after each,
//! then two linear heads for the posterior mean and log-variance. Decoder:
//! a kernel-`w/4` transposed convolution expands the latent to `w/4 × w/4`,
//! four more transposed convolutions bring it back to `w × w`, and a final
//! 5×5 convolution emits 256 logits per pixel site.

use super::VaeConfig;
use crate::error::{Error, Result};
use crate::nn::{
    self, categorical_nll_backward_inplace, conv2d_backward, conv2d_forward, deconv2d_backward,
    deconv2d_forward, gaussian_kl, gaussian_kl_backward, init, leaky_relu_backward_inplace,
    linear_backward, linear_forward, reparameterize, reparameterize_backward, Parameter, Scalar,
    Tensor,
};

/// Stable parameter indices; order defines checkpoint layout and the
/// optimizer state alignment.
mod p {
    pub const ENC_CONV1_W: usize = 0;
    pub const ENC_CONV1_B: usize = 1;
    pub const ENC_CONV2_W: usize = 2;
    pub const ENC_CONV2_B: usize = 3;
    pub const ENC_CONV3_W: usize = 4;
    pub const ENC_CONV3_B: usize = 5;
    pub const ENC_CONV4_W: usize = 6;
    pub const ENC_CONV4_B: usize = 7;
    pub const ENC_MU_W: usize = 8;
    pub const ENC_MU_B: usize = 9;
    pub const ENC_LV_W: usize = 10;
    pub const ENC_LV_B: usize = 11;
    pub const DEC_DECONV1_W: usize = 12;
    pub const DEC_DECONV1_B: usize = 13;
    pub const DEC_DECONV2_W: usize = 14;
    pub const DEC_DECONV2_B: usize = 15;
    pub const DEC_DECONV3_W: usize = 16;
    pub const DEC_DECONV3_B: usize = 17;
    pub const DEC_DECONV4_W: usize = 18;
    pub const DEC_DECONV4_B: usize = 19;
    pub const DEC_DECONV5_W: usize = 20;
    pub const DEC_DECONV5_B: usize = 21;
    pub const DEC_OUT_W: usize = 22;
    pub const DEC_OUT_B: usize = 23;
    pub const COUNT: usize = 24;
}

#[derive(Debug, Clone)]
pub struct VaeModel<T: Scalar = f32> {
    pub config: VaeConfig,
    params: Vec<Parameter<T>>,
}

/// Saved activations from a traced encoder pass.
pub struct EncoderTrace<T: Scalar> {
    input: Tensor<T>,
    act: [Tensor<T>; 4],
    flat: Tensor<T>,
}

/// Saved activations from a traced decoder pass.
pub struct DecoderTrace<T: Scalar> {
    z_in: Tensor<T>,
    act: [Tensor<T>; 5],
}

impl<T: Scalar> VaeModel<T> {
    pub fn new(config: VaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (f, z, c) = (config.f, config.z, config.in_channels);
        let zp = config.pre_head_len();
        let quarter = config.w / 4;
        let mut rng = init::seeded_rng(seed, 0x1417);

        let conv = |name: &str, co: usize, ci: usize, k: usize, rng: &mut _| {
            (
                Parameter::new(format!("{name}.weight"), init::fan_in_weights(&[co, ci, k, k], ci * k * k, rng)),
                Parameter::new(format!("{name}.bias"), Tensor::zeros(&[co])),
            )
        };
        let deconv = |name: &str, ci: usize, co: usize, k: usize, rng: &mut _| {
            (
                Parameter::new(format!("{name}.weight"), init::fan_in_weights(&[ci, co, k, k], ci * k * k, rng)),
                Parameter::new(format!("{name}.bias"), Tensor::zeros(&[co])),
            )
        };
        let linear = |name: &str, d: usize, k: usize, rng: &mut _| {
            (
                Parameter::new(format!("{name}.weight"), init::fan_in_weights(&[d, k], d, rng)),
                Parameter::new(format!("{name}.bias"), Tensor::zeros(&[k])),
            )
        };

        let mut params = Vec::with_capacity(p::COUNT);
        for (w, b) in [
            conv("encoder.conv1", f, c, 5, &mut rng),
            conv("encoder.conv2", f, f, 5, &mut rng),
            conv("encoder.conv3", 2 * f, f, 5, &mut rng),
            conv("encoder.conv4", 2 * f, 2 * f, 5, &mut rng),
            linear("encoder.mu", zp, z, &mut rng),
            linear("encoder.logvar", zp, z, &mut rng),
            deconv("decoder.deconv1", z, 2 * f, quarter, &mut rng),
            deconv("decoder.deconv2", 2 * f, 2 * f, 5, &mut rng),
            deconv("decoder.deconv3", 2 * f, f, 5, &mut rng),
            deconv("decoder.deconv4", f, f, 5, &mut rng),
            deconv("decoder.deconv5", f, f, 5, &mut rng),
            conv("decoder.out", 256 * c, f, 5, &mut rng),
        ] {
            params.push(w);
            params.push(b);
        }
        Ok(VaeModel { config, params })
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn from_parts(config: VaeConfig, params: Vec<Parameter<T>>) -> Result<Self> {
        config.validate()?;
        if params.len() != p::COUNT {
            return Err(Error::config(format!(
                "expected {} parameter tensors, got {}",
                p::COUNT,
                params.len()
            )));
        }
        Ok(VaeModel { config, params })
    }

    pub fn zero_grads(&mut self) {
        for param in &mut self.params {
            param.tensor.zero_grad();
        }
    }

    /// Per-parameter freeze mask from a name prefix ("encoder." / "decoder.").
    pub fn frozen_mask(&self, prefix: Option<&str>) -> Vec<bool> {
        self.params
            .iter()
            .map(|p| prefix.map(|pre| p.name.starts_with(pre)).unwrap_or(false))
            .collect()
    }

    fn w(&self, idx: usize) -> &Tensor<T> {
        &self.params[idx].tensor
    }

    fn slope(&self) -> T {
        T::from_f64(self.config.leaky_slope)
    }

    /// Posterior parameters for normalized `[N, w, w, C]` input.
    pub fn encode(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (mu, lv, _) = self.encode_traced_impl(x, false)?;
        Ok((mu, lv))
    }

    /// Like [`encode`](Self::encode) but keeps activations for backward.
    pub fn encode_traced(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, EncoderTrace<T>)> {
        let (mu, lv, trace) = self.encode_traced_impl(x, true)?;
        Ok((mu, lv, trace.expect("trace requested")))
    }

    fn encode_traced_impl(
        &self,
        x: &Tensor<T>,
        keep: bool,
    ) -> Result<(Tensor<T>, Tensor<T>, Option<EncoderTrace<T>>)> {
        self.check_input(x)?;
        let slope = self.slope();
        let act = |mut t: Tensor<T>| {
            nn::activation::leaky_relu_inplace(t.data_mut(), slope);
            t
        };
        let a1 = act(conv2d_forward(x, self.w(p::ENC_CONV1_W), self.w(p::ENC_CONV1_B), 1, 2)?);
        let a2 = act(conv2d_forward(&a1, self.w(p::ENC_CONV2_W), self.w(p::ENC_CONV2_B), 2, 2)?);
        let a3 = act(conv2d_forward(&a2, self.w(p::ENC_CONV3_W), self.w(p::ENC_CONV3_B), 1, 2)?);
        let a4 = act(conv2d_forward(&a3, self.w(p::ENC_CONV4_W), self.w(p::ENC_CONV4_B), 2, 2)?);
        let n = x.shape()[0];
        let flat = a4.clone().reshaped(&[n, self.config.pre_head_len()])?;
        let mu = linear_forward(&flat, self.w(p::ENC_MU_W), self.w(p::ENC_MU_B))?;
        let lv = linear_forward(&flat, self.w(p::ENC_LV_W), self.w(p::ENC_LV_B))?;
        let trace = keep.then(|| EncoderTrace {
            input: x.clone(),
            act: [a1, a2, a3, a4],
            flat,
        });
        Ok((mu, lv, trace))
    }

    /// Backpropagate head gradients through the encoder, accumulating
    /// parameter gradients.
    pub fn encoder_backward(
        &mut self,
        trace: &EncoderTrace<T>,
        grad_mu: &Tensor<T>,
        grad_lv: &Tensor<T>,
    ) -> Result<()> {
        let slope = self.slope();
        let (d_flat_mu, gw_mu, gb_mu) =
            linear_backward(&trace.flat, self.w(p::ENC_MU_W), grad_mu)?;
        let (d_flat_lv, gw_lv, gb_lv) =
            linear_backward(&trace.flat, self.w(p::ENC_LV_W), grad_lv)?;
        self.params[p::ENC_MU_W].tensor.accumulate_grad(gw_mu.data());
        self.params[p::ENC_MU_B].tensor.accumulate_grad(gb_mu.data());
        self.params[p::ENC_LV_W].tensor.accumulate_grad(gw_lv.data());
        self.params[p::ENC_LV_B].tensor.accumulate_grad(gb_lv.data());

        let mut d_a4 = d_flat_mu;
        for (d, s) in d_a4.data_mut().iter_mut().zip(d_flat_lv.data()) {
            *d += *s;
        }
        let d_a4 = d_a4.reshaped(trace.act[3].shape())?;

        // conv4 .. conv1, walking activations backwards.
        let layers = [
            (p::ENC_CONV4_W, p::ENC_CONV4_B, 2usize),
            (p::ENC_CONV3_W, p::ENC_CONV3_B, 1),
            (p::ENC_CONV2_W, p::ENC_CONV2_B, 2),
            (p::ENC_CONV1_W, p::ENC_CONV1_B, 1),
        ];
        let mut grad_out = d_a4;
        for (i, (wi, bi, stride)) in layers.into_iter().enumerate() {
            let layer_idx = 3 - i;
            let out_act = &trace.act[layer_idx];
            leaky_relu_backward_inplace(out_act.data(), grad_out.data_mut(), slope);
            let input = if layer_idx == 0 { &trace.input } else { &trace.act[layer_idx - 1] };
            let (gx, gw, gb) = conv2d_backward(input, self.w(wi), &grad_out, stride, 2)?;
            self.params[wi].tensor.accumulate_grad(gw.data());
            self.params[bi].tensor.accumulate_grad(gb.data());
            grad_out = gx;
        }
        Ok(())
    }

    /// Decode latents `[N, z]` into per-site logits `[N, w, w, C*256]`.
    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.decode_traced_impl(z, false)?.0)
    }

    pub fn decode_traced(&self, z: &Tensor<T>) -> Result<(Tensor<T>, DecoderTrace<T>)> {
        let (logits, trace) = self.decode_traced_impl(z, true)?;
        Ok((logits, trace.expect("trace requested")))
    }

    fn decode_traced_impl(
        &self,
        z: &Tensor<T>,
        keep: bool,
    ) -> Result<(Tensor<T>, Option<DecoderTrace<T>>)> {
        if z.shape().len() != 2 || z.shape()[1] != self.config.z {
            return Err(Error::config(format!(
                "expected latents [N, {}], got {:?}",
                self.config.z,
                z.shape()
            )));
        }
        let n = z.shape()[0];
        let slope = self.slope();
        let act = |mut t: Tensor<T>| {
            nn::activation::leaky_relu_inplace(t.data_mut(), slope);
            t
        };
        let z_in = z.clone().reshaped(&[n, 1, 1, self.config.z])?;
        let a1 = act(deconv2d_forward(&z_in, self.w(p::DEC_DECONV1_W), self.w(p::DEC_DECONV1_B), 1, 0, 0)?);
        let a2 = act(deconv2d_forward(&a1, self.w(p::DEC_DECONV2_W), self.w(p::DEC_DECONV2_B), 1, 2, 0)?);
        let a3 = act(deconv2d_forward(&a2, self.w(p::DEC_DECONV3_W), self.w(p::DEC_DECONV3_B), 2, 2, 1)?);
        let a4 = act(deconv2d_forward(&a3, self.w(p::DEC_DECONV4_W), self.w(p::DEC_DECONV4_B), 1, 2, 0)?);
        let a5 = act(deconv2d_forward(&a4, self.w(p::DEC_DECONV5_W), self.w(p::DEC_DECONV5_B), 2, 2, 1)?);
        let logits = conv2d_forward(&a5, self.w(p::DEC_OUT_W), self.w(p::DEC_OUT_B), 1, 2)?;
        let trace = keep.then(|| DecoderTrace {
            z_in,
            act: [a1, a2, a3, a4, a5],
        });
        Ok((logits, trace))
    }

    /// Backpropagate logit gradients through the decoder; returns the
    /// gradient with respect to the latent `[N, z]`.
    pub fn decoder_backward(
        &mut self,
        trace: &DecoderTrace<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let slope = self.slope();
        let (mut grad, gw, gb) =
            conv2d_backward(&trace.act[4], self.w(p::DEC_OUT_W), grad_logits, 1, 2)?;
        self.params[p::DEC_OUT_W].tensor.accumulate_grad(gw.data());
        self.params[p::DEC_OUT_B].tensor.accumulate_grad(gb.data());

        let layers = [
            (p::DEC_DECONV5_W, p::DEC_DECONV5_B, 2usize, 2usize),
            (p::DEC_DECONV4_W, p::DEC_DECONV4_B, 1, 2),
            (p::DEC_DECONV3_W, p::DEC_DECONV3_B, 2, 2),
            (p::DEC_DECONV2_W, p::DEC_DECONV2_B, 1, 2),
            (p::DEC_DECONV1_W, p::DEC_DECONV1_B, 1, 0),
        ];
        for (i, (wi, bi, stride, pad)) in layers.into_iter().enumerate() {
            let layer_idx = 4 - i;
            let out_act = &trace.act[layer_idx];
            leaky_relu_backward_inplace(out_act.data(), grad.data_mut(), slope);
            let input = if layer_idx == 0 { &trace.z_in } else { &trace.act[layer_idx - 1] };
            let (gx, gw, gb) = deconv2d_backward(input, self.w(wi), &grad, stride, pad)?;
            self.params[wi].tensor.accumulate_grad(gw.data());
            self.params[bi].tensor.accumulate_grad(gb.data());
            grad = gx;
        }
        let n = grad.shape()[0];
        grad.reshaped(&[n, self.config.z])
    }

    /// Forward + backward for one micro-batch: inputs `[N, w, w, C]`
    /// normalized, targets in NHWC site order, per-sample loss weight
    /// `sample_weight` (1/batch for mean reduction). Returns summed
    /// (nll, kl) over the micro-batch. Gradients accumulate into parameters.
    ///
    /// `skip_encoder_grads` avoids the entire encoder backward when the
    /// encoder is frozen.
    pub fn train_step_accumulate(
        &mut self,
        x: &Tensor<T>,
        targets: &[u8],
        noise: &Tensor<T>,
        beta: T,
        sample_weight: T,
        skip_encoder_grads: bool,
    ) -> Result<(f64, f64)> {
        let (mu, lv, enc_trace) = self.encode_traced(x)?;
        let z = reparameterize(&mu, &lv, noise)?;
        let (mut logits, dec_trace) = self.decode_traced(&z)?;

        let n = x.shape()[0];
        let upstream = vec![sample_weight; n];
        let nll = categorical_nll_backward_inplace(
            &mut logits,
            targets,
            self.config.in_channels,
            &upstream,
        )?;
        let kl = gaussian_kl(&mu, &lv)?;

        let grad_z = self.decoder_backward(&dec_trace, &logits)?;
        if !skip_encoder_grads {
            let (mut grad_mu, mut grad_lv) = reparameterize_backward(&lv, noise, &grad_z)?;
            let kl_upstream = vec![beta * sample_weight; n];
            let (kmu, klv) = gaussian_kl_backward(&mu, &lv, &kl_upstream)?;
            for (g, a) in grad_mu.data_mut().iter_mut().zip(kmu.data()) {
                *g += *a;
            }
            for (g, a) in grad_lv.data_mut().iter_mut().zip(klv.data()) {
                *g += *a;
            }
            self.encoder_backward(&enc_trace, &grad_mu, &grad_lv)?;
        }

        let nll_sum = nll.iter().fold(0.0, |a, &b| a + b.into_f64());
        let kl_sum = kl.iter().fold(0.0, |a, &b| a + b.into_f64());
        Ok((nll_sum, kl_sum))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.config.w || s[2] != self.config.w || s[3] != self.config.in_channels
        {
            return Err(Error::config(format!(
                "expected input [N, {}, {}, {}], got {:?}",
                self.config.w, self.config.w, self.config.in_channels, s
            )));
        }
        Ok(())
    }

    /// Cast parameters (used by the 64-bit gradient-check path).
    pub fn cast<U: Scalar>(&self) -> VaeModel<U> {
        VaeModel {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Parameter::new(p.name.clone(), p.tensor.cast()))
                .collect(),
        }
    }
}

/// ELBO pieces for logging and the LL baseline: per-sample NLL and KL with a
/// β-weighted total. One latent draw per input.
pub fn elbo_loss<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[u8],
    channels: usize,
    mu: &Tensor<T>,
    log_var: &Tensor<T>,
    beta: T,
) -> Result<(f64, f64, f64)> {
    let nll = nn::categorical_nll(logits, targets, channels)?;
    let kl = gaussian_kl(mu, log_var)?;
    let n = nll.len() as f64;
    let recon = nll.iter().fold(0.0, |a, &b| a + b.into_f64()) / n;
    let kl_mean = kl.iter().fold(0.0, |a, &b| a + b.into_f64()) / n;
    Ok((recon + beta.into_f64() * kl_mean, recon, kl_mean))
}
