//! Finite-difference gradient checks for every differentiable kernel, run in
//! 64-bit across randomized small shapes.

mod common;

use common::{assert_gradient, random_bytes, random_vec, test_rng};
use rand::Rng;
use vae_ood::nn::{
    categorical_nll, categorical_nll_backward_inplace, conv2d_backward, conv2d_forward,
    deconv2d_backward, deconv2d_forward, gaussian_kl, gaussian_kl_backward, leaky_relu_backward,
    leaky_relu_forward, linear_backward, linear_forward, reparameterize, reparameterize_backward,
    Tensor,
};

/// Reduce a tensor to a scalar with fixed random weights so a single backward
/// pass exercises the whole Jacobian.
fn weighted_sum(t: &Tensor<f64>, weights: &[f64]) -> f64 {
    t.data().iter().zip(weights).map(|(a, b)| a * b).sum()
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = test_rng(seed);
        let n = rng.random_range(1..3usize);
        let c_in = rng.random_range(1..4usize);
        let c_out = rng.random_range(1..4usize);
        let k = *[1usize, 3, 5][rng.random_range(0..3usize)..].first().unwrap();
        let stride = rng.random_range(1..3usize);
        let pad = rng.random_range(0..=k / 2);
        let h = rng.random_range(k.max(3)..8usize);

        let x = random_vec(&mut rng, n * h * h * c_in, -1.0, 1.0);
        let w = random_vec(&mut rng, c_out * c_in * k * k, -1.0, 1.0);
        let b = random_vec(&mut rng, c_out, -0.5, 0.5);

        let forward = |xv: &[f64], wv: &[f64], bv: &[f64]| {
            conv2d_forward(
                &Tensor::from_vec(&[n, h, h, c_in], xv.to_vec()).unwrap(),
                &Tensor::from_vec(&[c_out, c_in, k, k], wv.to_vec()).unwrap(),
                &Tensor::from_vec(&[c_out], bv.to_vec()).unwrap(),
                stride,
                pad,
            )
            .unwrap()
        };
        let out = forward(&x, &w, &b);
        let loss_w = random_vec(&mut rng, out.len(), -1.0, 1.0);

        let (gx, gw, gb) = conv2d_backward(
            &Tensor::from_vec(&[n, h, h, c_in], x.clone()).unwrap(),
            &Tensor::from_vec(&[c_out, c_in, k, k], w.clone()).unwrap(),
            &Tensor::from_vec(out.shape(), loss_w.clone()).unwrap(),
            stride,
            pad,
        )
        .unwrap();

        let label = format!("conv2d seed {seed} (n{n} c{c_in}->{c_out} k{k} s{stride} p{pad})");
        assert_gradient(
            &format!("{label} d/dinput"),
            |xv| weighted_sum(&forward(xv, &w, &b), &loss_w),
            &x,
            gx.data(),
        );
        assert_gradient(
            &format!("{label} d/dweight"),
            |wv| weighted_sum(&forward(&x, wv, &b), &loss_w),
            &w,
            gw.data(),
        );
        assert_gradient(
            &format!("{label} d/dbias"),
            |bv| weighted_sum(&forward(&x, &w, bv), &loss_w),
            &b,
            gb.data(),
        );
    }
}

#[test]
fn deconv2d_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = test_rng(100 + seed);
        let n = rng.random_range(1..3usize);
        let c_in = rng.random_range(1..4usize);
        let c_out = rng.random_range(1..4usize);
        let k = *[2usize, 3, 5][rng.random_range(0..3usize)..].first().unwrap();
        let stride = rng.random_range(1..3usize);
        let out_pad = if stride > 1 { rng.random_range(0..stride.min(k)) } else { 0 };
        let pad = rng.random_range(0..=k / 2);
        let h = rng.random_range(2..6usize);

        let x = random_vec(&mut rng, n * h * h * c_in, -1.0, 1.0);
        let w = random_vec(&mut rng, c_in * c_out * k * k, -1.0, 1.0);
        let b = random_vec(&mut rng, c_out, -0.5, 0.5);

        let forward = |xv: &[f64], wv: &[f64], bv: &[f64]| {
            deconv2d_forward(
                &Tensor::from_vec(&[n, h, h, c_in], xv.to_vec()).unwrap(),
                &Tensor::from_vec(&[c_in, c_out, k, k], wv.to_vec()).unwrap(),
                &Tensor::from_vec(&[c_out], bv.to_vec()).unwrap(),
                stride,
                pad,
                out_pad,
            )
            .unwrap()
        };
        let out = forward(&x, &w, &b);
        let loss_w = random_vec(&mut rng, out.len(), -1.0, 1.0);

        let (gx, gw, gb) = deconv2d_backward(
            &Tensor::from_vec(&[n, h, h, c_in], x.clone()).unwrap(),
            &Tensor::from_vec(&[c_in, c_out, k, k], w.clone()).unwrap(),
            &Tensor::from_vec(out.shape(), loss_w.clone()).unwrap(),
            stride,
            pad,
        )
        .unwrap();

        let label = format!("deconv2d seed {seed} (n{n} c{c_in}->{c_out} k{k} s{stride} p{pad} op{out_pad})");
        assert_gradient(
            &format!("{label} d/dinput"),
            |xv| weighted_sum(&forward(xv, &w, &b), &loss_w),
            &x,
            gx.data(),
        );
        assert_gradient(
            &format!("{label} d/dweight"),
            |wv| weighted_sum(&forward(&x, wv, &b), &loss_w),
            &w,
            gw.data(),
        );
        assert_gradient(
            &format!("{label} d/dbias"),
            |bv| weighted_sum(&forward(&x, &w, bv), &loss_w),
            &b,
            gb.data(),
        );
    }
}

#[test]
fn linear_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = test_rng(200 + seed);
        let n = rng.random_range(1..5usize);
        let d = rng.random_range(1..7usize);
        let k = rng.random_range(1..6usize);
        let x = random_vec(&mut rng, n * d, -1.0, 1.0);
        let w = random_vec(&mut rng, d * k, -1.0, 1.0);
        let b = random_vec(&mut rng, k, -0.5, 0.5);

        let forward = |xv: &[f64], wv: &[f64], bv: &[f64]| {
            linear_forward(
                &Tensor::from_vec(&[n, d], xv.to_vec()).unwrap(),
                &Tensor::from_vec(&[d, k], wv.to_vec()).unwrap(),
                &Tensor::from_vec(&[k], bv.to_vec()).unwrap(),
            )
            .unwrap()
        };
        let loss_w = random_vec(&mut rng, n * k, -1.0, 1.0);
        let (gx, gw, gb) = linear_backward(
            &Tensor::from_vec(&[n, d], x.clone()).unwrap(),
            &Tensor::from_vec(&[d, k], w.clone()).unwrap(),
            &Tensor::from_vec(&[n, k], loss_w.clone()).unwrap(),
        )
        .unwrap();

        assert_gradient(
            &format!("linear seed {seed} d/dinput"),
            |xv| weighted_sum(&forward(xv, &w, &b), &loss_w),
            &x,
            gx.data(),
        );
        assert_gradient(
            &format!("linear seed {seed} d/dweight"),
            |wv| weighted_sum(&forward(&x, wv, &b), &loss_w),
            &w,
            gw.data(),
        );
        assert_gradient(
            &format!("linear seed {seed} d/dbias"),
            |bv| weighted_sum(&forward(&x, &w, bv), &loss_w),
            &b,
            gb.data(),
        );
    }
}

#[test]
fn leaky_relu_gradient_matches_away_from_kink() {
    for seed in 0..20 {
        let mut rng = test_rng(300 + seed);
        let n = rng.random_range(4..64usize);
        // Keep samples away from zero so the finite difference never
        // straddles the kink.
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.random_range(0.01..2.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let slope = 0.2;
        let loss_w = random_vec(&mut rng, n, -1.0, 1.0);
        let grad = leaky_relu_backward(
            &Tensor::from_vec(&[n], x.clone()).unwrap(),
            &Tensor::from_vec(&[n], loss_w.clone()).unwrap(),
            slope,
        )
        .unwrap();
        let numeric = common::finite_difference_gradient(
            |xv| {
                let y = leaky_relu_forward(&Tensor::from_vec(&[n], xv.to_vec()).unwrap(), slope)
                    .unwrap();
                weighted_sum(&y, &loss_w)
            },
            &x,
            1e-4,
        );
        let err = common::max_relative_error(grad.data(), &numeric);
        assert!(err < 1e-6, "leaky_relu seed {seed}: rel err {err:.3e}");
    }
}

#[test]
fn reparameterize_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = test_rng(400 + seed);
        let n = rng.random_range(1..4usize);
        let z = rng.random_range(1..6usize);
        let mu = random_vec(&mut rng, n * z, -1.0, 1.0);
        let lv = random_vec(&mut rng, n * z, -1.0, 1.0);
        let noise = random_vec(&mut rng, n * z, -2.0, 2.0);
        let loss_w = random_vec(&mut rng, n * z, -1.0, 1.0);

        let noise_t = Tensor::from_vec(&[n, z], noise.clone()).unwrap();
        let (gmu, glv) = reparameterize_backward(
            &Tensor::from_vec(&[n, z], lv.clone()).unwrap(),
            &noise_t,
            &Tensor::from_vec(&[n, z], loss_w.clone()).unwrap(),
        )
        .unwrap();

        assert_gradient(
            &format!("reparameterize seed {seed} d/dmu"),
            |m| {
                let zt = reparameterize(
                    &Tensor::from_vec(&[n, z], m.to_vec()).unwrap(),
                    &Tensor::from_vec(&[n, z], lv.clone()).unwrap(),
                    &noise_t,
                )
                .unwrap();
                weighted_sum(&zt, &loss_w)
            },
            &mu,
            gmu.data(),
        );
        assert_gradient(
            &format!("reparameterize seed {seed} d/dlogvar"),
            |l| {
                let zt = reparameterize(
                    &Tensor::from_vec(&[n, z], mu.clone()).unwrap(),
                    &Tensor::from_vec(&[n, z], l.to_vec()).unwrap(),
                    &noise_t,
                )
                .unwrap();
                weighted_sum(&zt, &loss_w)
            },
            &lv,
            glv.data(),
        );
    }
}

#[test]
fn gaussian_kl_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = test_rng(500 + seed);
        let n = rng.random_range(1..4usize);
        let z = rng.random_range(1..6usize);
        let mu = random_vec(&mut rng, n * z, -1.0, 1.0);
        let lv = random_vec(&mut rng, n * z, -1.0, 1.0);
        let upstream = random_vec(&mut rng, n, -1.0, 1.0);

        let (gmu, glv) = gaussian_kl_backward(
            &Tensor::from_vec(&[n, z], mu.clone()).unwrap(),
            &Tensor::from_vec(&[n, z], lv.clone()).unwrap(),
            &upstream,
        )
        .unwrap();

        let loss = |m: &[f64], l: &[f64]| {
            gaussian_kl(
                &Tensor::from_vec(&[n, z], m.to_vec()).unwrap(),
                &Tensor::from_vec(&[n, z], l.to_vec()).unwrap(),
            )
            .unwrap()
            .iter()
            .zip(&upstream)
            .map(|(a, b)| a * b)
            .sum::<f64>()
        };
        assert_gradient(
            &format!("gaussian_kl seed {seed} d/dmu"),
            |m| loss(m, &lv),
            &mu,
            gmu.data(),
        );
        assert_gradient(
            &format!("gaussian_kl seed {seed} d/dlogvar"),
            |l| loss(&mu, l),
            &lv,
            glv.data(),
        );
    }
}

#[test]
fn categorical_nll_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = test_rng(600 + seed);
        let n = rng.random_range(1..3usize);
        let c = rng.random_range(1..3usize);
        let hw = rng.random_range(1..3usize);
        let sites = n * hw * hw * c;
        let logits = random_vec(&mut rng, sites * 256, -2.0, 2.0);
        let targets = random_bytes(&mut rng, sites);
        let upstream = random_vec(&mut rng, n, -1.0, 1.0);

        let mut grad_holder =
            Tensor::from_vec(&[n, hw, hw, c * 256], logits.clone()).unwrap();
        categorical_nll_backward_inplace(&mut grad_holder, &targets, c, &upstream).unwrap();

        let loss = |lv: &[f64]| {
            categorical_nll(
                &Tensor::from_vec(&[n, hw, hw, c * 256], lv.to_vec()).unwrap(),
                &targets,
                c,
            )
            .unwrap()
            .iter()
            .zip(&upstream)
            .map(|(a, b)| a * b)
            .sum::<f64>()
        };
        assert_gradient(
            &format!("categorical_nll seed {seed} d/dlogits"),
            loss,
            &logits,
            grad_holder.data(),
        );
    }
}
