//! Manual timing probe for the desk-scale training step. Ignored by default;
//! run with `cargo test --test perf_probe -- --ignored --nocapture`.

use vae_ood::datasets::gen_noise;
use vae_ood::lossy::LossyOp;
use vae_ood::vae::{train, Freeze, InputMode, TrainConfig, VaeConfig, VaeModel};

#[test]
#[ignore]
fn time_desk_scale_steps() {
    for (channels, f) in [(1usize, 16usize), (3, 16)] {
        let config = VaeConfig {
            f,
            z: 100,
            w: 32,
            in_channels: channels,
            leaky_slope: 0.2,
            beta: 1.0,
        };
        let mut model = VaeModel::<f32>::new(config, 1).unwrap();
        let data = gen_noise(256, 32, channels, 1).unwrap();
        let cfg = TrainConfig {
            lr: 3e-4,
            batch: 128,
            epochs: 1,
            seed: 1,
            freeze: Freeze::None,
            input_mode: InputMode::LossyToOriginal,
            lossy_op: Some(LossyOp::Nearest { scale: 4 }),
            max_steps: Some(2),
        };
        let start = std::time::Instant::now();
        let out = train(&mut model, &data, &cfg, None, None).unwrap();
        let dt = start.elapsed().as_secs_f64() / out.loss_curve.len() as f64;
        println!(
            "channels={channels} f={f}: {:.2} s/step ({} steps), projected 20-epoch/20k-subset: {:.1} min",
            dt,
            out.loss_curve.len(),
            dt * (20_000 / 128 * 20) as f64 / 60.0
        );
    }
}

#[test]
#[ignore]
fn time_step_components() {
    use vae_ood::nn::*;
    let n = 32usize;
    let x = Tensor::<f32>::full(&[n, 32, 32, 16], 0.3);
    let w = Tensor::<f32>::full(&[256, 16, 5, 5], 0.01);
    let b = Tensor::<f32>::zeros(&[256]);
    let t0 = std::time::Instant::now();
    let logits = conv2d_forward(&x, &w, &b, 1, 2).unwrap();
    println!("final conv fwd ({n} imgs): {:.1} ms", t0.elapsed().as_secs_f64() * 1e3);

    let targets = vec![128u8; n * 1024];
    let mut grads = logits.clone();
    let t0 = std::time::Instant::now();
    let _ = categorical_nll_backward_inplace(&mut grads, &targets, 1, &vec![1.0f32; n]).unwrap();
    println!("nll fwd+bwd: {:.1} ms", t0.elapsed().as_secs_f64() * 1e3);

    let t0 = std::time::Instant::now();
    let _ = conv2d_backward(&x, &w, &grads, 1, 2).unwrap();
    println!("final conv bwd: {:.1} ms", t0.elapsed().as_secs_f64() * 1e3);

    let t0 = std::time::Instant::now();
    let _ = categorical_nll(&logits, &targets, 1).unwrap();
    println!("nll fwd only: {:.1} ms", t0.elapsed().as_secs_f64() * 1e3);
}
