//! FIM-shaped throughput probe: `cargo test --test perf_fim -- --ignored --nocapture`.

use std::time::Instant;
use waveop_core::fno::{FnoConfig, FnoModel, Grads};
use waveop_core::trainer::{adam_step, relative_l2_grad, AdamState, TrainConfig};

#[test]
#[ignore]
fn fim_shape_timings() {
    let cfg = FnoConfig {
        in_channels: 25,
        out_channels: 2,
        width: 32,
        layers: 4,
        modes1: 7,
        modes2: 7,
        append_coords: true,
    };
    let mut model = FnoModel::init(cfg, 1).unwrap();
    let (h, w, b) = (16, 16, 16);
    let inputs: Vec<Vec<f64>> = (0..b)
        .map(|s| (0..25 * h * w).map(|i| ((i + s) as f64 * 0.01).sin()).collect())
        .collect();
    let targets: Vec<Vec<f64>> = (0..b)
        .map(|s| (0..2 * h * w).map(|i| ((i + s) as f64 * 0.02).cos()).collect())
        .collect();
    let mut grads = Grads::zeros_like(&model, b, h * w);
    let mut adam = AdamState::new(&model);
    let tc = TrainConfig::default();
    for _ in 0..2 {
        let (out, tape) = model.forward_tape(&inputs, h, w).unwrap();
        let dout = relative_l2_grad(&out, &targets).unwrap();
        model.backward_into(tape, &dout, &mut grads);
    }
    let reps = 20;
    let t0 = Instant::now();
    for _ in 0..reps {
        let (out, tape) = model.forward_tape(&inputs, h, w).unwrap();
        let dout = relative_l2_grad(&out, &targets).unwrap();
        model.backward_into(tape, &dout, &mut grads);
        adam_step(&mut model, &grads, &mut adam, &tc, 1e-3).unwrap();
    }
    let per = t0.elapsed().as_secs_f64() / (reps * b) as f64;
    println!("fim sample-pass: {:.3} ms", per * 1e3);
}
