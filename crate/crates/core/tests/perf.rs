//! Manual throughput probe: `cargo test --test perf -- --ignored --nocapture`.

use std::time::Instant;
use waveop_core::fno::{FnoConfig, FnoModel, Grads};
use waveop_core::trainer::{adam_step, relative_l2_grad, AdamState, TrainConfig};

#[test]
#[ignore]
fn phase_timings() {
    let cfg = FnoConfig {
        in_channels: 2,
        out_channels: 2,
        width: 32,
        layers: 4,
        modes1: 12,
        modes2: 12,
        append_coords: true,
    };
    let mut model = FnoModel::init(cfg, 1).unwrap();
    let (h, w, b) = (32, 32, 16);
    let inputs: Vec<Vec<f64>> = (0..b)
        .map(|s| {
            (0..2 * h * w)
                .map(|i| ((i + s) as f64 * 0.01).sin())
                .collect()
        })
        .collect();
    let targets = inputs.clone();

    // realistic loop: one live tape, forward+backward+adam per batch
    let mut grads = Grads::zeros_like(&model, b, h * w);
    let mut adam = AdamState::new(&model);
    let tc = TrainConfig::default();
    let reps = 10;

    // warm up the allocator
    for _ in 0..2 {
        let (out, tape) = model.forward_tape(&inputs, h, w).unwrap();
        let dout = relative_l2_grad(&out, &targets).unwrap();
        model.backward_into(tape, &dout, &mut grads);
    }

    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = model.forward_fields(&inputs, h, w).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / (reps * b) as f64;

    let mut t_fwd_tape = 0.0;
    let mut t_bwd = 0.0;
    let mut t_adam = 0.0;
    for _ in 0..reps {
        let t0 = Instant::now();
        let (out, tape) = model.forward_tape(&inputs, h, w).unwrap();
        t_fwd_tape += t0.elapsed().as_secs_f64();
        let dout = relative_l2_grad(&out, &targets).unwrap();
        let t0 = Instant::now();
        model.backward_into(tape, &dout, &mut grads);
        t_bwd += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        adam_step(&mut model, &grads, &mut adam, &tc, 1e-3).unwrap();
        t_adam += t0.elapsed().as_secs_f64();
    }
    let scale = 1e3 / (reps * b) as f64;
    println!("forward (no tape) {:8.3} ms/sample", fwd * 1e3);
    println!("forward+tape      {:8.3} ms/sample", t_fwd_tape * scale);
    println!("backward          {:8.3} ms/sample", t_bwd * scale);
    println!("adam (amortized)  {:8.3} ms/sample", t_adam * scale);
    println!(
        "total             {:8.3} ms/sample-pass",
        (t_fwd_tape + t_bwd + t_adam) * scale
    );
}
