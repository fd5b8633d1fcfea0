//! Central finite-difference verification of the analytic gradients, over
//! every parameter entry of every block and the input fields, using the same
//! relative-L2 loss the trainer optimizes.

use crate::error::Result;
use crate::fno::{FnoConfig, FnoModel};
use crate::trainer::{relative_l2_grad, relative_l2_loss};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// (block name, max relative error, entries checked) per block, then
    /// one "input" row.
    pub rows: Vec<(String, f64, usize)>,
    pub max_rel_err: f64,
}

/// The tiny verification configuration: 8x8 grid, width 2, two layers,
/// two modes per axis.
pub fn tiny_config() -> FnoConfig {
    FnoConfig {
        in_channels: 2,
        out_channels: 2,
        width: 2,
        layers: 2,
        modes1: 2,
        modes2: 2,
        append_coords: true,
    }
}

/// Relative error with a floor: tiny gradients are compared absolutely at
/// a 1e-4 scale so finite-difference noise cannot blow up the ratio.
fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-4)
}

/// Sweep every parameter of every block and the input with central
/// differences of the given step. `stride` > 1 subsamples blocks for quick
/// smoke runs; the acceptance suite uses stride 1.
pub fn gradcheck(config: &FnoConfig, seed: u64, step: f64, stride: usize) -> Result<GradCheckReport> {
    let model = FnoModel::init(config.clone(), seed)?;
    let (h, w) = (8usize, 8usize);
    let pixels = h * w;
    let batch = 2usize;

    let mut rng = crate::seed::rng_for(seed, crate::seed::stream::INIT, 999);
    let mut field = |_: usize| -> Vec<f64> {
        (0..config.in_channels * pixels)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect()
    };
    let inputs: Vec<Vec<f64>> = (0..batch).map(&mut field).collect();
    let targets: Vec<Vec<f64>> = (0..batch)
        .map(|_| {
            (0..config.out_channels * pixels)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();

    let loss_of = |m: &FnoModel, ins: &[Vec<f64>]| -> Result<f64> {
        let out = m.forward_fields(ins, h, w)?;
        relative_l2_loss(&out, &targets)
    };

    let (out, tape) = model.forward_tape(&inputs, h, w)?;
    let dout = relative_l2_grad(&out, &targets)?;
    let grads = model.backward(tape, &dout);

    let stride = stride.max(1);
    let mut rows = Vec::new();
    let mut overall: f64 = 0.0;
    for (bi, block) in model.blocks.iter().enumerate() {
        let mut worst: f64 = 0.0;
        let mut checked = 0usize;
        for e in (0..block.len()).step_by(stride) {
            let mut plus = model.clone();
            plus.blocks[bi].data[e] += step;
            let mut minus = model.clone();
            minus.blocks[bi].data[e] -= step;
            let fd = (loss_of(&plus, &inputs)? - loss_of(&minus, &inputs)?) / (2.0 * step);
            worst = worst.max(rel_err(fd, grads.blocks[bi][e]));
            checked += 1;
        }
        overall = overall.max(worst);
        rows.push((block.name.clone(), worst, checked));
    }

    let mut worst_input: f64 = 0.0;
    let mut checked = 0usize;
    for s in 0..batch {
        for e in (0..inputs[s].len()).step_by(stride) {
            let mut plus = inputs.clone();
            plus[s][e] += step;
            let mut minus = inputs.clone();
            minus[s][e] -= step;
            let fd = (loss_of(&model, &plus)? - loss_of(&model, &minus)?) / (2.0 * step);
            worst_input = worst_input.max(rel_err(fd, grads.input[s][e]));
            checked += 1;
        }
    }
    overall = overall.max(worst_input);
    rows.push(("input".to_string(), worst_input, checked));

    Ok(GradCheckReport {
        rows,
        max_rel_err: overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_sweep_on_tiny_config_passes() {
        let report = gradcheck(&tiny_config(), 17, 1e-5, 1).unwrap();
        assert!(
            report.max_rel_err < 1e-5,
            "max relative error {}",
            report.max_rel_err
        );
        // every block plus the input row
        let model = FnoModel::init(tiny_config(), 17).unwrap();
        assert_eq!(report.rows.len(), model.blocks.len() + 1);
        let total: usize = report.rows.iter().map(|r| r.2).sum();
        assert_eq!(total, model.param_count() + 2 * 2 * 64);
    }

    #[test]
    fn local_only_ablation_also_passes() {
        let cfg = FnoConfig {
            modes1: 0,
            modes2: 0,
            ..tiny_config()
        };
        let report = gradcheck(&cfg, 3, 1e-5, 1).unwrap();
        assert!(report.max_rel_err < 1e-5, "{}", report.max_rel_err);
    }
}
