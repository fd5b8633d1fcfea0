//! The Fourier neural operator: lifting, a stack of Fourier layers (global
//! spectral path plus local pointwise path, gelu nonlinearity), and a
//! two-stage pointwise projection head. Forward and reverse-mode gradients
//! are analytic; see [`batch`] for the fused batched implementation.
//!
//! Spectral weights are stored per retained mode in a canonical
//! signed-frequency order ([`crate::fft::signed_freqs`]), so a model trained
//! on one grid can be evaluated on any finer power-of-two grid: the weights
//! re-embed into the new grid's low-frequency corner blocks and the operator
//! acts on the same integer frequencies.

mod batch;
pub(crate) mod kernels;

pub use batch::{BatchTape, Grads};
pub use kernels::gelu;

use crate::error::{Error, Result};
use crate::fft::kept_mode_set;
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FnoConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Hidden channel width d_v.
    pub width: usize,
    /// Number of Fourier layers L.
    pub layers: usize,
    /// Retained low-frequency modes per axis; 0 disables the spectral path
    /// entirely (the local-only ablation).
    pub modes1: usize,
    pub modes2: usize,
    /// Append two normalized coordinate channels before lifting.
    pub append_coords: bool,
}

impl FnoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument("channel counts must be >= 1".into()));
        }
        if self.width == 0 {
            return Err(Error::InvalidArgument("width must be >= 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::InvalidArgument("layer count must be >= 1".into()));
        }
        if (self.modes1 == 0) != (self.modes2 == 0) {
            return Err(Error::InvalidArgument(
                "modes1 and modes2 must both be zero or both be positive".into(),
            ));
        }
        Ok(())
    }

    /// Channels entering the lift map.
    pub fn lift_in(&self) -> usize {
        self.in_channels + if self.append_coords { 2 } else { 0 }
    }

    /// Hidden width of the projection head.
    pub fn proj_hidden(&self) -> usize {
        4 * self.width
    }

    /// Retained modes per layer: (2 m1)(2 m2).
    pub fn n_modes(&self) -> usize {
        4 * self.modes1 * self.modes2
    }

    /// Reject evaluation grids too small to carry the retained modes.
    pub fn check_resolution(&self, h: usize, w: usize) -> Result<()> {
        if self.modes1 == 0 {
            return Ok(());
        }
        if self.modes1 >= h / 2 || self.modes2 >= w / 2 {
            return Err(Error::ResolutionBelowModeSupport {
                m1: self.modes1,
                m2: self.modes2,
                h,
                w,
            });
        }
        Ok(())
    }
}

/// One named parameter block (flat row-major storage).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamBlock {
    fn zeros(name: &str, shape: &[usize]) -> ParamBlock {
        ParamBlock {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

// Block order: lift.w, lift.b, then per layer (r_re, r_im, w, b), then
// proj1.w, proj1.b, proj2.w, proj2.b. Fixed; the checkpoint format, the
// optimizer state and the gradient layout all follow it.
pub(crate) const LIFT_W: usize = 0;
pub(crate) const LIFT_B: usize = 1;
pub(crate) const LAYER_BASE: usize = 2;
pub(crate) const LAYER_STRIDE: usize = 4;
pub(crate) const L_RRE: usize = 0;
pub(crate) const L_RIM: usize = 1;
pub(crate) const L_W: usize = 2;
pub(crate) const L_B: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FnoModel {
    pub config: FnoConfig,
    pub blocks: Vec<ParamBlock>,
}

impl FnoModel {
    /// Zero-initialized parameter set with the canonical block layout.
    pub fn zeros(config: FnoConfig) -> Result<FnoModel> {
        config.validate()?;
        let dv = config.width;
        let nm = config.n_modes();
        let hidden = config.proj_hidden();
        let mut blocks = Vec::with_capacity(LAYER_BASE + LAYER_STRIDE * config.layers + 4);
        blocks.push(ParamBlock::zeros("lift.w", &[dv, config.lift_in()]));
        blocks.push(ParamBlock::zeros("lift.b", &[dv]));
        for l in 0..config.layers {
            blocks.push(ParamBlock::zeros(&format!("layer{l}.r_re"), &[nm, dv, dv]));
            blocks.push(ParamBlock::zeros(&format!("layer{l}.r_im"), &[nm, dv, dv]));
            blocks.push(ParamBlock::zeros(&format!("layer{l}.w"), &[dv, dv]));
            blocks.push(ParamBlock::zeros(&format!("layer{l}.b"), &[dv]));
        }
        blocks.push(ParamBlock::zeros("proj1.w", &[hidden, dv]));
        blocks.push(ParamBlock::zeros("proj1.b", &[hidden]));
        blocks.push(ParamBlock::zeros("proj2.w", &[config.out_channels, hidden]));
        blocks.push(ParamBlock::zeros("proj2.b", &[config.out_channels]));
        Ok(FnoModel { config, blocks })
    }

    /// Seeded initialization: pointwise maps uniform in
    /// (-1/sqrt(fan_in), +1/sqrt(fan_in)); spectral weights complex with
    /// re/im drawn from a normal of standard deviation 1/d_v^2.
    pub fn init(config: FnoConfig, seed: u64) -> Result<FnoModel> {
        fn uniform_fill<R: Rng>(block: &mut ParamBlock, fan_in: usize, rng: &mut R) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut block.data {
                *v = rng.gen_range(-bound..bound);
            }
        }

        let mut model = FnoModel::zeros(config)?;
        let mut rng = crate::seed::rng_root(seed, crate::seed::stream::INIT);
        let dv = model.config.width;
        let r_scale = 1.0 / (dv * dv) as f64;

        let lift_in = model.config.lift_in();
        let hidden = model.config.proj_hidden();
        let layers = model.config.layers;
        uniform_fill(&mut model.blocks[LIFT_W], lift_in, &mut rng);
        uniform_fill(&mut model.blocks[LIFT_B], lift_in, &mut rng);
        for l in 0..layers {
            let base = LAYER_BASE + LAYER_STRIDE * l;
            let n = model.blocks[base + L_RRE].len();
            for e in 0..n {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                model.blocks[base + L_RRE].data[e] = re * r_scale;
                model.blocks[base + L_RIM].data[e] = im * r_scale;
            }
            uniform_fill(&mut model.blocks[base + L_W], dv, &mut rng);
            uniform_fill(&mut model.blocks[base + L_B], dv, &mut rng);
        }
        let nb = model.blocks.len();
        uniform_fill(&mut model.blocks[nb - 4], dv, &mut rng);
        uniform_fill(&mut model.blocks[nb - 3], dv, &mut rng);
        uniform_fill(&mut model.blocks[nb - 2], hidden, &mut rng);
        uniform_fill(&mut model.blocks[nb - 1], hidden, &mut rng);
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub(crate) fn layer_block(&self, layer: usize, which: usize) -> &ParamBlock {
        &self.blocks[LAYER_BASE + LAYER_STRIDE * layer + which]
    }

    pub(crate) fn proj_block(&self, which: usize) -> &ParamBlock {
        let nb = self.blocks.len();
        &self.blocks[nb - 4 + which]
    }

    /// Forward pass for one sample, shaped `[in_channels, H, W]`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (h, w) = self.input_dims(input)?;
        let fields = vec![input.data().to_vec()];
        let outputs = self.forward_fields(&fields, h, w)?;
        Tensor::from_vec(
            &[self.config.out_channels, h, w],
            outputs.into_iter().next().expect("one output"),
        )
    }

    fn input_dims(&self, input: &Tensor) -> Result<(usize, usize)> {
        let shape = input.shape();
        if shape.len() != 3 || shape[0] != self.config.in_channels {
            return Err(Error::ShapeMismatch {
                left: vec![self.config.in_channels],
                right: shape.to_vec(),
            });
        }
        Ok((shape[1], shape[2]))
    }

    /// Forward pass over a batch of channel-major fields (`in_channels*H*W`
    /// each), without building a tape.
    pub fn forward_fields(&self, inputs: &[Vec<f64>], h: usize, w: usize) -> Result<Vec<Vec<f64>>> {
        let (out, _) = batch::forward_batch(self, inputs, h, w, false)?;
        Ok(out)
    }

    /// Forward pass that records the tape needed by [`FnoModel::backward`].
    pub fn forward_tape(
        &self,
        inputs: &[Vec<f64>],
        h: usize,
        w: usize,
    ) -> Result<(Vec<Vec<f64>>, BatchTape)> {
        let (out, tape) = batch::forward_batch(self, inputs, h, w, true)?;
        Ok((out, tape.expect("tape requested")))
    }

    /// Reverse-mode gradients for every parameter block and the input
    /// fields. Consumes the tape, so a tape cannot be replayed.
    pub fn backward(&self, tape: BatchTape, dout: &[Vec<f64>]) -> Grads {
        batch::backward_batch(self, tape, dout)
    }

    /// [`FnoModel::backward`] into caller-owned gradient storage; the
    /// training loop reuses one allocation across batches.
    pub fn backward_into(&self, tape: BatchTape, dout: &[Vec<f64>], grads: &mut Grads) {
        batch::backward_batch_into(self, tape, dout, grads)
    }
}

/// Learnable Fourier-domain filter of one layer, indexed `[mode][c_out][c_in]`
/// over [`kept_mode_set`] in canonical signed-frequency order.
#[derive(Debug, Clone)]
pub struct SpectralWeights {
    pub c_out: usize,
    pub c_in: usize,
    pub m1: usize,
    pub m2: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl SpectralWeights {
    pub fn zeros(c_out: usize, c_in: usize, m1: usize, m2: usize) -> SpectralWeights {
        let n = 4 * m1 * m2 * c_out * c_in;
        SpectralWeights {
            c_out,
            c_in,
            m1,
            m2,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    /// Channel-identity filter: R[k] = I for every retained mode.
    pub fn identity(channels: usize, m1: usize, m2: usize) -> SpectralWeights {
        let mut w = SpectralWeights::zeros(channels, channels, m1, m2);
        for k in 0..4 * m1 * m2 {
            for c in 0..channels {
                w.re[(k * channels + c) * channels + c] = 1.0;
            }
        }
        w
    }
}

/// The global path of one Fourier layer:
/// `Re(ifft2(M))` with `M[k] = R[k] . fft2(v)[k]` on retained modes and zero
/// elsewhere. Unlike the full model, mode counts up to Nyquist (`m = N/2`)
/// are accepted here.
pub fn spectral_conv_forward(v: &Tensor, weights: &SpectralWeights) -> Result<Tensor> {
    let shape = v.shape();
    if shape.len() != 3 || shape[0] != weights.c_in {
        return Err(Error::ShapeMismatch {
            left: vec![weights.c_in],
            right: shape.to_vec(),
        });
    }
    let (h, w) = (shape[1], shape[2]);
    let modes = kept_mode_set(h, w, weights.m1, weights.m2)?;
    batch::spectral_conv_single(v, weights, h, w, &modes)
}

/// One full Fourier layer: `gelu(spectral(v) + W v + b)` with the local map
/// applied at every grid point.
pub fn fourier_layer_forward(
    v: &Tensor,
    weights: &SpectralWeights,
    local_w: &Tensor,
    local_b: &Tensor,
) -> Result<Tensor> {
    let spectral = spectral_conv_forward(v, weights)?;
    let local = Tensor::matmul_pointwise(local_w, local_b, v)?;
    let combined = spectral.add(&local)?;
    Ok(Tensor::from_vec(
        combined.shape(),
        combined.data().iter().map(|&x| gelu(x)).collect(),
    )
    .expect("shape preserved"))
}
