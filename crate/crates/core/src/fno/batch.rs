//! Batched forward/backward passes.
//!
//! Activations are channel-major (`[channel][pixel]`) per sample. The
//! spectral path gathers retained modes from every sample and channel into
//! `[mode][channel][sample]` blocks so the per-mode complex channel mixing
//! runs as small matrix products with the sample index innermost. Gradients
//! of the spectral weights are accumulated per batch from the stored mode
//! blocks, never per sample, which keeps the memory traffic on the big
//! weight tensors to one pass per batch.
//!
//! Everything is sequential with fixed accumulation order; results do not
//! depend on thread count.

use super::kernels::{
    axpy, dot, fft2_split, gelu_deriv, gelu_from_tanh, gelu_with_tanh, sum, transpose, FftScratch,
};
use super::{FnoModel, SpectralWeights, L_B, L_RIM, L_RRE, L_W};
use crate::error::{Error, Result};
use crate::fft::{kept_mode_set, FftPlan};
use crate::tensor::{pointwise_linear, Tensor};

/// Split-complex block with logical layout `[mode][channel][sample]`.
struct ModeBuf {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ModeBuf {
    fn zeros(len: usize) -> ModeBuf {
        ModeBuf {
            re: vec![0.0; len],
            im: vec![0.0; len],
        }
    }
}

/// Activation record of one forward pass; consumed by the backward pass.
pub struct BatchTape {
    h: usize,
    w: usize,
    input_full: Vec<Vec<f64>>,
    /// v_0 .. v_L, channel-major per sample.
    activations: Vec<Vec<Vec<f64>>>,
    /// Retained-mode spectra of each layer input, `[mode][c_in][sample]`.
    vkept: Vec<ModeBuf>,
    /// Pre-activations of each layer and their stored tanh values.
    z: Vec<Vec<Vec<f64>>>,
    zt: Vec<Vec<Vec<f64>>>,
    /// Projection hidden pre-activation and tanh.
    q1: Vec<Vec<f64>>,
    q1t: Vec<Vec<f64>>,
}

/// Gradients for every parameter block (same order as `FnoModel::blocks`)
/// and for the input fields.
pub struct Grads {
    pub blocks: Vec<Vec<f64>>,
    pub input: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(model: &FnoModel, batch: usize, pixels: usize) -> Grads {
        Grads {
            blocks: model.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            input: vec![vec![0.0; model.config.in_channels * pixels]; batch],
        }
    }

    fn reset_small(&mut self, model: &FnoModel) {
        // Spectral blocks are assigned, not accumulated; everything else
        // starts from zero each batch.
        for (g, b) in self.blocks.iter_mut().zip(&model.blocks) {
            if !b.name.ends_with(".r_re") && !b.name.ends_with(".r_im") {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        for g in &mut self.input {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn mode_lins(h: usize, w: usize, m1: usize, m2: usize) -> Result<Vec<usize>> {
    Ok(kept_mode_set(h, w, m1, m2)?
        .into_iter()
        .map(|(k1, k2)| k1 * w + k2)
        .collect())
}

const CHUNK: usize = 8;

/// Complex accumulation `acc += R * X` over the channel index, with the
/// sample lanes split into register-resident chunks and four independent
/// FMA chains per chunk (rr, ii, ri, ir), combined once at the end.
#[inline]
fn complex_reduce(
    rrow_re: &[f64],
    rrow_im: &[f64],
    x_re: &[f64],
    x_im: &[f64],
    c: usize,
    b: usize,
    conj: bool,
    out_re: &mut [f64],
    out_im: &mut [f64],
) {
    let sign = if conj { -1.0 } else { 1.0 };
    let mut s0 = 0;
    while s0 + CHUNK <= b {
        let mut a_rr = [0.0f64; CHUNK];
        let mut a_ii = [0.0f64; CHUNK];
        let mut a_ri = [0.0f64; CHUNK];
        let mut a_ir = [0.0f64; CHUNK];
        for i in 0..c {
            let ar = rrow_re[i];
            let ai = rrow_im[i];
            let xre = &x_re[i * b + s0..i * b + s0 + CHUNK];
            let xim = &x_im[i * b + s0..i * b + s0 + CHUNK];
            for l in 0..CHUNK {
                a_rr[l] = ar.mul_add(xre[l], a_rr[l]);
                a_ii[l] = ai.mul_add(xim[l], a_ii[l]);
                a_ri[l] = ar.mul_add(xim[l], a_ri[l]);
                a_ir[l] = ai.mul_add(xre[l], a_ir[l]);
            }
        }
        for l in 0..CHUNK {
            out_re[s0 + l] = a_rr[l] - sign * a_ii[l];
            out_im[s0 + l] = a_ri[l] + sign * a_ir[l];
        }
        s0 += CHUNK;
    }
    for s in s0..b {
        let (mut rr, mut ii, mut ri, mut ir) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..c {
            let ar = rrow_re[i];
            let ai = rrow_im[i];
            rr = ar.mul_add(x_re[i * b + s], rr);
            ii = ai.mul_add(x_im[i * b + s], ii);
            ri = ar.mul_add(x_im[i * b + s], ri);
            ir = ai.mul_add(x_re[i * b + s], ir);
        }
        out_re[s] = rr - sign * ii;
        out_im[s] = ri + sign * ir;
    }
}

/// `M[k] = R[k] V[k]` per retained mode; complex, sample index innermost.
fn mode_matmul(
    r_re: &[f64],
    r_im: &[f64],
    v: &ModeBuf,
    out: &mut ModeBuf,
    n_modes: usize,
    c_out: usize,
    c_in: usize,
    b: usize,
) {
    for k in 0..n_modes {
        let rre = &r_re[k * c_out * c_in..(k + 1) * c_out * c_in];
        let rim = &r_im[k * c_out * c_in..(k + 1) * c_out * c_in];
        let vre = &v.re[k * c_in * b..(k + 1) * c_in * b];
        let vim = &v.im[k * c_in * b..(k + 1) * c_in * b];
        let mre = &mut out.re[k * c_out * b..(k + 1) * c_out * b];
        let mim = &mut out.im[k * c_out * b..(k + 1) * c_out * b];
        for o in 0..c_out {
            complex_reduce(
                &rre[o * c_in..(o + 1) * c_in],
                &rim[o * c_in..(o + 1) * c_in],
                vre,
                vim,
                c_in,
                b,
                false,
                &mut mre[o * b..(o + 1) * b],
                &mut mim[o * b..(o + 1) * b],
            );
        }
    }
}

/// `dV[k] = R[k]^H dM[k]` per retained mode. The conjugate-transposed rows
/// are gathered into a scratch pair so the reduction kernel sees contiguous
/// coefficients.
struct AdjointScratch {
    re: Vec<f64>,
    im: Vec<f64>,
}

fn mode_matmul_adjoint(
    r_re: &[f64],
    r_im: &[f64],
    dm: &ModeBuf,
    out: &mut ModeBuf,
    scratch: &mut AdjointScratch,
    n_modes: usize,
    c_out: usize,
    c_in: usize,
    b: usize,
) {
    for k in 0..n_modes {
        let rre = &r_re[k * c_out * c_in..(k + 1) * c_out * c_in];
        let rim = &r_im[k * c_out * c_in..(k + 1) * c_out * c_in];
        let dre = &dm.re[k * c_out * b..(k + 1) * c_out * b];
        let dim = &dm.im[k * c_out * b..(k + 1) * c_out * b];
        let ore = &mut out.re[k * c_in * b..(k + 1) * c_in * b];
        let oim = &mut out.im[k * c_in * b..(k + 1) * c_in * b];
        // transpose R[k] so rows run over c_out
        transpose(rre, &mut scratch.re, c_out, c_in);
        transpose(rim, &mut scratch.im, c_out, c_in);
        for i in 0..c_in {
            complex_reduce(
                &scratch.re[i * c_out..(i + 1) * c_out],
                &scratch.im[i * c_out..(i + 1) * c_out],
                dre,
                dim,
                c_out,
                b,
                true,
                &mut ore[i * b..(i + 1) * b],
                &mut oim[i * b..(i + 1) * b],
            );
        }
    }
}

/// `dR[k] = dM[k] V[k]^H` per retained mode; written, not accumulated.
/// The V block transposes to `[sample][c_in]` per mode so the contraction
/// over samples runs with c_in lanes: `Sigma_s dm[s] conj(v[s])` is
/// `conj(Sigma_s conj(dm[s]) v[s])`, one conjugated reduction plus an
/// imaginary-part flip.
fn mode_weight_grad(
    dm: &ModeBuf,
    v: &ModeBuf,
    dr_re: &mut [f64],
    dr_im: &mut [f64],
    scratch: &mut AdjointScratch,
    n_modes: usize,
    c_out: usize,
    c_in: usize,
    b: usize,
) {
    for k in 0..n_modes {
        let dre = &dm.re[k * c_out * b..(k + 1) * c_out * b];
        let dim = &dm.im[k * c_out * b..(k + 1) * c_out * b];
        let vre = &v.re[k * c_in * b..(k + 1) * c_in * b];
        let vim = &v.im[k * c_in * b..(k + 1) * c_in * b];
        let gre = &mut dr_re[k * c_out * c_in..(k + 1) * c_out * c_in];
        let gim = &mut dr_im[k * c_out * c_in..(k + 1) * c_out * c_in];
        let vt_re = &mut scratch.re[..c_in * b];
        let vt_im = &mut scratch.im[..c_in * b];
        transpose(vre, vt_re, c_in, b);
        transpose(vim, vt_im, c_in, b);
        for o in 0..c_out {
            let grow_re = &mut gre[o * c_in..(o + 1) * c_in];
            let grow_im = &mut gim[o * c_in..(o + 1) * c_in];
            complex_reduce(
                &dre[o * b..(o + 1) * b],
                &dim[o * b..(o + 1) * b],
                vt_re,
                vt_im,
                b,
                c_in,
                true,
                grow_re,
                grow_im,
            );
            for g in grow_im.iter_mut() {
                *g = -*g;
            }
        }
    }
}

struct SpectralWorkspace {
    plan_h: FftPlan,
    plan_w: FftPlan,
    scratch: FftScratch,
    field_re: Vec<f64>,
    field_im: Vec<f64>,
    /// `[channel*sample][mode]` staging block for gathers/scatters.
    staged: ModeBuf,
}

impl SpectralWorkspace {
    fn new(h: usize, w: usize, channels: usize, b: usize, n_modes: usize) -> Result<SpectralWorkspace> {
        Ok(SpectralWorkspace {
            plan_h: FftPlan::new(h)?,
            plan_w: FftPlan::new(w)?,
            scratch: FftScratch::new(h * w),
            field_re: vec![0.0; h * w],
            field_im: vec![0.0; h * w],
            staged: ModeBuf::zeros(n_modes * channels * b),
        })
    }
}

/// FFT every (sample, channel) real field, gather retained modes into
/// `[mode][channel][sample]`, optionally scaling by `scale`.
#[allow(clippy::too_many_arguments)]
fn gather_modes(
    fields: &[Vec<f64>],
    channels: usize,
    b: usize,
    pixels: usize,
    lins: &[usize],
    ws: &mut SpectralWorkspace,
    out: &mut ModeBuf,
    scale: f64,
) {
    let n_modes = lins.len();
    let h = ws.plan_h.len();
    let w = ws.plan_w.len();
    for s in 0..b {
        for c in 0..channels {
            ws.field_re
                .copy_from_slice(&fields[s][c * pixels..(c + 1) * pixels]);
            ws.field_im.iter_mut().for_each(|v| *v = 0.0);
            fft2_split(
                &mut ws.field_re,
                &mut ws.field_im,
                h,
                w,
                &ws.plan_h,
                &ws.plan_w,
                &mut ws.scratch,
                false,
            );
            let row = (c * b + s) * n_modes;
            for (kx, &lin) in lins.iter().enumerate() {
                ws.staged.re[row + kx] = ws.field_re[lin] * scale;
                ws.staged.im[row + kx] = ws.field_im[lin] * scale;
            }
        }
    }
    // [c*b][k] -> [k][c][b]
    transpose(&ws.staged.re, &mut out.re, channels * b, n_modes);
    transpose(&ws.staged.im, &mut out.im, channels * b, n_modes);
}

/// Inverse of [`gather_modes`]: scatter `[mode][channel][sample]` blocks
/// into zero spectra, inverse-FFT, and write `scale * Re` into `out_fields`
/// (adding to whatever is already there when `accumulate` is set).
/// `conjugate` scatters the complex conjugate, which together with a forward
/// FFT realizes the unscaled inverse transform the backward pass needs.
#[allow(clippy::too_many_arguments)]
fn scatter_modes(
    modes: &ModeBuf,
    channels: usize,
    b: usize,
    pixels: usize,
    lins: &[usize],
    ws: &mut SpectralWorkspace,
    out_fields: &mut [Vec<f64>],
    scale: f64,
    conjugate: bool,
    accumulate: bool,
) {
    let n_modes = lins.len();
    let h = ws.plan_h.len();
    let w = ws.plan_w.len();
    // [k][c][b] -> [c*b][k]
    transpose(&modes.re, &mut ws.staged.re, n_modes, channels * b);
    transpose(&modes.im, &mut ws.staged.im, n_modes, channels * b);
    for s in 0..b {
        for c in 0..channels {
            ws.field_re.iter_mut().for_each(|v| *v = 0.0);
            ws.field_im.iter_mut().for_each(|v| *v = 0.0);
            let row = (c * b + s) * n_modes;
            if conjugate {
                for (kx, &lin) in lins.iter().enumerate() {
                    ws.field_re[lin] = ws.staged.re[row + kx];
                    ws.field_im[lin] = -ws.staged.im[row + kx];
                }
            } else {
                for (kx, &lin) in lins.iter().enumerate() {
                    ws.field_re[lin] = ws.staged.re[row + kx];
                    ws.field_im[lin] = ws.staged.im[row + kx];
                }
            }
            fft2_split(
                &mut ws.field_re,
                &mut ws.field_im,
                h,
                w,
                &ws.plan_h,
                &ws.plan_w,
                &mut ws.scratch,
                !conjugate,
            );
            let dst = &mut out_fields[s][c * pixels..(c + 1) * pixels];
            if accumulate {
                axpy(dst, &ws.field_re, scale);
            } else {
                for (d, &r) in dst.iter_mut().zip(ws.field_re.iter()) {
                    *d = r * scale;
                }
            }
        }
    }
}

pub(super) fn forward_batch(
    model: &FnoModel,
    inputs: &[Vec<f64>],
    h: usize,
    w: usize,
    want_tape: bool,
) -> Result<(Vec<Vec<f64>>, Option<BatchTape>)> {
    let cfg = &model.config;
    cfg.check_resolution(h, w)?;
    let pixels = h * w;
    let b = inputs.len();
    if b == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for input in inputs {
        if input.len() != cfg.in_channels * pixels {
            return Err(Error::ShapeMismatch {
                left: vec![cfg.in_channels, h, w],
                right: vec![input.len()],
            });
        }
    }
    let dv = cfg.width;
    let lift_in = cfg.lift_in();
    let n_modes = cfg.n_modes();
    let lins = if n_modes > 0 {
        mode_lins(h, w, cfg.modes1, cfg.modes2)?
    } else {
        Vec::new()
    };
    let mut ws = SpectralWorkspace::new(h, w, dv, b, n_modes.max(1))?;

    // input channels plus normalized coordinates
    let mut input_full = Vec::with_capacity(b);
    for input in inputs {
        let mut full = Vec::with_capacity(lift_in * pixels);
        full.extend_from_slice(input);
        if cfg.append_coords {
            for x in 0..h {
                let cx = x as f64 / h as f64;
                full.extend(std::iter::repeat(cx).take(w));
            }
            for _ in 0..h {
                for y in 0..w {
                    full.push(y as f64 / w as f64);
                }
            }
        }
        input_full.push(full);
    }

    let lift_w = &model.blocks[super::LIFT_W];
    let lift_b = &model.blocks[super::LIFT_B];
    let mut act: Vec<Vec<f64>> = input_full
        .iter()
        .map(|full| {
            let mut v = vec![0.0; dv * pixels];
            pointwise_linear(&lift_w.data, &lift_b.data, full, dv, lift_in, pixels, &mut v);
            v
        })
        .collect();

    // activations move into the tape at each layer boundary; nothing is
    // cloned on the hot path
    let mut tape_activations = Vec::new();
    let mut tape_vkept = Vec::new();
    let mut tape_z = Vec::new();
    let mut tape_zt = Vec::new();

    let mut spec_out: Vec<Vec<f64>> = vec![vec![0.0; dv * pixels]; b];
    let mut mk = ModeBuf::zeros(n_modes * dv * b);
    for l in 0..cfg.layers {
        let r_re = model.layer_block(l, L_RRE);
        let r_im = model.layer_block(l, L_RIM);
        let local_w = model.layer_block(l, L_W);
        let local_b = model.layer_block(l, L_B);

        let mut vk = ModeBuf::zeros(n_modes * dv * b);
        if n_modes > 0 {
            gather_modes(&act, dv, b, pixels, &lins, &mut ws, &mut vk, 1.0);
            mode_matmul(&r_re.data, &r_im.data, &vk, &mut mk, n_modes, dv, dv, b);
            scatter_modes(
                &mk,
                dv,
                b,
                pixels,
                &lins,
                &mut ws,
                &mut spec_out,
                1.0 / pixels as f64,
                false,
                false,
            );
        } else {
            for f in &mut spec_out {
                f.iter_mut().for_each(|v| *v = 0.0);
            }
        }

        let mut z: Vec<Vec<f64>> = Vec::with_capacity(b);
        let mut zt: Vec<Vec<f64>> = Vec::with_capacity(b);
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(b);
        for s in 0..b {
            let mut local = vec![0.0; dv * pixels];
            pointwise_linear(
                &local_w.data,
                &local_b.data,
                &act[s],
                dv,
                dv,
                pixels,
                &mut local,
            );
            axpy(&mut local, &spec_out[s], 1.0);
            let mut t = vec![0.0; dv * pixels];
            let mut out = vec![0.0; dv * pixels];
            for (j, zv) in local.iter().enumerate() {
                let (g, tv) = gelu_with_tanh(*zv);
                out[j] = g;
                t[j] = tv;
            }
            z.push(local);
            zt.push(t);
            next.push(out);
        }
        let prev = std::mem::replace(&mut act, next);
        if want_tape {
            tape_activations.push(prev);
            tape_vkept.push(vk);
            tape_z.push(z);
            tape_zt.push(zt);
        }
    }

    // projection head: dv -> 4 dv -> out, gelu between, nothing after
    let hidden = cfg.proj_hidden();
    let p1w = model.proj_block(0);
    let p1b = model.proj_block(1);
    let p2w = model.proj_block(2);
    let p2b = model.proj_block(3);
    let mut outputs = Vec::with_capacity(b);
    let mut tape_q1 = Vec::new();
    let mut tape_q1t = Vec::new();
    for a in &act {
        let mut q1 = vec![0.0; hidden * pixels];
        pointwise_linear(&p1w.data, &p1b.data, a, hidden, dv, pixels, &mut q1);
        let mut g1 = vec![0.0; hidden * pixels];
        let mut t1 = vec![0.0; hidden * pixels];
        for (j, q) in q1.iter().enumerate() {
            let (g, t) = gelu_with_tanh(*q);
            g1[j] = g;
            t1[j] = t;
        }
        let mut out = vec![0.0; cfg.out_channels * pixels];
        pointwise_linear(
            &p2w.data,
            &p2b.data,
            &g1,
            cfg.out_channels,
            hidden,
            pixels,
            &mut out,
        );
        outputs.push(out);
        if want_tape {
            tape_q1.push(q1);
            tape_q1t.push(t1);
        }
    }

    let tape = want_tape.then(|| {
        tape_activations.push(act);
        BatchTape {
            h,
            w,
            input_full,
            activations: tape_activations,
            vkept: tape_vkept,
            z: tape_z,
            zt: tape_zt,
            q1: tape_q1,
            q1t: tape_q1t,
        }
    });
    Ok((outputs, tape))
}

pub(super) fn backward_batch(model: &FnoModel, tape: BatchTape, dout: &[Vec<f64>]) -> Grads {
    let pixels = tape.h * tape.w;
    let mut grads = Grads::zeros_like(model, dout.len(), pixels);
    backward_batch_into(model, tape, dout, &mut grads);
    grads
}

/// Backward pass writing into caller-owned gradient storage (the training
/// loop reuses one allocation across batches).
pub(super) fn backward_batch_into(
    model: &FnoModel,
    tape: BatchTape,
    dout: &[Vec<f64>],
    grads: &mut Grads,
) {
    let cfg = &model.config;
    let (h, w) = (tape.h, tape.w);
    let pixels = h * w;
    let b = dout.len();
    assert_eq!(b, tape.input_full.len(), "batch size mismatch with tape");
    let dv = cfg.width;
    let hidden = cfg.proj_hidden();
    let n_modes = cfg.n_modes();
    let lins = if n_modes > 0 {
        mode_lins(h, w, cfg.modes1, cfg.modes2).expect("tape came from a valid forward pass")
    } else {
        Vec::new()
    };
    let mut ws =
        SpectralWorkspace::new(h, w, dv, b, n_modes.max(1)).expect("tape grid is a power of two");
    let scratch_len = (dv * dv).max(dv * b);
    let mut adj_scratch = AdjointScratch {
        re: vec![0.0; scratch_len],
        im: vec![0.0; scratch_len],
    };
    grads.reset_small(model);

    let nb = model.blocks.len();
    let (idx_p1w, idx_p1b, idx_p2w, idx_p2b) = (nb - 4, nb - 3, nb - 2, nb - 1);

    // projection head
    let act_l = &tape.activations[cfg.layers];
    let mut d_act: Vec<Vec<f64>> = vec![vec![0.0; dv * pixels]; b];
    {
        let p1w = &model.blocks[idx_p1w].data;
        let p2w = &model.blocks[idx_p2w].data;
        let mut g1 = vec![0.0; hidden * pixels];
        let mut dq1 = vec![0.0; hidden * pixels];
        for s in 0..b {
            let q1 = &tape.q1[s];
            let q1t = &tape.q1t[s];
            for j in 0..hidden * pixels {
                g1[j] = gelu_from_tanh(q1[j], q1t[j]);
            }
            // proj2 grads and dg1 (into dq1 buffer)
            dq1.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..cfg.out_channels {
                let drow = &dout[s][o * pixels..(o + 1) * pixels];
                grads.blocks[idx_p2b][o] += sum(drow);
                for c in 0..hidden {
                    grads.blocks[idx_p2w][o * hidden + c] +=
                        dot(drow, &g1[c * pixels..(c + 1) * pixels]);
                    axpy(
                        &mut dq1[c * pixels..(c + 1) * pixels],
                        drow,
                        p2w[o * hidden + c],
                    );
                }
            }
            for j in 0..hidden * pixels {
                dq1[j] *= gelu_deriv(q1[j], q1t[j]);
            }
            // proj1 grads and d(v_L)
            for c in 0..hidden {
                let drow = &dq1[c * pixels..(c + 1) * pixels];
                grads.blocks[idx_p1b][c] += sum(drow);
                for i in 0..dv {
                    grads.blocks[idx_p1w][c * dv + i] +=
                        dot(drow, &act_l[s][i * pixels..(i + 1) * pixels]);
                    axpy(&mut d_act[s][i * pixels..(i + 1) * pixels], drow, p1w[c * dv + i]);
                }
            }
        }
    }

    // Fourier layers in reverse
    let mut dz: Vec<Vec<f64>> = vec![vec![0.0; dv * pixels]; b];
    let mut dmk = ModeBuf::zeros(n_modes * dv * b);
    let mut dvk = ModeBuf::zeros(n_modes * dv * b);
    for l in (0..cfg.layers).rev() {
        let base = super::LAYER_BASE + super::LAYER_STRIDE * l;
        let local_w = &model.blocks[base + L_W].data;
        let act_in = &tape.activations[l];
        for s in 0..b {
            let zl = &tape.z[l][s];
            let tl = &tape.zt[l][s];
            for j in 0..dv * pixels {
                dz[s][j] = d_act[s][j] * gelu_deriv(zl[j], tl[j]);
            }
            d_act[s].iter_mut().for_each(|v| *v = 0.0);
        }

        // local path: weight grads and input contribution
        for s in 0..b {
            for o in 0..dv {
                let drow = &dz[s][o * pixels..(o + 1) * pixels];
                grads.blocks[base + L_B][o] += sum(drow);
                for i in 0..dv {
                    grads.blocks[base + L_W][o * dv + i] +=
                        dot(drow, &act_in[s][i * pixels..(i + 1) * pixels]);
                    axpy(
                        &mut d_act[s][i * pixels..(i + 1) * pixels],
                        drow,
                        local_w[o * dv + i],
                    );
                }
            }
        }

        // spectral path
        if n_modes > 0 {
            let vk = &tape.vkept[l];
            gather_modes(
                &dz,
                dv,
                b,
                pixels,
                &lins,
                &mut ws,
                &mut dmk,
                1.0 / pixels as f64,
            );
            {
                let (head, tail) = grads.blocks.split_at_mut(base + L_RIM);
                mode_weight_grad(
                    &dmk,
                    vk,
                    &mut head[base + L_RRE],
                    &mut tail[0],
                    &mut adj_scratch,
                    n_modes,
                    dv,
                    dv,
                    b,
                );
            }
            mode_matmul_adjoint(
                &model.blocks[base + L_RRE].data,
                &model.blocks[base + L_RIM].data,
                &dmk,
                &mut dvk,
                &mut adj_scratch,
                n_modes,
                dv,
                dv,
                b,
            );
            // d v = Re(fft(conj(dV))), accumulated onto the local-path term
            scatter_modes(
                &dvk, dv, b, pixels, &lins, &mut ws, &mut d_act, 1.0, true, true,
            );
        }
    }

    // lift
    {
        let lift_in = cfg.lift_in();
        let lift_w = &model.blocks[super::LIFT_W].data;
        let mut dfull = vec![0.0; lift_in * pixels];
        for s in 0..b {
            dfull.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..dv {
                let drow = &d_act[s][o * pixels..(o + 1) * pixels];
                grads.blocks[super::LIFT_B][o] += sum(drow);
                for i in 0..lift_in {
                    grads.blocks[super::LIFT_W][o * lift_in + i] +=
                        dot(drow, &tape.input_full[s][i * pixels..(i + 1) * pixels]);
                    axpy(
                        &mut dfull[i * pixels..(i + 1) * pixels],
                        drow,
                        lift_w[o * lift_in + i],
                    );
                }
            }
            grads.input[s].copy_from_slice(&dfull[..cfg.in_channels * pixels]);
        }
    }
}

/// Single-sample spectral convolution for the public contract op. Accepts
/// mode counts up to Nyquist.
pub(super) fn spectral_conv_single(
    v: &Tensor,
    weights: &SpectralWeights,
    h: usize,
    w: usize,
    modes: &[(usize, usize)],
) -> Result<Tensor> {
    let pixels = h * w;
    let n_modes = modes.len();
    let lins: Vec<usize> = modes.iter().map(|&(k1, k2)| k1 * w + k2).collect();
    let mut ws = SpectralWorkspace::new(h, w, weights.c_in.max(weights.c_out), 1, n_modes)?;
    let fields = vec![v.data().to_vec()];
    let mut vk = ModeBuf::zeros(n_modes * weights.c_in);
    gather_modes(&fields, weights.c_in, 1, pixels, &lins, &mut ws, &mut vk, 1.0);
    let mut mk = ModeBuf::zeros(n_modes * weights.c_out);
    mode_matmul(
        &weights.re,
        &weights.im,
        &vk,
        &mut mk,
        n_modes,
        weights.c_out,
        weights.c_in,
        1,
    );
    let mut out_fields = vec![vec![0.0; weights.c_out * pixels]];
    scatter_modes(
        &mk,
        weights.c_out,
        1,
        pixels,
        &lins,
        &mut ws,
        &mut out_fields,
        1.0 / pixels as f64,
        false,
        false,
    );
    Tensor::from_vec(
        &[weights.c_out, h, w],
        out_fields.into_iter().next().expect("one field"),
    )
}

#[cfg(test)]
mod bench {
    use super::*;
    use crate::fno::FnoConfig;
    use std::time::Instant;

    #[test]
    #[ignore]
    fn internal_phase_timings() {
        let cfg = FnoConfig {
            in_channels: 2,
            out_channels: 2,
            width: 32,
            layers: 4,
            modes1: 12,
            modes2: 12,
            append_coords: true,
        };
        let model = crate::fno::FnoModel::init(cfg.clone(), 1).unwrap();
        let (h, w, b) = (32usize, 32usize, 16usize);
        let pixels = h * w;
        let dv = cfg.width;
        let n_modes = cfg.n_modes();
        let lins = mode_lins(h, w, cfg.modes1, cfg.modes2).unwrap();
        let mut ws = SpectralWorkspace::new(h, w, dv, b, n_modes).unwrap();
        let act: Vec<Vec<f64>> = (0..b)
            .map(|s| (0..dv * pixels).map(|i| ((i + s) as f64 * 0.01).sin()).collect())
            .collect();
        let mut vk = ModeBuf::zeros(n_modes * dv * b);
        let mut mk = ModeBuf::zeros(n_modes * dv * b);
        let mut spec_out = vec![vec![0.0; dv * pixels]; b];
        let r_re = &model.layer_block(0, L_RRE).data;
        let r_im = &model.layer_block(0, L_RIM).data;
        let reps = 40;

        let t0 = Instant::now();
        for _ in 0..reps {
            gather_modes(&act, dv, b, pixels, &lins, &mut ws, &mut vk, 1.0);
        }
        let t_gather = t0.elapsed().as_secs_f64() / reps as f64;

        let t0 = Instant::now();
        for _ in 0..reps {
            mode_matmul(r_re, r_im, &vk, &mut mk, n_modes, dv, dv, b);
        }
        let t_matmul = t0.elapsed().as_secs_f64() / reps as f64;

        let mut scratch = AdjointScratch {
            re: vec![0.0; dv * dv],
            im: vec![0.0; dv * dv],
        };
        let t0 = Instant::now();
        for _ in 0..reps {
            mode_matmul_adjoint(r_re, r_im, &mk, &mut vk, &mut scratch, n_modes, dv, dv, b);
        }
        let t_adj = t0.elapsed().as_secs_f64() / reps as f64;

        let mut g_re = vec![0.0; n_modes * dv * dv];
        let mut g_im = vec![0.0; n_modes * dv * dv];
        let t0 = Instant::now();
        for _ in 0..reps {
            mode_weight_grad(&mk, &vk, &mut g_re, &mut g_im, &mut scratch, n_modes, dv, dv, b);
        }
        let t_wgrad = t0.elapsed().as_secs_f64() / reps as f64;

        let t0 = Instant::now();
        for _ in 0..reps {
            scatter_modes(
                &mk, dv, b, pixels, &lins, &mut ws, &mut spec_out, 1.0, false, false,
            );
        }
        let t_scatter = t0.elapsed().as_secs_f64() / reps as f64;

        let local_w = &model.layer_block(0, L_W).data;
        let local_b = &model.layer_block(0, L_B).data;
        let mut loc = vec![0.0; dv * pixels];
        let t0 = Instant::now();
        for _ in 0..reps {
            for s in 0..b {
                pointwise_linear(local_w, local_b, &act[s], dv, dv, pixels, &mut loc);
            }
        }
        let t_local = t0.elapsed().as_secs_f64() / reps as f64;

        let mut tv = vec![0.0; dv * pixels];
        let t0 = Instant::now();
        for _ in 0..reps {
            for s in 0..b {
                for (j, x) in act[s].iter().enumerate() {
                    let (g, t) = gelu_with_tanh(*x);
                    loc[j] = g;
                    tv[j] = t;
                }
            }
        }
        let t_gelu = t0.elapsed().as_secs_f64() / reps as f64;

        // per batch per layer (milliseconds)
        println!("gather (fft+pick)  {:7.2} ms", t_gather * 1e3);
        println!("mode matmul        {:7.2} ms", t_matmul * 1e3);
        println!("mode adjoint       {:7.2} ms", t_adj * 1e3);
        println!("mode weight grad   {:7.2} ms", t_wgrad * 1e3);
        println!("scatter (fft+put)  {:7.2} ms", t_scatter * 1e3);
        println!("local pointwise    {:7.2} ms", t_local * 1e3);
        println!("gelu pass          {:7.2} ms", t_gelu * 1e3);
    }
}
