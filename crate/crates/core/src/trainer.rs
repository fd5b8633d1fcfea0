//! Adam training loop with relative-L2 loss, stepped learning-rate decay,
//! seeded shuffling and bit-exact checkpoint persistence.
//!
//! Determinism contract: (seed, data, config) fully determine the checkpoint
//! bytes and the loss log. Shuffling draws a fresh stream per epoch from the
//! run seed and the absolute epoch number, so a resumed run replays exactly
//! the schedule of an uninterrupted one.

use crate::binio::{parse_metadata, render_metadata, LeReader};
use crate::error::{Error, Result};
use crate::fno::{FnoConfig, FnoModel, Grads};
use crate::seed::{rng_for, stream};
use rand::Rng;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    /// Decay the learning rate every this many epochs (0 disables decay).
    pub lr_decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm clip threshold; 0 turns clipping off.
    pub grad_clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            lr: 1e-3,
            lr_decay_factor: 0.5,
            lr_decay_every: 50,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            grad_clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("lr must be > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must be in (0, 1)")));
            }
        }
        Ok(())
    }

    /// Learning rate at 0-based epoch `e`: `lr * decay^floor(e / every)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.lr_decay_every == 0 {
            return self.lr;
        }
        self.lr
            * self
                .lr_decay_factor
                .powi((epoch / self.lr_decay_every) as i32)
    }
}

/// Training pairs on one grid; inputs/targets channel-major per sample.
pub struct TrainData {
    pub h: usize,
    pub w: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// loss

/// Mean over the batch of ||pred - target|| / ||target|| (norm over all
/// channels and grid points; complex pairs count as two reals).
pub fn relative_l2_loss(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (idx, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.len() != t.len() {
            return Err(Error::ShapeMismatch {
                left: vec![p.len()],
                right: vec![t.len()],
            });
        }
        let tn = norm(t);
        if tn == 0.0 {
            return Err(Error::ZeroNormTarget { sample: idx });
        }
        total += diff_norm(p, t) / tn;
    }
    Ok(total / preds.len() as f64)
}

/// Gradient of [`relative_l2_loss`] with respect to the predictions.
pub fn relative_l2_grad(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let b = preds.len() as f64;
    preds
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(idx, (p, t))| {
            let tn = norm(t);
            if tn == 0.0 {
                return Err(Error::ZeroNormTarget { sample: idx });
            }
            let dn = diff_norm(p, t);
            if dn == 0.0 {
                return Ok(vec![0.0; p.len()]);
            }
            let scale = 1.0 / (b * dn * tn);
            Ok(p.iter().zip(t).map(|(x, y)| (x - y) * scale).collect())
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------------
// Adam

/// First/second moment estimates plus the step counter, one pair of tensors
/// per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &FnoModel) -> AdamState {
        AdamState {
            m: model.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            v: model.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }
}

/// Clip gradients to a global norm, then apply one bias-corrected Adam step
/// at learning rate `lr`.
pub fn adam_step(
    model: &mut FnoModel,
    grads: &Grads,
    state: &mut AdamState,
    config: &TrainConfig,
    lr: f64,
) -> Result<()> {
    for (block, g) in model.blocks.iter().zip(&grads.blocks) {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient {
                block: block.name.clone(),
            });
        }
    }
    let mut clip_scale = 1.0;
    if config.grad_clip_norm > 0.0 {
        let sq: f64 = grads
            .blocks
            .iter()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum();
        let gn = sq.sqrt();
        if gn > config.grad_clip_norm {
            clip_scale = config.grad_clip_norm / gn;
        }
    }
    state.step += 1;
    let t = state.step as i32;
    // theta -= lr * (m/bc1) / (sqrt(v/bc2) + eps)
    //        = (lr/bc1) * m / (sqrt(v)*sqrt(1/bc2) + eps), hoisting the
    // bias corrections out of the per-parameter loop
    let lr_c = lr / (1.0 - config.beta1.powi(t));
    let inv_sqrt_bc2 = 1.0 / (1.0 - config.beta2.powi(t)).sqrt();
    let (b1, b2) = (config.beta1, config.beta2);
    let (c1, c2) = (1.0 - b1, 1.0 - b2);
    let eps = config.epsilon;
    for (bi, block) in model.blocks.iter_mut().enumerate() {
        let n = block.data.len();
        let m = &mut state.m[bi][..n];
        let v = &mut state.v[bi][..n];
        let g = &grads.blocks[bi][..n];
        let theta = &mut block.data[..n];
        for j in 0..n {
            let gj = g[j] * clip_scale;
            let mj = b1 * m[j] + c1 * gj;
            let vj = b2 * v[j] + c2 * gj * gj;
            m[j] = mj;
            v[j] = vj;
            theta[j] -= lr_c * mj / (vj.sqrt() * inv_sqrt_bc2 + eps);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// training loop

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    /// Present every 10 epochs and on the final epoch.
    pub test_loss: Option<f64>,
}

pub struct TrainOutcome {
    pub model: FnoModel,
    pub adam: AdamState,
    pub log: Vec<EpochLog>,
    /// 1-based epoch the run stopped after.
    pub epoch: usize,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
}

/// Run `config.epochs` additional epochs from `start_epoch` (0 for a fresh
/// model, or the epoch counter of a loaded checkpoint). Epoch numbering,
/// shuffling and the LR schedule depend only on the absolute epoch index,
/// so a resumed run reproduces an uninterrupted one bit for bit.
pub fn train(
    mut model: FnoModel,
    mut adam: AdamState,
    start_epoch: usize,
    train_data: &TrainData,
    test_data: &TrainData,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_data.inputs.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let n = train_data.inputs.len();
    let (h, w) = (train_data.h, train_data.w);
    let pixels = h * w;
    let mut grads = Grads::zeros_like(&model, config.batch_size, pixels);
    let mut log = Vec::with_capacity(config.epochs);
    let mut final_test = f64::NAN;

    for e in start_epoch..start_epoch + config.epochs {
        let lr = config.lr_at(e);
        // seeded Fisher-Yates over sample indices, fresh stream per epoch
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng_for(config.seed, stream::SHUFFLE, e as u64);
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let inputs: Vec<Vec<f64>> =
                chunk.iter().map(|&i| train_data.inputs[i].clone()).collect();
            let targets: Vec<Vec<f64>> =
                chunk.iter().map(|&i| train_data.targets[i].clone()).collect();
            let (preds, tape) = model.forward_tape(&inputs, h, w)?;
            let loss = relative_l2_loss(&preds, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss {
                    epoch: e + 1,
                    batch: batch_idx,
                });
            }
            let dout = relative_l2_grad(&preds, &targets)?;
            model.backward_into(tape, &dout, &mut grads);
            adam_step(&mut model, &grads, &mut adam, config, lr)?;
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;

        // strictly every 10 epochs: the log of a resumed run must match an
        // uninterrupted one, so the schedule cannot depend on where a run ends
        let test_loss = if (e + 1) % 10 == 0 {
            let t = evaluate_loss(&model, test_data)?;
            final_test = t;
            Some(t)
        } else {
            None
        };
        let entry = EpochLog {
            epoch: e + 1,
            train_loss,
            test_loss,
        };
        progress(&entry);
        log.push(entry);
    }

    // final test loss for the checkpoint metadata (outside the log schedule)
    if log.last().map(|l| l.test_loss.is_none()).unwrap_or(false) {
        final_test = evaluate_loss(&model, test_data)?;
    }
    let final_train = log.last().map(|l| l.train_loss).unwrap_or(f64::NAN);
    Ok(TrainOutcome {
        model,
        adam,
        log,
        epoch: start_epoch + config.epochs,
        final_train_loss: final_train,
        final_test_loss: final_test,
    })
}

/// Mean relative-L2 loss of a model over a dataset.
pub fn evaluate_loss(model: &FnoModel, data: &TrainData) -> Result<f64> {
    if data.inputs.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let mut total = 0.0;
    for (idx, (input, target)) in data.inputs.iter().zip(&data.targets).enumerate() {
        let batch = std::slice::from_ref(input);
        let preds = model.forward_fields(batch, data.h, data.w)?;
        let tn = norm(target);
        if tn == 0.0 {
            return Err(Error::ZeroNormTarget { sample: idx });
        }
        total += diff_norm(&preds[0], target) / tn;
    }
    Ok(total / data.inputs.len() as f64)
}

// ---------------------------------------------------------------------------
// checkpoint format
//
// Little-endian. Layout:
//   magic "FNOCKPT1" (8 bytes)
//   u32 version (= 1)
//   u32 metadata byte length, then UTF-8 "key=value\n" lines
//   u32 parameter block count, then per block:
//     u32 name length, name bytes, u32 rank, u64 extents..., f64 payload
// Model blocks come first in canonical order, then adam.m.*, then adam.v.*.

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FNOCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: FnoConfig,
    pub model: FnoModel,
    pub adam: AdamState,
    /// Sorted key=value metadata, including training provenance.
    pub metadata: Vec<(String, String)>,
}

impl Checkpoint {
    /// Assemble a checkpoint; model-derived keys are added automatically.
    pub fn new(model: FnoModel, adam: AdamState, mut extra: Vec<(String, String)>) -> Checkpoint {
        let cfg = &model.config;
        let mut metadata = vec![
            ("fno.in_channels".into(), cfg.in_channels.to_string()),
            ("fno.out_channels".into(), cfg.out_channels.to_string()),
            ("fno.width".into(), cfg.width.to_string()),
            ("fno.layers".into(), cfg.layers.to_string()),
            ("fno.modes1".into(), cfg.modes1.to_string()),
            ("fno.modes2".into(), cfg.modes2.to_string()),
            ("fno.append_coords".into(), cfg.append_coords.to_string()),
            (
                "fft.convention".into(),
                "unnormalized-forward;inverse-1/(HW)".into(),
            ),
            ("adam.step".into(), adam.step.to_string()),
        ];
        metadata.append(&mut extra);
        metadata.sort();
        metadata.dedup_by(|a, b| a.0 == b.0);
        Checkpoint {
            config: model.config.clone(),
            model,
            adam,
            metadata,
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn epoch(&self) -> usize {
        self.meta("train.epoch")
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    }
}

fn write_block(
    out: &mut impl Write,
    name: &str,
    shape: &[usize],
    data: &[f64],
) -> std::io::Result<()> {
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &e in shape {
        out.write_all(&(e as u64).to_le_bytes())?;
    }
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let meta = render_metadata(&ckpt.metadata);
        out.write_all(&(meta.len() as u32).to_le_bytes())?;
        out.write_all(meta.as_bytes())?;

        let count = ckpt.model.blocks.len() * 3;
        out.write_all(&(count as u32).to_le_bytes())?;
        for block in &ckpt.model.blocks {
            write_block(&mut out, &block.name, &block.shape, &block.data)?;
        }
        for (block, m) in ckpt.model.blocks.iter().zip(&ckpt.adam.m) {
            write_block(&mut out, &format!("adam.m.{}", block.name), &block.shape, m)?;
        }
        for (block, v) in ckpt.model.blocks.iter().zip(&ckpt.adam.v) {
            write_block(&mut out, &format!("adam.v.{}", block.name), &block.shape, v)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = LeReader::new(BufReader::new(file));
    let mut magic = [0u8; 8];
    r.exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta_text = r.string(meta_len, "metadata")?;
    let metadata = parse_metadata(&meta_text)?;
    let meta = |key: &str| -> Result<&str> {
        metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("missing metadata key {key}")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        meta(key)?
            .parse()
            .map_err(|_| Error::Format(format!("bad integer for {key}")))
    };
    let config = FnoConfig {
        in_channels: parse_usize("fno.in_channels")?,
        out_channels: parse_usize("fno.out_channels")?,
        width: parse_usize("fno.width")?,
        layers: parse_usize("fno.layers")?,
        modes1: parse_usize("fno.modes1")?,
        modes2: parse_usize("fno.modes2")?,
        append_coords: meta("fno.append_coords")? == "true",
    };
    let adam_step: u64 = meta("adam.step")?
        .parse()
        .map_err(|_| Error::Format("bad adam.step".into()))?;

    let count = r.u32("block count")? as usize;
    let mut blocks = Vec::new();
    for _ in 0..count {
        let name_len = r.u32("block name length")? as usize;
        let name = r.string(name_len, "block name")?;
        let rank = r.u32("block rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("block extent")? as usize);
        }
        let len: usize = shape.iter().product();
        let data = r.f64_vec(len, "block payload")?;
        blocks.push(crate::fno::ParamBlock { name, shape, data });
    }

    let mut model = FnoModel::zeros(config.clone())?;
    let n = model.blocks.len();
    if blocks.len() != 3 * n {
        return Err(Error::Format(format!(
            "expected {} parameter blocks, found {}",
            3 * n,
            blocks.len()
        )));
    }
    let mut adam = AdamState::new(&model);
    adam.step = adam_step;
    for (i, loaded) in blocks.into_iter().enumerate() {
        let slot = i % n;
        let expect = &model.blocks[slot];
        let want_name = match i / n {
            0 => expect.name.clone(),
            1 => format!("adam.m.{}", expect.name),
            _ => format!("adam.v.{}", expect.name),
        };
        if loaded.name != want_name || loaded.shape != expect.shape {
            return Err(Error::Format(format!(
                "block {i}: expected {want_name} {:?}, found {} {:?}",
                expect.shape, loaded.name, loaded.shape
            )));
        }
        match i / n {
            0 => model.blocks[slot].data = loaded.data,
            1 => adam.m[slot] = loaded.data,
            _ => adam.v[slot] = loaded.data,
        }
    }
    Ok(Checkpoint {
        config,
        model,
        adam,
        metadata,
    })
}

/// Render the loss log as the `epoch,train_loss,test_loss` CSV.
pub fn loss_log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,test_loss\n");
    for entry in log {
        let test = entry.test_loss.map(|t| t.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{}\n", entry.epoch, entry.train_loss, test));
    }
    s
}
