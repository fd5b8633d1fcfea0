//! Physics ground truth.
//!
//! (A) Holographic aperture: the scalar Helmholtz Green's function radiates
//! a current distribution J on the z=0 aperture to the field E on a parallel
//! receive window. [`radiate`] is the O(S^4) brute-force quadrature — it IS
//! the ground truth the operator surrogate learns.
//!
//! (B) Flexible metasurface: far-field multipath channels whose per-element
//! phase depends on the surface deformation, with a pre-defined library of
//! sinusoidal pilot shapes and seeded measurement noise.
//!
//! Both dataset kinds serialize to the `FNODAT1\0` little-endian container.
//! All quantities are SI. Source points sit at quadrature cell centers
//! ((i+0.5)*pitch), which makes the uniform-weight radiation sum a midpoint
//! rule with second-order convergence; receive points are corner-anchored
//! (i*pitch), so a doubled receive grid contains the coarse points exactly.

use crate::binio::{parse_metadata, render_metadata, write_f64s, LeReader};
use crate::error::{Error, Result};
use crate::fft::{fft2, ifft2, Spectrum2D};
use crate::seed::{rng_for, rng_root, stream};
use crate::tensor::{ComplexView, Tensor};
use crate::threads::par_map_indexed;
use crate::trainer::TrainData;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

// ---------------------------------------------------------------------------
// holographic geometry and oracle

#[derive(Debug, Clone, PartialEq)]
pub struct HoloGeometry {
    /// Wavelength in meters.
    pub wavelength: f64,
    /// Transmit aperture side, in wavelengths, on the z = 0 plane.
    pub aperture_wl: f64,
    /// Receive window side, in wavelengths, on the z = z0 plane.
    pub receive_wl: f64,
    /// Receive plane offset, in wavelengths.
    pub z0_wl: f64,
    /// Grid size per axis (power of two) for both planes.
    pub grid: usize,
}

impl Default for HoloGeometry {
    fn default() -> Self {
        HoloGeometry {
            wavelength: 1.0,
            aperture_wl: 4.0,
            receive_wl: 8.0,
            z0_wl: 4.0,
            grid: 32,
        }
    }
}

impl HoloGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(Error::InvalidArgument("wavelength must be > 0".into()));
        }
        if !(self.z0_wl > 0.0) {
            return Err(Error::InvalidArgument("z0 must be > 0".into()));
        }
        if !self.grid.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { extent: self.grid });
        }
        if !(self.aperture_wl > 0.0) || !(self.receive_wl > 0.0) {
            return Err(Error::InvalidArgument("plane sides must be > 0".into()));
        }
        Ok(())
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Aperture pitch (quadrature cell side), meters.
    pub fn pitch(&self) -> f64 {
        self.aperture_wl * self.wavelength / self.grid as f64
    }

    pub fn receive_pitch(&self) -> f64 {
        self.receive_wl * self.wavelength / self.grid as f64
    }

    pub fn z0(&self) -> f64 {
        self.z0_wl * self.wavelength
    }

    /// Quadrature cell center on the aperture.
    pub fn aperture_point(&self, i: usize, j: usize) -> [f64; 3] {
        let d = self.pitch();
        [(i as f64 + 0.5) * d, (j as f64 + 0.5) * d, 0.0]
    }

    /// Receive grid point. The window is centered over the aperture and
    /// corner-anchored in its own frame, so doubling the grid keeps the
    /// coarse points.
    pub fn receive_point(&self, i: usize, j: usize) -> [f64; 3] {
        let d = self.receive_pitch();
        let origin = (self.aperture_wl - self.receive_wl) * self.wavelength / 2.0;
        [origin + i as f64 * d, origin + j as f64 * d, self.z0()]
    }

    /// Same physical planes sampled at double the resolution.
    pub fn refined(&self) -> HoloGeometry {
        HoloGeometry {
            grid: self.grid * 2,
            ..self.clone()
        }
    }
}

/// Free-space scalar Helmholtz kernel `exp(i k0 d) / (4 pi d)`.
pub fn green(r: [f64; 3], s: [f64; 3], k0: f64) -> Result<Complex64> {
    let dx = r[0] - s[0];
    let dy = r[1] - s[1];
    let dz = r[2] - s[2];
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    if d == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let amp = 1.0 / (4.0 * std::f64::consts::PI * d);
    let phase = k0 * d;
    Ok(Complex64::new(amp * phase.cos(), amp * phase.sin()))
}

/// Brute-force aperture integral: `E[r] = dA * sum_s green(r, s) J[s]`,
/// summed in ascending source index order. O(S^4); this is the oracle.
pub fn radiate(current: &ComplexView, geom: &HoloGeometry) -> Result<ComplexView> {
    geom.validate()?;
    let s_n = geom.grid;
    if current.logical_shape() != [s_n, s_n] {
        return Err(Error::ShapeMismatch {
            left: vec![s_n, s_n, 2],
            right: current.tensor().shape().to_vec(),
        });
    }
    let k0 = geom.k0();
    let cell = geom.pitch() * geom.pitch();
    let mut pairs = vec![0.0; s_n * s_n * 2];
    for ri in 0..s_n {
        for rj in 0..s_n {
            let r = geom.receive_point(ri, rj);
            let mut acc = Complex64::default();
            for si in 0..s_n {
                for sj in 0..s_n {
                    let lin = si * s_n + sj;
                    let j = Complex64::new(current.re(lin), current.im(lin));
                    let g = green(r, geom.aperture_point(si, sj), k0)
                        .expect("separated planes cannot coincide");
                    acc += g * j;
                }
            }
            acc *= cell;
            let out = ri * s_n + rj;
            pairs[2 * out] = acc.re;
            pairs[2 * out + 1] = acc.im;
        }
    }
    ComplexView::from_pairs(&[s_n, s_n], pairs)
}

/// Band-limited complex Gaussian random field, unit RMS: white noise,
/// forward FFT, zero every mode with `min(k, S-k) >= cutoff` per axis,
/// inverse FFT, normalize. The cutoff is in cycles per aperture, so the
/// same cutoff at a finer grid samples the same function class.
pub fn sample_grf(grid: usize, cutoff: usize, seed: u64) -> Result<ComplexView> {
    if !grid.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { extent: grid });
    }
    if cutoff == 0 || cutoff >= grid / 2 {
        return Err(Error::ModeRange {
            m: cutoff,
            extent: grid,
        });
    }
    let mut rng = rng_for(seed, stream::HOLO_SAMPLE, 0);
    let mut pairs = Vec::with_capacity(grid * grid * 2);
    for _ in 0..grid * grid {
        pairs.push(rng.sample::<f64, _>(StandardNormal));
        pairs.push(rng.sample::<f64, _>(StandardNormal));
    }
    let field = ComplexView::from_pairs(&[grid, grid], pairs)?;
    let spec = fft2(&field)?;
    let mut spec_pairs = spec.view().data().to_vec();
    let keep = |k: usize| k.min(grid - k) < cutoff;
    for k1 in 0..grid {
        for k2 in 0..grid {
            if !(keep(k1) && keep(k2)) {
                let lin = k1 * grid + k2;
                spec_pairs[2 * lin] = 0.0;
                spec_pairs[2 * lin + 1] = 0.0;
            }
        }
    }
    let filtered = ifft2(&Spectrum2D::from_view(ComplexView::from_pairs(
        &[grid, grid],
        spec_pairs,
    )?))?;
    let rms = filtered.rms();
    let normalized = filtered.tensor().scale(1.0 / rms);
    ComplexView::new(normalized)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoloSample {
    /// Current distribution J on the aperture, unit RMS.
    pub current: ComplexView,
    /// Field E on the receive window.
    pub field: ComplexView,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoloDataset {
    pub geometry: HoloGeometry,
    /// Band limit of the current functions, cycles per aperture.
    pub cutoff: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Train samples first, then test samples.
    pub samples: Vec<HoloSample>,
}

/// Generate train+test samples; per-sample randomness derives from
/// `seed ^ index`, so generation is order- and thread-independent.
pub fn gen_holo_dataset(
    geom: &HoloGeometry,
    n_train: usize,
    n_test: usize,
    cutoff: usize,
    seed: u64,
) -> Result<HoloDataset> {
    geom.validate()?;
    if n_train + n_test == 0 {
        return Err(Error::InvalidArgument("empty dataset requested".into()));
    }
    let total = n_train + n_test;
    let samples: Vec<Result<HoloSample>> = par_map_indexed(total, |idx| {
        let current = sample_grf(geom.grid, cutoff, seed ^ idx as u64)?;
        let field = radiate(&current, geom)?;
        Ok(HoloSample { current, field })
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(HoloDataset {
        geometry: geom.clone(),
        cutoff,
        seed,
        n_train,
        n_test,
        samples,
    })
}

// ---------------------------------------------------------------------------
// flexible metasurface (FIM)

/// Element grid is fixed at 16x16 with half-wavelength spacing.
pub const FIM_GRID: usize = 16;
pub const FIM_SPACING_WL: f64 = 0.5;

/// One sinusoidal surface pattern `a sin(2 pi (u x + v y) + phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceParams {
    pub amplitude: f64,
    pub u: f64,
    pub v: f64,
    pub phase: f64,
}

impl SurfaceParams {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.amplitude
            * (2.0 * std::f64::consts::PI * (self.u * x + self.v * y) + self.phase).sin()
    }
}

/// Deformation family: amplitude 0.1..0.5 wavelengths, 0.25..1.5 cycles
/// across the array span, uniform orientation and phase.
fn sample_surface_params<R: Rng>(rng: &mut R, wavelength: f64) -> SurfaceParams {
    let span = FIM_GRID as f64 * FIM_SPACING_WL * wavelength;
    let amplitude = rng.gen_range(0.1..0.5) * wavelength;
    let cycles = rng.gen_range(0.25..1.5);
    let theta = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    SurfaceParams {
        amplitude,
        u: cycles * theta.cos() / span,
        v: cycles * theta.sin() / span,
        phase,
    }
}

/// Element x/y position (meters), centered on the array.
pub fn fim_element_position(i: usize, j: usize, wavelength: f64) -> (f64, f64) {
    let d = FIM_SPACING_WL * wavelength;
    let c = (FIM_GRID as f64 - 1.0) / 2.0;
    ((i as f64 - c) * d, (j as f64 - c) * d)
}

/// Sample a deformation map on the element grid.
pub fn surface_to_deformation(params: &SurfaceParams, wavelength: f64) -> Tensor {
    Tensor::from_fn(&[FIM_GRID, FIM_GRID], |idx| {
        let (x, y) = fim_element_position(idx[0], idx[1], wavelength);
        params.eval(x, y)
    })
}

/// Far-field multipath channel of a deformed surface:
/// `h_n = sum_l alpha_l exp(i k0 (d_l . p_n))` with `p_n = (x_n, y_n, zeta_n)`.
pub fn fim_channel(
    gains: &[Complex64],
    directions: &[[f64; 3]],
    deformation: &Tensor,
    wavelength: f64,
) -> Result<ComplexView> {
    if gains.len() != directions.len() {
        return Err(Error::ShapeMismatch {
            left: vec![gains.len()],
            right: vec![directions.len()],
        });
    }
    if deformation.shape() != [FIM_GRID, FIM_GRID] {
        return Err(Error::ShapeMismatch {
            left: vec![FIM_GRID, FIM_GRID],
            right: deformation.shape().to_vec(),
        });
    }
    let k0 = 2.0 * std::f64::consts::PI / wavelength;
    let mut pairs = Vec::with_capacity(FIM_GRID * FIM_GRID * 2);
    for i in 0..FIM_GRID {
        for j in 0..FIM_GRID {
            let (x, y) = fim_element_position(i, j, wavelength);
            let z = deformation.get(&[i, j]);
            let mut acc = Complex64::default();
            for (a, d) in gains.iter().zip(directions) {
                let phase = k0 * (d[0] * x + d[1] * y + d[2] * z);
                acc += a * Complex64::new(phase.cos(), phase.sin());
            }
            pairs.push(acc.re);
            pairs.push(acc.im);
        }
    }
    ComplexView::from_pairs(&[FIM_GRID, FIM_GRID], pairs)
}

/// One propagation environment with its pilot measurements and target.
#[derive(Debug, Clone, PartialEq)]
pub struct FimScenario {
    pub gains: Vec<Complex64>,
    pub directions: Vec<[f64; 3]>,
    /// Noiseless pilot channels h(zeta_m), one per library shape.
    pub pilot_channels: Vec<ComplexView>,
    /// Noisy measurements at this scenario's SNR.
    pub measurements: Vec<ComplexView>,
    pub target_deformation: Tensor,
    /// Ground-truth h(zeta_target), noiseless.
    pub target_channel: ComplexView,
    /// Per-scenario SNR in dB; infinite means noise-free.
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimDataset {
    pub wavelength: f64,
    /// Pre-defined pilot deformations, shared across scenarios.
    pub pilots: Vec<Tensor>,
    pub paths: usize,
    pub seed: u64,
    pub pilot_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// "x" for a fixed SNR or "lo:hi" for per-scenario uniform draws;
    /// "inf" disables noise.
    pub snr_spec: String,
    pub scenarios: Vec<FimScenario>,
}

/// Pre-defined pilot shape library. Depends only on `pilot_seed`, never on
/// the dataset seed, so independently generated datasets share it.
pub fn pilot_library(m: usize, wavelength: f64, pilot_seed: u64) -> Vec<Tensor> {
    let mut rng = rng_root(pilot_seed, stream::PILOT_LIBRARY);
    (0..m)
        .map(|_| surface_to_deformation(&sample_surface_params(&mut rng, wavelength), wavelength))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrSpec {
    Fixed(f64),
    Uniform(f64, f64),
    NoiseFree,
}

impl SnrSpec {
    pub fn parse(text: &str) -> Result<SnrSpec> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("inf") {
            return Ok(SnrSpec::NoiseFree);
        }
        if let Some((lo, hi)) = t.split_once(':') {
            let lo: f64 = lo
                .parse()
                .map_err(|_| Error::Config(format!("bad snr range '{text}'")))?;
            let hi: f64 = hi
                .parse()
                .map_err(|_| Error::Config(format!("bad snr range '{text}'")))?;
            if hi < lo {
                return Err(Error::Config(format!("snr range '{text}' is inverted")));
            }
            return Ok(SnrSpec::Uniform(lo, hi));
        }
        t.parse()
            .map(SnrSpec::Fixed)
            .map_err(|_| Error::Config(format!("bad snr value '{text}'")))
    }

    pub fn render(&self) -> String {
        match self {
            SnrSpec::Fixed(v) => v.to_string(),
            SnrSpec::Uniform(lo, hi) => format!("{lo}:{hi}"),
            SnrSpec::NoiseFree => "inf".to_string(),
        }
    }
}

/// Pooled signal power of a pilot set: mean |h|^2 over all pilots/elements.
pub fn pilot_signal_power(pilot_channels: &[ComplexView]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in pilot_channels {
        total += ch.data().iter().map(|v| v * v).sum::<f64>();
        count += ch.num_elements();
    }
    total / count as f64
}

/// Noisy measurements for one scenario at the given SNR. The standard-normal
/// draws depend only on (seed, scenario index), so re-generating at another
/// SNR rescales the same noise realization; infinite SNR returns the pilot
/// channels exactly.
pub fn measurements_at_snr(
    pilot_channels: &[ComplexView],
    dataset_seed: u64,
    scenario_index: usize,
    snr_db: f64,
) -> Vec<ComplexView> {
    if snr_db.is_infinite() {
        return pilot_channels.to_vec();
    }
    let power = pilot_signal_power(pilot_channels);
    let sigma2 = power / 10f64.powf(snr_db / 10.0);
    let per_component = (sigma2 / 2.0).sqrt();
    let mut rng = rng_for(dataset_seed, stream::FIM_NOISE, scenario_index as u64);
    pilot_channels
        .iter()
        .map(|ch| {
            let mut pairs = ch.data().to_vec();
            for v in pairs.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *v += per_component * n;
            }
            ComplexView::from_pairs(ch.logical_shape(), pairs).expect("shape preserved")
        })
        .collect()
}

/// Generate FIM scenarios: path gains CN(0, 1/L_p), directions uniform on
/// the upper hemisphere, a target deformation from the pilot family, and
/// seeded noisy measurements.
pub fn gen_fim_scenarios(
    n_train: usize,
    n_test: usize,
    m_pilots: usize,
    paths: usize,
    snr: SnrSpec,
    wavelength: f64,
    seed: u64,
    pilot_seed: u64,
) -> Result<FimDataset> {
    if m_pilots == 0 {
        return Err(Error::InvalidArgument("pilot count must be >= 1".into()));
    }
    if paths == 0 {
        return Err(Error::InvalidArgument("path count must be >= 1".into()));
    }
    let total = n_train + n_test;
    if total == 0 {
        return Err(Error::InvalidArgument("empty dataset requested".into()));
    }
    let pilots = pilot_library(m_pilots, wavelength, pilot_seed);

    let scenarios: Vec<Result<FimScenario>> = par_map_indexed(total, |idx| {
        let mut rng = rng_for(seed, stream::FIM_SCENARIO, idx as u64);
        let gain_scale = (1.0 / (2.0 * paths as f64)).sqrt();
        let gains: Vec<Complex64> = (0..paths)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * gain_scale, im * gain_scale)
            })
            .collect();
        let directions: Vec<[f64; 3]> = (0..paths)
            .map(|_| {
                let z: f64 = rng.gen_range(0.0..1.0);
                let theta = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                let r = (1.0 - z * z).sqrt();
                let d = [r * theta.cos(), r * theta.sin(), z];
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                [d[0] / n, d[1] / n, d[2] / n]
            })
            .collect();
        let target_params = sample_surface_params(&mut rng, wavelength);
        let snr_db = match snr {
            SnrSpec::Fixed(v) => v,
            SnrSpec::Uniform(lo, hi) => rng.gen_range(lo..=hi),
            SnrSpec::NoiseFree => f64::INFINITY,
        };

        let pilot_channels: Vec<ComplexView> = pilots
            .iter()
            .map(|z| fim_channel(&gains, &directions, z, wavelength))
            .collect::<Result<Vec<_>>>()?;
        let target_deformation = surface_to_deformation(&target_params, wavelength);
        let target_channel = fim_channel(&gains, &directions, &target_deformation, wavelength)?;
        let measurements = measurements_at_snr(&pilot_channels, seed, idx, snr_db);
        Ok(FimScenario {
            gains,
            directions,
            pilot_channels,
            measurements,
            target_deformation,
            target_channel,
            snr_db,
        })
    });
    let scenarios = scenarios.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FimDataset {
        wavelength,
        pilots,
        paths,
        seed,
        pilot_seed,
        n_train,
        n_test,
        snr_spec: snr.render(),
        scenarios,
    })
}

// ---------------------------------------------------------------------------
// training-pair encodings

/// Holographic encoding: input [Re J, Im J], target [Re E, Im E].
pub fn holo_train_data(ds: &HoloDataset, range: std::ops::Range<usize>) -> TrainData {
    let s = ds.geometry.grid;
    let pixels = s * s;
    let mut inputs = Vec::with_capacity(range.len());
    let mut targets = Vec::with_capacity(range.len());
    for sample in &ds.samples[range] {
        inputs.push(deinterleave(sample.current.data(), pixels));
        targets.push(deinterleave(sample.field.data(), pixels));
    }
    TrainData {
        h: s,
        w: s,
        inputs,
        targets,
    }
}

/// FIM encoding: channels [zeta_1, Re h_1, Im h_1, ..., zeta_M, Re h_M,
/// Im h_M, zeta_target] (3M+1 planes), target [Re h, Im h]. Measurements
/// can be overridden (the compare command re-noises per SNR).
pub fn fim_input_channels(
    pilots: &[Tensor],
    measurements: &[ComplexView],
    target_deformation: &Tensor,
) -> Vec<f64> {
    let pixels = FIM_GRID * FIM_GRID;
    let mut input = Vec::with_capacity((3 * pilots.len() + 1) * pixels);
    for (zeta, meas) in pilots.iter().zip(measurements) {
        input.extend_from_slice(zeta.data());
        let planes = deinterleave(meas.data(), pixels);
        input.extend_from_slice(&planes);
    }
    input.extend_from_slice(target_deformation.data());
    input
}

pub fn fim_train_data(ds: &FimDataset, range: std::ops::Range<usize>) -> TrainData {
    let pixels = FIM_GRID * FIM_GRID;
    let mut inputs = Vec::with_capacity(range.len());
    let mut targets = Vec::with_capacity(range.len());
    for sc in &ds.scenarios[range] {
        inputs.push(fim_input_channels(
            &ds.pilots,
            &sc.measurements,
            &sc.target_deformation,
        ));
        targets.push(deinterleave(sc.target_channel.data(), pixels));
    }
    TrainData {
        h: FIM_GRID,
        w: FIM_GRID,
        inputs,
        targets,
    }
}

/// Interleaved (re, im) pairs to two stacked channel planes.
pub fn deinterleave(pairs: &[f64], pixels: usize) -> Vec<f64> {
    debug_assert_eq!(pairs.len(), 2 * pixels);
    let mut out = vec![0.0; 2 * pixels];
    for p in 0..pixels {
        out[p] = pairs[2 * p];
        out[pixels + p] = pairs[2 * p + 1];
    }
    out
}

/// Two stacked channel planes back to interleaved pairs.
pub fn interleave(planes: &[f64], pixels: usize) -> Vec<f64> {
    debug_assert_eq!(planes.len(), 2 * pixels);
    let mut out = vec![0.0; 2 * pixels];
    for p in 0..pixels {
        out[2 * p] = planes[p];
        out[2 * p + 1] = planes[pixels + p];
    }
    out
}

// ---------------------------------------------------------------------------
// dataset container
//
// magic "FNODAT1\0", u32 version, u32 kind (1 holo, 2 fim),
// u32 metadata length + key=value lines, then f64 payload in declared order.
// Holo payload per sample: J pairs then E pairs. Fim payload: the pilot
// library (M deformation maps), then per scenario: gains (L_p pairs),
// directions (L_p triples), noiseless pilot channels (M fields), noisy
// measurements (M fields), target deformation, target channel, snr_db.

pub const DATASET_MAGIC: &[u8; 8] = b"FNODAT1\0";
pub const DATASET_VERSION: u32 = 1;
pub const KIND_HOLO: u32 = 1;
pub const KIND_FIM: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Holo(HoloDataset),
    Fim(FimDataset),
}

impl Dataset {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Dataset::Holo(_) => "holo",
            Dataset::Fim(_) => "fim",
        }
    }
}

fn meta_string(pairs: &[(String, String)], key: &str) -> Result<String> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Format(format!("missing metadata key {key}")))
}

fn meta_parse<T: std::str::FromStr>(pairs: &[(String, String)], key: &str) -> Result<T> {
    meta_string(pairs, key)?
        .parse()
        .map_err(|_| Error::Format(format!("bad value for metadata key {key}")))
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let result = match ds {
        Dataset::Holo(h) => write_holo(&mut out, h),
        Dataset::Fim(f) => write_fim(&mut out, f),
    };
    result.map_err(|e| Error::io(path, e))
}

fn write_header(
    out: &mut impl Write,
    kind: u32,
    metadata: &[(String, String)],
) -> std::io::Result<()> {
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    out.write_all(&kind.to_le_bytes())?;
    let meta = render_metadata(metadata);
    out.write_all(&(meta.len() as u32).to_le_bytes())?;
    out.write_all(meta.as_bytes())
}

fn write_holo(out: &mut impl Write, ds: &HoloDataset) -> std::io::Result<()> {
    let g = &ds.geometry;
    let metadata = vec![
        ("aperture_wl".to_string(), g.aperture_wl.to_string()),
        ("cutoff".to_string(), ds.cutoff.to_string()),
        ("grid".to_string(), g.grid.to_string()),
        ("n_test".to_string(), ds.n_test.to_string()),
        ("n_train".to_string(), ds.n_train.to_string()),
        ("receive_wl".to_string(), g.receive_wl.to_string()),
        ("seed".to_string(), ds.seed.to_string()),
        ("wavelength".to_string(), g.wavelength.to_string()),
        ("z0_wl".to_string(), g.z0_wl.to_string()),
    ];
    write_header(out, KIND_HOLO, &metadata)?;
    for sample in &ds.samples {
        write_f64s(out, sample.current.data())?;
        write_f64s(out, sample.field.data())?;
    }
    out.flush()
}

fn write_fim(out: &mut impl Write, ds: &FimDataset) -> std::io::Result<()> {
    let metadata = vec![
        ("elements".to_string(), FIM_GRID.to_string()),
        ("n_test".to_string(), ds.n_test.to_string()),
        ("n_train".to_string(), ds.n_train.to_string()),
        ("paths".to_string(), ds.paths.to_string()),
        ("pilot_seed".to_string(), ds.pilot_seed.to_string()),
        ("pilots".to_string(), ds.pilots.len().to_string()),
        ("seed".to_string(), ds.seed.to_string()),
        ("snr_db".to_string(), ds.snr_spec.clone()),
        ("spacing_wl".to_string(), FIM_SPACING_WL.to_string()),
        ("wavelength".to_string(), ds.wavelength.to_string()),
    ];
    write_header(out, KIND_FIM, &metadata)?;
    for zeta in &ds.pilots {
        write_f64s(out, zeta.data())?;
    }
    for sc in &ds.scenarios {
        for a in &sc.gains {
            write_f64s(out, &[a.re, a.im])?;
        }
        for d in &sc.directions {
            write_f64s(out, d)?;
        }
        for ch in &sc.pilot_channels {
            write_f64s(out, ch.data())?;
        }
        for ch in &sc.measurements {
            write_f64s(out, ch.data())?;
        }
        write_f64s(out, sc.target_deformation.data())?;
        write_f64s(out, sc.target_channel.data())?;
        write_f64s(out, &[sc.snr_db])?;
    }
    out.flush()
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = LeReader::new(BufReader::new(file));
    let mut magic = [0u8; 8];
    r.exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(DATASET_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            expected: DATASET_VERSION,
            found: version,
        });
    }
    let kind = r.u32("kind")?;
    let meta_len = r.u32("metadata length")? as usize;
    let metadata = parse_metadata(&r.string(meta_len, "metadata")?)?;
    match kind {
        KIND_HOLO => read_holo(&mut r, &metadata),
        KIND_FIM => read_fim(&mut r, &metadata),
        other => Err(Error::Format(format!("unknown dataset kind {other}"))),
    }
}

fn read_holo<R: std::io::Read>(
    r: &mut LeReader<R>,
    metadata: &[(String, String)],
) -> Result<Dataset> {
    let geometry = HoloGeometry {
        wavelength: meta_parse(metadata, "wavelength")?,
        aperture_wl: meta_parse(metadata, "aperture_wl")?,
        receive_wl: meta_parse(metadata, "receive_wl")?,
        z0_wl: meta_parse(metadata, "z0_wl")?,
        grid: meta_parse(metadata, "grid")?,
    };
    geometry.validate()?;
    let n_train: usize = meta_parse(metadata, "n_train")?;
    let n_test: usize = meta_parse(metadata, "n_test")?;
    let cutoff: usize = meta_parse(metadata, "cutoff")?;
    let seed: u64 = meta_parse(metadata, "seed")?;
    let s = geometry.grid;
    let field_len = s * s * 2;
    let mut samples = Vec::with_capacity(n_train + n_test);
    for _ in 0..n_train + n_test {
        let current = ComplexView::from_pairs(&[s, s], r.f64_vec(field_len, "current")?)?;
        let field = ComplexView::from_pairs(&[s, s], r.f64_vec(field_len, "field")?)?;
        samples.push(HoloSample { current, field });
    }
    Ok(Dataset::Holo(HoloDataset {
        geometry,
        cutoff,
        seed,
        n_train,
        n_test,
        samples,
    }))
}

fn read_fim<R: std::io::Read>(
    r: &mut LeReader<R>,
    metadata: &[(String, String)],
) -> Result<Dataset> {
    let wavelength: f64 = meta_parse(metadata, "wavelength")?;
    let elements: usize = meta_parse(metadata, "elements")?;
    if elements != FIM_GRID {
        return Err(Error::Format(format!(
            "unsupported element grid {elements} (expected {FIM_GRID})"
        )));
    }
    let m: usize = meta_parse(metadata, "pilots")?;
    let paths: usize = meta_parse(metadata, "paths")?;
    let n_train: usize = meta_parse(metadata, "n_train")?;
    let n_test: usize = meta_parse(metadata, "n_test")?;
    let seed: u64 = meta_parse(metadata, "seed")?;
    let pilot_seed: u64 = meta_parse(metadata, "pilot_seed")?;
    let snr_spec = meta_string(metadata, "snr_db")?;
    let pixels = FIM_GRID * FIM_GRID;

    let mut pilots = Vec::with_capacity(m);
    for _ in 0..m {
        pilots.push(Tensor::from_vec(
            &[FIM_GRID, FIM_GRID],
            r.f64_vec(pixels, "pilot deformation")?,
        )?);
    }
    let mut scenarios = Vec::with_capacity(n_train + n_test);
    for _ in 0..n_train + n_test {
        let mut gains = Vec::with_capacity(paths);
        for _ in 0..paths {
            let pair = r.f64_vec(2, "gain")?;
            gains.push(Complex64::new(pair[0], pair[1]));
        }
        let mut directions = Vec::with_capacity(paths);
        for _ in 0..paths {
            let d = r.f64_vec(3, "direction")?;
            directions.push([d[0], d[1], d[2]]);
        }
        let mut pilot_channels = Vec::with_capacity(m);
        for _ in 0..m {
            pilot_channels.push(ComplexView::from_pairs(
                &[FIM_GRID, FIM_GRID],
                r.f64_vec(2 * pixels, "pilot channel")?,
            )?);
        }
        let mut measurements = Vec::with_capacity(m);
        for _ in 0..m {
            measurements.push(ComplexView::from_pairs(
                &[FIM_GRID, FIM_GRID],
                r.f64_vec(2 * pixels, "measurement")?,
            )?);
        }
        let target_deformation =
            Tensor::from_vec(&[FIM_GRID, FIM_GRID], r.f64_vec(pixels, "target deformation")?)?;
        let target_channel = ComplexView::from_pairs(
            &[FIM_GRID, FIM_GRID],
            r.f64_vec(2 * pixels, "target channel")?,
        )?;
        let snr_db = r.f64_vec(1, "snr")?[0];
        scenarios.push(FimScenario {
            gains,
            directions,
            pilot_channels,
            measurements,
            target_deformation,
            target_channel,
            snr_db,
        });
    }
    Ok(Dataset::Fim(FimDataset {
        wavelength,
        pilots,
        paths,
        seed,
        pilot_seed,
        n_train,
        n_test,
        snr_spec,
        scenarios,
    }))
}
