//! Evaluation metrics: NMSE, pointwise error maps, and the spatial-spectrum
//! analysis that checks how much of a field's energy sits inside the
//! propagating-wave disk |kappa| <= k0.

use crate::error::{Error, Result};
use crate::fft::fft2;
use crate::tensor::{ComplexView, Tensor};

/// Normalized mean squared error ||est - truth||^2 / ||truth||^2 of flat
/// real vectors (complex data interleaved as re/im counts as two reals).
pub fn nmse_linear(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            left: vec![estimate.len()],
            right: vec![truth.len()],
        });
    }
    let denom: f64 = truth.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::ZeroNormTarget { sample: 0 });
    }
    let num: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / denom)
}

/// Linear NMSE in decibels; exactly zero error reports -inf.
pub fn nmse_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn nmse(estimate: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    let linear = nmse_linear(estimate, truth)?;
    Ok((linear, nmse_db(linear)))
}

/// Test-set aggregation: mean of per-sample linear NMSE, then dB.
pub fn aggregate_nmse_db(per_sample_linear: &[f64]) -> f64 {
    let mean = per_sample_linear.iter().sum::<f64>() / per_sample_linear.len() as f64;
    nmse_db(mean)
}

/// Pointwise complex modulus of the difference of two fields.
pub fn error_map(estimate: &ComplexView, truth: &ComplexView) -> Result<Tensor> {
    if estimate.logical_shape() != truth.logical_shape() {
        return Err(Error::ShapeMismatch {
            left: estimate.tensor().shape().to_vec(),
            right: truth.tensor().shape().to_vec(),
        });
    }
    let n = estimate.num_elements();
    let mut out = Vec::with_capacity(n);
    for lin in 0..n {
        let dre = estimate.re(lin) - truth.re(lin);
        let dim = estimate.im(lin) - truth.im(lin);
        out.push((dre * dre + dim * dim).sqrt());
    }
    Tensor::from_vec(estimate.logical_shape(), out)
}

/// Spatial-spectrum summary of one field: magnitude spectrum, the spatial
/// frequency axes implied by the grid pitch, and the fraction of spectral
/// energy inside the propagating disk kappa_x^2 + kappa_y^2 <= k0^2.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// |X[k1,k2]| on the H x W spectrum grid.
    pub magnitude: Tensor,
    /// Signed spatial frequencies per axis, rad/m.
    pub kappa_x: Vec<f64>,
    pub kappa_y: Vec<f64>,
    /// Energy fraction inside the k0 disk, in [0, 1].
    pub disk_ratio: f64,
    pub k0: f64,
}

/// Build the spectrum report. The pitch must resolve the disk: the spatial
/// Nyquist rate pi/pitch has to exceed k0, i.e. pitch < lambda/2.
pub fn spectrum_report(field: &ComplexView, pitch: f64, k0: f64) -> Result<SpectrumReport> {
    if !(pitch > 0.0) || !(k0 > 0.0) {
        return Err(Error::InvalidArgument("pitch and k0 must be > 0".into()));
    }
    let lambda = 2.0 * std::f64::consts::PI / k0;
    if pitch >= lambda / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "pitch {pitch} >= lambda/2 = {}: spectrum aliases the k0 disk",
            lambda / 2.0
        )));
    }
    let shape = field.logical_shape();
    if shape.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "expected an HxWx2 field, got {:?}",
            field.tensor().shape()
        )));
    }
    let (h, w) = (shape[0], shape[1]);
    let spec = fft2(field)?;

    // kappa at bin k: 2 pi f_k with f_k = signed(k) / (N * pitch)
    let axis = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|k| {
                let signed = if k < n / 2 {
                    k as f64
                } else {
                    k as f64 - n as f64
                };
                2.0 * std::f64::consts::PI * signed / (n as f64 * pitch)
            })
            .collect()
    };
    let kappa_x = axis(h);
    let kappa_y = axis(w);

    let mut inside = 0.0;
    let mut total = 0.0;
    let mut magnitude = Vec::with_capacity(h * w);
    for k1 in 0..h {
        for k2 in 0..w {
            let lin = k1 * w + k2;
            let energy = spec.view().re(lin).powi(2) + spec.view().im(lin).powi(2);
            magnitude.push(energy.sqrt());
            total += energy;
            if kappa_x[k1] * kappa_x[k1] + kappa_y[k2] * kappa_y[k2] <= k0 * k0 {
                inside += energy;
            }
        }
    }
    let disk_ratio = if total > 0.0 { inside / total } else { 0.0 };
    Ok(SpectrumReport {
        magnitude: Tensor::from_vec(&[h, w], magnitude)?,
        kappa_x,
        kappa_y,
        disk_ratio,
        k0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn nmse_reference_points() {
        let truth = vec![1.0, -2.0, 0.5];
        let (lin, db) = nmse(&truth, &truth).unwrap();
        assert_eq!(lin, 0.0);
        assert!(db.is_infinite() && db < 0.0);

        let zero = vec![0.0; 3];
        let (lin, db) = nmse(&zero, &truth).unwrap();
        assert_eq!(lin, 1.0);
        assert_eq!(db, 0.0);

        let double: Vec<f64> = truth.iter().map(|v| 2.0 * v).collect();
        let (lin, db) = nmse(&double, &truth).unwrap();
        assert!((lin - 1.0).abs() < 1e-15);
        assert!(db.abs() < 1e-12);
    }

    #[test]
    fn nmse_rejects_zero_truth() {
        assert!(nmse(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn nmse_scale_invariance() {
        let mut rng = StdRng::seed_from_u64(2);
        let truth: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let est: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = nmse_linear(&est, &truth).unwrap();
        // simultaneous complex scaling of interleaved pairs
        let (cr, ci) = (0.37, -1.21);
        let scale = |v: &[f64]| -> Vec<f64> {
            v.chunks_exact(2)
                .flat_map(|p| [p[0] * cr - p[1] * ci, p[0] * ci + p[1] * cr])
                .collect()
        };
        let scaled = nmse_linear(&scale(&est), &scale(&truth)).unwrap();
        assert!((base - scaled).abs() < 1e-12, "{base} vs {scaled}");
    }

    #[test]
    fn error_map_cases() {
        let t = ComplexView::from_pairs(&[2, 2], vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.5, 2.0, -2.0])
            .unwrap();
        let zero_err = error_map(&t, &t).unwrap();
        assert!(zero_err.data().iter().all(|&v| v == 0.0));

        // shift by 1+0i everywhere: all ones
        let shifted = ComplexView::from_pairs(
            &[2, 2],
            t.data()
                .chunks_exact(2)
                .flat_map(|p| [p[0] + 1.0, p[1]])
                .collect(),
        )
        .unwrap();
        assert!(error_map(&shifted, &t)
            .unwrap()
            .data()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-15));

        // hand case: difference (3, 4) has modulus 5
        let a = ComplexView::from_pairs(&[1, 1], vec![4.0, 6.0]).unwrap();
        let b = ComplexView::from_pairs(&[1, 1], vec![1.0, 2.0]).unwrap();
        assert!((error_map(&a, &b).unwrap().data()[0] - 5.0).abs() < 1e-15);
    }

    fn plane_wave(n: usize, f1: i64, f2: i64) -> ComplexView {
        let mut pairs = Vec::with_capacity(n * n * 2);
        for x in 0..n {
            for y in 0..n {
                let ph = 2.0 * PI * (f1 as f64 * x as f64 + f2 as f64 * y as f64) / n as f64;
                pairs.push(ph.cos());
                pairs.push(ph.sin());
            }
        }
        ComplexView::from_pairs(&[n, n], pairs).unwrap()
    }

    #[test]
    fn disk_ratio_single_bin_fields() {
        // default-like geometry: lambda = 1, pitch = 1/8, N = 32
        let (n, pitch, k0) = (32, 0.125, 2.0 * PI);
        // |kappa| = 2 pi f / (N pitch) = 2 pi f / 4; inside for f <= 4
        let inside = spectrum_report(&plane_wave(n, 2, 1), pitch, k0).unwrap();
        assert_eq!(inside.disk_ratio, 1.0);
        // out-of-disk bin: ratio zero up to FFT rounding noise (~1e-16
        // amplitudes squared)
        let outside = spectrum_report(&plane_wave(n, 9, -7), pitch, k0).unwrap();
        assert!(outside.disk_ratio < 1e-24, "{}", outside.disk_ratio);
        // boundary bin (f1, f2) = (4, 0) has |kappa| == k0 exactly: inside
        let boundary = spectrum_report(&plane_wave(n, 4, 0), pitch, k0).unwrap();
        assert_eq!(boundary.disk_ratio, 1.0);
    }

    #[test]
    fn aliasing_pitch_is_rejected() {
        let field = ComplexView::zeros(&[8, 8]);
        let err = spectrum_report(&field, 0.5, 2.0 * PI).unwrap_err();
        assert!(err.to_string().contains("aliases"), "{err}");
    }

    #[test]
    fn disk_ratio_is_shift_invariant() {
        let mut rng = StdRng::seed_from_u64(8);
        let n = 16;
        let pairs: Vec<f64> = (0..n * n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let field = ComplexView::from_pairs(&[n, n], pairs.clone()).unwrap();
        let (dx, dy) = (5usize, 11usize);
        let mut shifted = vec![0.0; n * n * 2];
        for x in 0..n {
            for y in 0..n {
                let src = ((x + n - dx) % n) * n + (y + n - dy) % n;
                let dst = x * n + y;
                shifted[2 * dst] = pairs[2 * src];
                shifted[2 * dst + 1] = pairs[2 * src + 1];
            }
        }
        let shifted = ComplexView::from_pairs(&[n, n], shifted).unwrap();
        let a = spectrum_report(&field, 0.2, 2.0 * PI).unwrap();
        let b = spectrum_report(&shifted, 0.2, 2.0 * PI).unwrap();
        assert!((a.disk_ratio - b.disk_ratio).abs() < 1e-12);
    }

    #[test]
    fn spectral_energy_matches_grid_energy() {
        // Parseval: sum |x|^2 == (1/N^2) sum |X|^2
        let mut rng = StdRng::seed_from_u64(9);
        let n = 16;
        let pairs: Vec<f64> = (0..n * n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let field = ComplexView::from_pairs(&[n, n], pairs).unwrap();
        let report = spectrum_report(&field, 0.2, 2.0 * PI).unwrap();
        let grid: f64 = field.data().iter().map(|v| v * v).sum();
        let freq: f64 = report.magnitude.data().iter().map(|v| v * v).sum();
        let rel = (grid - freq / (n * n) as f64).abs() / grid;
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn oracle_field_concentrates_inside_the_disk() {
        use crate::oracles::{gen_holo_dataset, HoloGeometry};
        let geom = HoloGeometry::default();
        let ds = gen_holo_dataset(&geom, 3, 0, 8, 5).unwrap();
        for sample in &ds.samples {
            let report =
                spectrum_report(&sample.field, geom.receive_pitch(), geom.k0()).unwrap();
            assert!(
                report.disk_ratio >= 0.95,
                "disk ratio {} below 0.95",
                report.disk_ratio
            );
        }
    }
}
