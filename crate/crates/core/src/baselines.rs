//! Pilot-based channel estimators the operator model is compared against:
//! nearest interpolation, K-nearest neighbors, Gaussian kernel ridge
//! regression, and a local-only ablation (the same network with the global
//! Fourier path disabled).

use crate::error::{Error, Result};
use crate::fno::FnoModel;
use crate::oracles::{fim_input_channels, interleave, FIM_GRID};
use crate::tensor::{ComplexView, Tensor};

/// M pairs of (flattened deformation, flattened complex measurement).
#[derive(Debug, Clone)]
pub struct PilotSet {
    pub deformations: Vec<Vec<f64>>,
    /// Interleaved (re, im) measurement vectors.
    pub measurements: Vec<Vec<f64>>,
}

impl PilotSet {
    pub fn new(deformations: Vec<Vec<f64>>, measurements: Vec<Vec<f64>>) -> Result<PilotSet> {
        if deformations.is_empty() || deformations.len() != measurements.len() {
            return Err(Error::InvalidArgument(
                "pilot set needs M >= 1 matching pairs".into(),
            ));
        }
        for d in &deformations[1..] {
            if d.len() != deformations[0].len() {
                return Err(Error::ShapeMismatch {
                    left: vec![deformations[0].len()],
                    right: vec![d.len()],
                });
            }
        }
        for m in &measurements[1..] {
            if m.len() != measurements[0].len() {
                return Err(Error::ShapeMismatch {
                    left: vec![measurements[0].len()],
                    right: vec![m.len()],
                });
            }
        }
        Ok(PilotSet {
            deformations,
            measurements,
        })
    }

    pub fn from_fields(pilots: &[Tensor], measurements: &[ComplexView]) -> Result<PilotSet> {
        PilotSet::new(
            pilots.iter().map(|z| z.data().to_vec()).collect(),
            measurements.iter().map(|m| m.data().to_vec()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.deformations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deformations.is_empty()
    }
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pilot indices sorted by distance to the query, ties broken by index.
fn ranked_by_distance(pilots: &PilotSet, target: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pilots.len()).collect();
    let d: Vec<f64> = pilots
        .deformations
        .iter()
        .map(|z| sq_distance(z, target))
        .collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
    order
}

/// Measurement of the nearest pilot shape (lowest index wins ties).
pub fn nearest_estimate(pilots: &PilotSet, target: &[f64]) -> Vec<f64> {
    let best = ranked_by_distance(pilots, target)[0];
    pilots.measurements[best].clone()
}

/// Unweighted mean of the K nearest pilots' measurements.
pub fn knn_estimate(pilots: &PilotSet, target: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > pilots.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} out of range for {} pilots",
            pilots.len()
        )));
    }
    let order = ranked_by_distance(pilots, target);
    let dim = pilots.measurements[0].len();
    let mut mean = vec![0.0; dim];
    for &idx in &order[..k] {
        for (m, &v) in mean.iter_mut().zip(&pilots.measurements[idx]) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= k as f64;
    }
    Ok(mean)
}

/// Median pairwise pilot distance, the default kernel length scale.
pub fn median_pilot_distance(pilots: &PilotSet) -> f64 {
    let mut dists = Vec::new();
    for i in 0..pilots.len() {
        for j in i + 1..pilots.len() {
            dists.push(sq_distance(&pilots.deformations[i], &pilots.deformations[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = dists.len();
    if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    }
}

pub const KRR_DEFAULT_RIDGE: f64 = 1e-2;
pub const KNN_DEFAULT_K: usize = 3;

/// Gaussian kernel ridge regression from deformation vectors to measurement
/// vectors: solve `(K + ridge I) A = H`, predict `k(target, .) A`. Real and
/// imaginary parts ride along as independent right-hand-side columns.
pub fn krr_estimate(
    pilots: &PilotSet,
    target: &[f64],
    lengthscale: f64,
    ridge: f64,
) -> Result<Vec<f64>> {
    if !(lengthscale > 0.0) {
        return Err(Error::InvalidArgument("lengthscale must be > 0".into()));
    }
    if ridge < 0.0 {
        return Err(Error::InvalidArgument("ridge must be >= 0".into()));
    }
    let m = pilots.len();
    let dim = pilots.measurements[0].len();
    let kernel =
        |a: &[f64], b: &[f64]| (-sq_distance(a, b) / (2.0 * lengthscale * lengthscale)).exp();

    // K + ridge I, row-major
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            a[i * m + j] = kernel(&pilots.deformations[i], &pilots.deformations[j]);
        }
        a[i * m + i] += ridge;
    }
    // right-hand sides: measurement components as columns
    let mut rhs = vec![0.0; m * dim];
    for (i, meas) in pilots.measurements.iter().enumerate() {
        rhs[i * dim..(i + 1) * dim].copy_from_slice(meas);
    }
    solve_multi(&mut a, &mut rhs, m, dim).map_err(|_| {
        Error::InvalidArgument(
            "kernel system is singular; use ridge > 0 for duplicate pilots".into(),
        )
    })?;

    let mut out = vec![0.0; dim];
    for i in 0..m {
        let w = kernel(target, &pilots.deformations[i]);
        for (o, &c) in out.iter_mut().zip(&rhs[i * dim..(i + 1) * dim]) {
            *o += w * c;
        }
    }
    Ok(out)
}

/// Gaussian elimination with partial pivoting on row-major `a` (n x n) and
/// `rhs` (n x k), solved in place.
fn solve_multi(a: &mut [f64], rhs: &mut [f64], n: usize, k: usize) -> std::result::Result<(), ()> {
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Err(());
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            for j in 0..k {
                rhs.swap(col * k + j, pivot * k + j);
            }
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            for j in 0..k {
                rhs[row * k + j] -= factor * rhs[col * k + j];
            }
        }
    }
    for col in (0..n).rev() {
        let diag = a[col * n + col];
        for j in 0..k {
            let mut acc = rhs[col * k + j];
            for p in col + 1..n {
                acc -= a[col * n + p] * rhs[p * k + j];
            }
            rhs[col * k + j] = acc / diag;
        }
    }
    Ok(())
}

/// The local-only ablation: a trained network with modes = 0 (pointwise
/// paths only), fed the same pilot-stack encoding as the full model.
pub fn localmlp_estimate(
    model: &FnoModel,
    pilots: &[Tensor],
    measurements: &[ComplexView],
    target_deformation: &Tensor,
) -> Result<Vec<f64>> {
    let input = fim_input_channels(pilots, measurements, target_deformation);
    let fields = vec![input];
    let out = model.forward_fields(&fields, FIM_GRID, FIM_GRID)?;
    Ok(interleave(&out[0], FIM_GRID * FIM_GRID))
}
