//! CSV and SVG report writers. Output is plain generated text, so identical
//! runs produce byte-identical files.

use crate::error::{Error, Result};
use crate::metrics::SpectrumReport;
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::Path;

/// Per-sample evaluation row; the disk ratios are present for field data.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub sample_id: usize,
    pub nmse_linear: f64,
    pub nmse_db: f64,
    pub disk_ratio_truth: Option<f64>,
    pub disk_ratio_pred: Option<f64>,
}

pub fn eval_csv(rows: &[EvalRow], with_disk: bool) -> String {
    let mut out = String::new();
    if with_disk {
        out.push_str("sample_id,nmse_linear,nmse_db,disk_ratio_truth,disk_ratio_pred\n");
    } else {
        out.push_str("sample_id,nmse_linear,nmse_db\n");
    }
    for r in rows {
        if with_disk {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.sample_id,
                r.nmse_linear,
                r.nmse_db,
                r.disk_ratio_truth.unwrap_or(f64::NAN),
                r.disk_ratio_pred.unwrap_or(f64::NAN)
            );
        } else {
            let _ = writeln!(out, "{},{},{}", r.sample_id, r.nmse_linear, r.nmse_db);
        }
    }
    out
}

/// NMSE-versus-SNR table of the comparison run.
pub fn compare_csv(rows: &[(f64, &str, f64)]) -> String {
    let mut out = String::from("snr_db,method,nmse_db\n");
    for (snr, method, nmse) in rows {
        let _ = writeln!(out, "{snr},{method},{nmse}");
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// SVG heatmaps

/// Blue -> cyan -> yellow -> red ramp on t in [0, 1].
fn color(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, u: f64| a + (b - a) * u;
    let stops: [(f64, (f64, f64, f64)); 4] = [
        (0.0, (15.0, 35.0, 120.0)),
        (0.35, (30.0, 180.0, 200.0)),
        (0.7, (240.0, 220.0, 60.0)),
        (1.0, (200.0, 30.0, 25.0)),
    ];
    for w in stops.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if t <= t1 {
            let u = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            return (
                lerp(c0.0, c1.0, u) as u8,
                lerp(c0.1, c1.1, u) as u8,
                lerp(c0.2, c1.2, u) as u8,
            );
        }
    }
    (200, 30, 25)
}

const CELL: usize = 8;
const GAP: usize = 30;

fn heatmap_group(out: &mut String, values: &Tensor, x0: usize, y0: usize, lo: f64, hi: f64) {
    let (h, w) = (values.shape()[0], values.shape()[1]);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for i in 0..h {
        for j in 0..w {
            let t = (values.get(&[i, j]) - lo) / span;
            let (r, g, b) = color(t);
            let _ = write!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"rgb({r},{g},{b})\"/>",
                x0 + j * CELL,
                y0 + i * CELL,
            );
        }
        out.push('\n');
    }
}

fn label(out: &mut String, x: usize, y: usize, text: &str) {
    let _ = write!(
        out,
        "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"12\">{text}</text>\n"
    );
}

/// Three panels: truth magnitude, prediction magnitude (shared scale), and
/// the absolute error map (its own scale).
pub fn three_panel_svg(truth_mag: &Tensor, pred_mag: &Tensor, err: &Tensor) -> String {
    let (h, w) = (truth_mag.shape()[0], truth_mag.shape()[1]);
    let panel_w = w * CELL;
    let total_w = 3 * panel_w + 2 * GAP;
    let total_h = h * CELL + 24;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w}\" height=\"{total_h}\" viewBox=\"0 0 {total_w} {total_h}\">\n"
    );
    let max2 = |t: &Tensor| t.data().iter().cloned().fold(0.0f64, f64::max);
    let shared_hi = max2(truth_mag).max(max2(pred_mag));
    label(&mut out, 0, 14, "truth |E|");
    label(&mut out, panel_w + GAP, 14, "prediction |E|");
    label(&mut out, 2 * (panel_w + GAP), 14, "absolute error");
    heatmap_group(&mut out, truth_mag, 0, 20, 0.0, shared_hi);
    heatmap_group(&mut out, pred_mag, panel_w + GAP, 20, 0.0, shared_hi);
    heatmap_group(&mut out, err, 2 * (panel_w + GAP), 20, 0.0, max2(err));
    out.push_str("</svg>\n");
    out
}

/// Log-magnitude spectra (fftshifted so DC is central) with the k0 circle
/// overlaid. Normalization: each panel is scaled to its own peak and shown
/// over 60 dB of dynamic range.
pub fn spectrum_svg(truth: &SpectrumReport, pred: &SpectrumReport) -> String {
    let (h, w) = (truth.magnitude.shape()[0], truth.magnitude.shape()[1]);
    let panel_w = w * CELL;
    let total_w = 2 * panel_w + GAP;
    let total_h = h * CELL + 24;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w}\" height=\"{total_h}\" viewBox=\"0 0 {total_w} {total_h}\">\n"
    );

    let log_shifted = |rep: &SpectrumReport| -> Tensor {
        let peak = rep
            .magnitude
            .data()
            .iter()
            .cloned()
            .fold(f64::MIN_POSITIVE, f64::max);
        Tensor::from_fn(&[h, w], |idx| {
            let k1 = (idx[0] + h / 2) % h;
            let k2 = (idx[1] + w / 2) % w;
            let v = rep.magnitude.get(&[k1, k2]).max(peak * 1e-12);
            // 60 dB window below the peak, mapped to [0, 1]
            (20.0 * (v / peak).log10() / 60.0 + 1.0).clamp(0.0, 1.0)
        })
    };

    label(&mut out, 0, 14, "truth spectrum (dB)");
    label(&mut out, panel_w + GAP, 14, "prediction spectrum (dB)");
    heatmap_group(&mut out, &log_shifted(truth), 0, 20, 0.0, 1.0);
    heatmap_group(&mut out, &log_shifted(pred), panel_w + GAP, 20, 0.0, 1.0);

    // k0 circle: kappa axis step per bin after the shift is uniform
    let dkx = truth.kappa_x[1] - truth.kappa_x[0];
    let dky = truth.kappa_y[1] - truth.kappa_y[0];
    let rx = truth.k0 / dkx * CELL as f64;
    let ry = truth.k0 / dky * CELL as f64;
    for x0 in [0, panel_w + GAP] {
        let cx = x0 as f64 + (w / 2) as f64 * CELL as f64 + CELL as f64 / 2.0;
        let cy = 20.0 + (h / 2) as f64 * CELL as f64 + CELL as f64 / 2.0;
        let _ = write!(
            out,
            "<ellipse cx=\"{cx}\" cy=\"{cy}\" rx=\"{rx}\" ry=\"{ry}\" fill=\"none\" stroke=\"white\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"/>\n"
        );
    }
    out.push_str("</svg>\n");
    out
}
