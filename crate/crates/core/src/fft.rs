//! Iterative radix-2 complex FFT in two dimensions.
//!
//! Convention fixed project-wide: unnormalized forward transform
//! `X[k] = sum_x x[x] exp(-i 2 pi k x / N)`, inverse scaled by `1/(H*W)`.
//! Grids must be powers of two. Frequency index `k` maps to the signed
//! integer frequency `k` for `k < N/2` and `k - N` otherwise.

use crate::error::{Error, Result};
use crate::tensor::ComplexView;
use num_complex::Complex64;

fn check_power_of_two(extent: usize) -> Result<()> {
    if extent == 0 || !extent.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { extent });
    }
    Ok(())
}

/// One-dimensional radix-2 plan: bit-reversal table plus per-stage twiddles.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    rev: Vec<u32>,
    // Forward twiddles, concatenated per stage: for stage `len`, entries
    // exp(-2 pi i j / len) for j in 0..len/2. Inverse butterflies conjugate.
    twiddles: Vec<Complex64>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<FftPlan> {
        check_power_of_two(n)?;
        let bits = n.trailing_zeros();
        let rev = (0..n as u32)
            .map(|i| i.reverse_bits() >> (32 - bits.max(1)))
            .collect::<Vec<_>>();
        let mut twiddles = Vec::new();
        let mut len = 2;
        while len <= n {
            for j in 0..len / 2 {
                let angle = -2.0 * std::f64::consts::PI * j as f64 / len as f64;
                twiddles.push(Complex64::new(angle.cos(), angle.sin()));
            }
            len *= 2;
        }
        Ok(FftPlan { n, rev, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub(crate) fn rev_table(&self) -> &[u32] {
        &self.rev
    }

    pub(crate) fn twiddle_table(&self) -> &[Complex64] {
        &self.twiddles
    }

    /// In-place transform. `inverse` conjugates the twiddles; no scaling is
    /// applied here (the 2D inverse applies `1/(H*W)` once).
    pub fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(buf.len(), self.n);
        if self.n == 1 {
            return;
        }
        for i in 0..self.n {
            let j = self.rev[i] as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        let mut tw_base = 0;
        while len <= self.n {
            let half = len / 2;
            let tw = &self.twiddles[tw_base..tw_base + half];
            let mut start = 0;
            while start < self.n {
                for j in 0..half {
                    let w = if inverse { tw[j].conj() } else { tw[j] };
                    let a = buf[start + j];
                    let b = buf[start + j + half] * w;
                    buf[start + j] = a + b;
                    buf[start + j + half] = a - b;
                }
                start += len;
            }
            tw_base += half;
            len *= 2;
        }
    }
}

/// Two-dimensional plan over an H x W grid (rows then columns).
#[derive(Debug, Clone)]
pub struct Fft2Plan {
    h: usize,
    w: usize,
    row: FftPlan,
    col: FftPlan,
}

impl Fft2Plan {
    pub fn new(h: usize, w: usize) -> Result<Fft2Plan> {
        check_power_of_two(h)?;
        check_power_of_two(w)?;
        Ok(Fft2Plan {
            h,
            w,
            row: FftPlan::new(w)?,
            col: FftPlan::new(h)?,
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    fn transform2(&self, buf: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(buf.len(), self.h * self.w);
        for r in 0..self.h {
            self.row.transform(&mut buf[r * self.w..(r + 1) * self.w], inverse);
        }
        let mut col = vec![Complex64::default(); self.h];
        for c in 0..self.w {
            for r in 0..self.h {
                col[r] = buf[r * self.w + c];
            }
            self.col.transform(&mut col, inverse);
            for r in 0..self.h {
                buf[r * self.w + c] = col[r];
            }
        }
    }

    /// Unnormalized forward transform, in place.
    pub fn fft2_into(&self, buf: &mut [Complex64]) {
        self.transform2(buf, false);
    }

    /// Inverse transform with `1/(H*W)` normalization, in place.
    pub fn ifft2_into(&self, buf: &mut [Complex64]) {
        self.transform2(buf, true);
        let scale = 1.0 / (self.h * self.w) as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Inverse transform without the `1/(H*W)` factor (used by the FNO
    /// backward pass, where the normalization cancels analytically).
    pub fn ifft2_unscaled_into(&self, buf: &mut [Complex64]) {
        self.transform2(buf, true);
    }
}

/// DFT coefficients of an H x W field, carried as a ComplexView.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    view: ComplexView,
}

impl Spectrum2D {
    /// Wrap already-computed DFT coefficients.
    pub fn from_view(view: ComplexView) -> Spectrum2D {
        Spectrum2D { view }
    }

    pub fn view(&self) -> &ComplexView {
        &self.view
    }

    pub fn into_view(self) -> ComplexView {
        self.view
    }

    pub fn h(&self) -> usize {
        self.view.logical_shape()[0]
    }

    pub fn w(&self) -> usize {
        self.view.logical_shape()[1]
    }
}

fn field_dims(field: &ComplexView) -> Result<(usize, usize)> {
    let shape = field.logical_shape();
    if shape.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "expected an HxWx2 field, got shape {:?}",
            field.tensor().shape()
        )));
    }
    check_power_of_two(shape[0])?;
    check_power_of_two(shape[1])?;
    Ok((shape[0], shape[1]))
}

pub(crate) fn view_to_buf(view: &ComplexView) -> Vec<Complex64> {
    view.data()
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect()
}

pub(crate) fn buf_to_view(shape: &[usize], buf: &[Complex64]) -> ComplexView {
    let mut pairs = Vec::with_capacity(buf.len() * 2);
    for v in buf {
        pairs.push(v.re);
        pairs.push(v.im);
    }
    ComplexView::from_pairs(shape, pairs).expect("buffer length matches shape")
}

/// Forward 2D FFT of a complex field (unnormalized).
pub fn fft2(field: &ComplexView) -> Result<Spectrum2D> {
    let (h, w) = field_dims(field)?;
    let plan = Fft2Plan::new(h, w)?;
    let mut buf = view_to_buf(field);
    plan.fft2_into(&mut buf);
    Ok(Spectrum2D {
        view: buf_to_view(&[h, w], &buf),
    })
}

/// Inverse 2D FFT with `1/(H*W)` normalization; exact inverse of [`fft2`].
pub fn ifft2(spec: &Spectrum2D) -> Result<ComplexView> {
    let (h, w) = field_dims(&spec.view)?;
    let plan = Fft2Plan::new(h, w)?;
    let mut buf = view_to_buf(&spec.view);
    plan.ifft2_into(&mut buf);
    Ok(buf_to_view(&[h, w], &buf))
}

/// Signed integer frequencies retained per axis for mode count `m`, in the
/// canonical order `0, 1, ..., m-1, -m, ..., -1`. This matches ascending
/// spectrum index order within the low/high corner blocks, and is what makes
/// spectral weights portable across grid sizes.
pub fn signed_freqs(m: usize) -> Vec<i64> {
    let mut f: Vec<i64> = (0..m as i64).collect();
    f.extend(-(m as i64)..0);
    f
}

/// Spectrum index of a signed frequency on an axis of extent `n`.
pub fn freq_to_index(f: i64, n: usize) -> usize {
    f.rem_euclid(n as i64) as usize
}

/// The retained low-frequency mode indices: the four corner blocks
/// `k1 in [0, m1) u [H-m1, H)` crossed with `k2 in [0, m2) u [W-m2, W)`,
/// i.e. signed frequencies `-m1..m1-1` by `-m2..m2-1`. Cardinality is
/// exactly `(2 m1)(2 m2)`.
pub fn kept_mode_set(h: usize, w: usize, m1: usize, m2: usize) -> Result<Vec<(usize, usize)>> {
    check_power_of_two(h)?;
    check_power_of_two(w)?;
    if m1 == 0 || m1 > h / 2 {
        return Err(Error::ModeRange { m: m1, extent: h });
    }
    if m2 == 0 || m2 > w / 2 {
        return Err(Error::ModeRange { m: m2, extent: w });
    }
    let mut modes = Vec::with_capacity(4 * m1 * m2);
    for f1 in signed_freqs(m1) {
        for f2 in signed_freqs(m2) {
            modes.push((freq_to_index(f1, h), freq_to_index(f2, w)));
        }
    }
    Ok(modes)
}
