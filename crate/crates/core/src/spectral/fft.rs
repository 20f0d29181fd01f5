//! Real-input DFT over the time axis of a forecast block.
//!
//! Forward transform is unnormalized; the inverse scales by `1/T`. Only the
//! `M = T/2 + 1` non-redundant bins are kept. On the way back the imaginary
//! parts of the DC bin (and of the Nyquist bin for even `T`) are discarded,
//! which is what a real-output inverse transform can represent.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ForecastBlock, Spectrum};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        (planner.plan_fft_forward(len), planner.plan_fft_inverse(len))
    })
}

/// Number of non-redundant bins of a length-`horizon` real signal.
pub fn bin_count(horizon: usize) -> usize {
    horizon / 2 + 1
}

/// Multiplicity of bin `k` in the full spectrum: DC and (even-length)
/// Nyquist appear once, every other bin stands for itself and its conjugate.
pub fn bin_weight(k: usize, horizon: usize) -> f64 {
    if k == 0 || (horizon.is_multiple_of(2) && k == horizon / 2) {
        1.0
    } else {
        2.0
    }
}

/// Row-wise real-to-complex DFT of `rows` (`N × T`), returning `N × M`.
pub(crate) fn rfft_rows(rows: ArrayView2<'_, f64>) -> Result<Array2<Complex64>> {
    let (n, t) = rows.dim();
    if t < 2 {
        return Err(Error::InvalidHorizon(format!(
            "need at least 2 time steps, got {t}"
        )));
    }
    let m = bin_count(t);
    let (fwd, _) = plans(t);
    let mut out = Array2::zeros((n, m));
    let mut buf = vec![Complex64::new(0.0, 0.0); t];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len()];
    for (row, mut dst) in rows.outer_iter().zip(out.outer_iter_mut()) {
        for (b, &x) in buf.iter_mut().zip(row.iter()) {
            *b = Complex64::new(x, 0.0);
        }
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for (d, b) in dst.iter_mut().zip(&buf[..m]) {
            *d = *b;
        }
    }
    Ok(out)
}

/// Row-wise complex-to-real inverse of `bins` (`N × M`) back to length `horizon`.
pub(crate) fn irfft_rows(bins: ArrayView2<'_, Complex64>, horizon: usize) -> Result<Array2<f64>> {
    let (n, m) = bins.dim();
    if horizon < 2 {
        return Err(Error::InvalidHorizon(format!(
            "need at least 2 time steps, got {horizon}"
        )));
    }
    if m != bin_count(horizon) {
        return Err(Error::shape(format!(
            "{m} bins cannot be inverted to horizon {horizon} (expected {})",
            bin_count(horizon)
        )));
    }
    let (_, inv) = plans(horizon);
    let scale = 1.0 / horizon as f64;
    let nyquist = horizon.is_multiple_of(2).then_some(horizon / 2);
    let mut out = Array2::zeros((n, horizon));
    let mut buf = vec![Complex64::new(0.0, 0.0); horizon];
    let mut scratch = vec![Complex64::new(0.0, 0.0); inv.get_inplace_scratch_len()];
    for (src, mut dst) in bins.outer_iter().zip(out.outer_iter_mut()) {
        buf[0] = Complex64::new(src[0].re, 0.0);
        for k in 1..m {
            if Some(k) == nyquist {
                buf[k] = Complex64::new(src[k].re, 0.0);
            } else {
                buf[k] = src[k];
                buf[horizon - k] = src[k].conj();
            }
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b.re * scale;
        }
    }
    Ok(out)
}

/// Unnormalized forward transform of every node's row.
pub fn forward_rfft(block: &ForecastBlock) -> Result<Spectrum> {
    let bins = rfft_rows(block.values().view())?;
    Spectrum::new(bins, block.horizon(), block.scale())
}

/// Inverse transform (scaled by `1/T`) back to a real block of length `horizon`.
pub fn inverse_rfft(spectrum: &Spectrum, horizon: usize) -> Result<ForecastBlock> {
    let values = irfft_rows(spectrum.bins().view(), horizon)?;
    ForecastBlock::new(values, spectrum.scale())
}

/// Copy of `spectrum` restricted to what a real inverse can represent: the
/// imaginary parts of the DC and Nyquist bins are zeroed.
pub fn visible_part(spectrum: &Spectrum) -> Spectrum {
    let t = spectrum.horizon();
    let mut bins = spectrum.bins().clone();
    for mut row in bins.outer_iter_mut() {
        row[0].im = 0.0;
        if t.is_multiple_of(2) {
            row[t / 2].im = 0.0;
        }
    }
    Spectrum {
        bins,
        horizon: t,
        scale: spectrum.scale(),
    }
}

/// Frobenius norm of a half spectrum with real-transform bin weights and the
/// `1/T` inverse normalization applied, so that for any spectrum produced by
/// [`forward_rfft`] it equals the time-domain 2-norm of the source block.
pub fn parseval_norm(spectrum: &Spectrum) -> f64 {
    let t = spectrum.horizon();
    let mut acc = 0.0;
    for row in spectrum.bins().outer_iter() {
        for (k, z) in row.iter().enumerate() {
            acc += bin_weight(k, t) * z.norm_sqr();
        }
    }
    (acc / t as f64).sqrt()
}
