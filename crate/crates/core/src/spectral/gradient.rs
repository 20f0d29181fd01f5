//! Loss of a calibrated forecast against ground truth, and its exact
//! gradient with respect to the calibrator offsets.
//!
//! Reverse mode through the three stages: the time-domain loss gradient
//! `d` is pulled back through the real inverse transform, giving the bin
//! cotangent `(w_k / T) · rfft(d)_k`, and then accumulated per group against
//! `∂Y'/∂λα = A e^{j(P+λφ)}` and `∂Y'/∂λφ = j Y'`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::{bin_weight, irfft_rows, rfft_rows};
use super::{decompose, modulate, CalibratorParams, ForecastBlock, ParamGrads, ScaleSpace, Spectrum};
use crate::error::{Error, Result};
use crate::scaler::ScalerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mae,
    Mse,
}

impl LossKind {
    fn value(self, r: f64) -> f64 {
        match self {
            LossKind::Mae => r.abs(),
            LossKind::Mse => r * r,
        }
    }

    /// Derivative in the residual; MAE uses subgradient 0 at a zero residual.
    fn slope(self, r: f64) -> f64 {
        match self {
            LossKind::Mae => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::Mse => 2.0 * r,
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mae" | "l1" => Ok(LossKind::Mae),
            "mse" | "l2" => Ok(LossKind::Mse),
            other => Err(Error::config(format!("unknown loss kind '{other}'"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        })
    }
}

struct Forward {
    spectrum: Spectrum,
    modulated: Spectrum,
    amplitude: Array2<f64>,
    phase: Array2<f64>,
    loss: f64,
    /// dL/dz for the normalized calibrated output z.
    cotangent: Array2<f64>,
}

fn check_inputs(
    prediction: &ForecastBlock,
    target: &Array2<f64>,
    scaler: Option<&ScalerParams>,
    mask: Option<&Array2<bool>>,
) -> Result<()> {
    if target.dim() != prediction.values().dim() {
        return Err(Error::shape(format!(
            "target {:?} vs prediction {:?}",
            target.dim(),
            prediction.values().dim()
        )));
    }
    if let Some(m) = mask {
        if m.dim() != target.dim() {
            return Err(Error::shape(format!(
                "mask {:?} vs target {:?}",
                m.dim(),
                target.dim()
            )));
        }
    }
    if let Some(s) = scaler {
        if prediction.scale() != ScaleSpace::Normalized {
            return Err(Error::config(
                "a scaler was supplied but the prediction is not in normalized space",
            ));
        }
        s.check_nodes(prediction.n_nodes())?;
    }
    Ok(())
}

fn forward(
    prediction: &ForecastBlock,
    target: &Array2<f64>,
    params: &CalibratorParams,
    loss: LossKind,
    scaler: Option<&ScalerParams>,
    mask: Option<&Array2<bool>>,
) -> Result<Forward> {
    check_inputs(prediction, target, scaler, mask)?;
    let horizon = prediction.horizon();
    let bins = rfft_rows(prediction.values().view())?;
    let spectrum = Spectrum::new(bins, horizon, prediction.scale())?;
    params.check_shape(spectrum.n_nodes(), spectrum.m_bins())?;
    let ap = decompose(&spectrum);
    let modulated = modulate(&ap, params)?;
    let calibrated = irfft_rows(modulated.bins().view(), horizon)?;

    let mut total = 0.0;
    let mut count = 0usize;
    let mut cotangent = Array2::zeros(calibrated.dim());
    for ((n, t), &z) in calibrated.indexed_iter() {
        if mask.is_some_and(|m| !m[[n, t]]) {
            continue;
        }
        let (u, du_dz) = match scaler {
            Some(s) => (s.unscale(n, z), s.std_of(n)),
            None => (z, 1.0),
        };
        let r = u - target[[n, t]];
        total += loss.value(r);
        cotangent[[n, t]] = loss.slope(r) * du_dz;
        count += 1;
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        total *= inv;
        cotangent.mapv_inplace(|v| v * inv);
    }
    Ok(Forward {
        spectrum,
        modulated,
        amplitude: ap.amplitude,
        phase: ap.phase,
        loss: total,
        cotangent,
    })
}

/// Loss of `unscale(calibrate(prediction))` against `target`, averaged over
/// the unmasked entries (0 when every entry is masked).
pub fn calibrated_loss(
    prediction: &ForecastBlock,
    target: &Array2<f64>,
    params: &CalibratorParams,
    loss: LossKind,
    scaler: Option<&ScalerParams>,
    mask: Option<&Array2<bool>>,
) -> Result<f64> {
    forward(prediction, target, params, loss, scaler, mask).map(|f| f.loss)
}

/// Loss value and exact gradient with respect to every `λα[g][n]`, `λφ[g][n]`.
///
/// `prediction` is the backbone output (normalized when `scaler` is given),
/// `target` is in original units. Masked-out entries (`false`) are ignored.
pub fn calibrator_gradient(
    prediction: &ForecastBlock,
    target: &Array2<f64>,
    params: &CalibratorParams,
    loss: LossKind,
    scaler: Option<&ScalerParams>,
    mask: Option<&Array2<bool>>,
) -> Result<(f64, ParamGrads)> {
    let fwd = forward(prediction, target, params, loss, scaler, mask)?;
    let horizon = prediction.horizon();
    let cot_bins = rfft_rows(fwd.cotangent.view())?;
    let layout = params.layout();
    let inv_t = 1.0 / horizon as f64;

    let mut grads = ParamGrads::zeros_like(params);
    for ((n, k), &dy) in cot_bins.indexed_iter() {
        // cotangent of Re/Im of Y'_k packed as G = dL/dRe + j dL/dIm
        let g_k = dy * (bin_weight(k, horizon) * inv_t);
        let grp = layout.group_of(k);
        let shifted = fwd.phase[[n, k]] + params.lambda_phi[[grp, n]];
        let d_alpha = Complex64::from_polar(fwd.amplitude[[n, k]], shifted);
        let d_phi = Complex64::new(0.0, 1.0) * fwd.modulated.bins()[[n, k]];
        grads.d_lambda_alpha[[grp, n]] += (g_k.conj() * d_alpha).re;
        grads.d_lambda_phi[[grp, n]] += (g_k.conj() * d_phi).re;
    }
    debug_assert_eq!(fwd.spectrum.m_bins(), layout.m_bins());
    Ok((fwd.loss, grads))
}
