//! Output-perturbation bound for a given calibrator state.
//!
//! Per bin, `Y' - Y = Y · ((1+a)e^{jφ} - 1)` and
//! `|(1+a)e^{jφ} - 1| ≤ |a| + (1+|a|)|φ|`, so
//! `‖ΔY‖ ≤ (εα + εφ + εα·εφ)‖Y‖` for any magnitudes. The first-order form
//! `(εα + εφ)‖Y‖` is reported alongside.

use serde::Serialize;

use super::fft::{forward_rfft, inverse_rfft, parseval_norm};
use super::{decompose, modulate, CalibratorParams, ForecastBlock, Spectrum};
use crate::error::Result;

/// Round-off allowance when comparing a norm against a bound it can saturate.
const ROUNDOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// `‖ΔY‖` over the half spectrum (Parseval-weighted).
    pub delta_norm: f64,
    /// `‖y' - y‖₂` measured in the time domain.
    pub time_delta_norm: f64,
    /// `‖Y‖`, equal to `‖y‖₂`.
    pub spectrum_norm: f64,
    pub eps_alpha: f64,
    pub eps_phi: f64,
    /// `(εα + εφ + εα εφ)‖Y‖`.
    pub bound: f64,
    /// `(εα + εφ)‖Y‖`.
    pub first_order_bound: f64,
    pub satisfied: bool,
    pub first_order_satisfied: bool,
}

impl BoundReport {
    /// `delta_norm / first_order_bound`, or 0 when both vanish.
    pub fn first_order_slack(&self) -> f64 {
        if self.first_order_bound > 0.0 {
            self.delta_norm / self.first_order_bound
        } else if self.delta_norm > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// Measures `‖ΔY‖` for `params` applied to `block` and checks it against the bound.
pub fn perturbation_bound_check(
    block: &ForecastBlock,
    params: &CalibratorParams,
) -> Result<BoundReport> {
    perturbation_bound_check_scaled(block, params, 1.0)
}

/// Same as [`perturbation_bound_check`] with `ΔY` multiplied by `delta_scale`
/// before the comparison. Fault-injection hook for the verification battery.
#[doc(hidden)]
pub fn perturbation_bound_check_scaled(
    block: &ForecastBlock,
    params: &CalibratorParams,
    delta_scale: f64,
) -> Result<BoundReport> {
    let spectrum = forward_rfft(block)?;
    params.check_shape(spectrum.n_nodes(), spectrum.m_bins())?;
    let modulated = modulate(&decompose(&spectrum), params)?;
    let delta_bins = (modulated.bins() - spectrum.bins()).mapv(|z| z * delta_scale);
    let delta = Spectrum::new(delta_bins, spectrum.horizon(), spectrum.scale())?;

    let delta_norm = parseval_norm(&delta);
    let spectrum_norm = parseval_norm(&spectrum);
    let calibrated = inverse_rfft(&modulated, block.horizon())?;
    let time_delta_norm = (calibrated.values() - block.values())
        .mapv(|v| v * v)
        .sum()
        .sqrt();

    let eps_alpha = params.max_abs_alpha();
    let eps_phi = params.max_abs_phi();
    let bound = (eps_alpha + eps_phi + eps_alpha * eps_phi) * spectrum_norm;
    let first_order_bound = (eps_alpha + eps_phi) * spectrum_norm;
    let tol = ROUNDOFF * spectrum_norm.max(f64::MIN_POSITIVE);
    Ok(BoundReport {
        delta_norm,
        time_delta_norm,
        spectrum_norm,
        eps_alpha,
        eps_phi,
        bound,
        first_order_bound,
        satisfied: delta_norm <= bound * (1.0 + ROUNDOFF) + tol,
        first_order_satisfied: delta_norm <= first_order_bound * (1.0 + ROUNDOFF) + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ScaleSpace;
    use ndarray::Array2;

    #[test]
    fn zero_params_have_zero_delta() {
        let block = ForecastBlock::new(
            Array2::from_shape_fn((2, 12), |(n, t)| (n * 12 + t) as f64 * 0.3 - 2.0),
            ScaleSpace::Normalized,
        )
        .unwrap();
        let p = CalibratorParams::for_horizon(12, 4, 2).unwrap();
        let r = perturbation_bound_check(&block, &p).unwrap();
        assert!(r.delta_norm < 1e-12);
        assert_eq!(r.bound, 0.0);
        assert!(r.satisfied);
    }

    #[test]
    fn pure_scaling_saturates_alpha() {
        let block = ForecastBlock::new(
            Array2::from_shape_fn((1, 12), |(_, t)| (t as f64 * 0.7).sin() + 0.2 * t as f64),
            ScaleSpace::Normalized,
        )
        .unwrap();
        let mut p = CalibratorParams::for_horizon(12, 1, 1).unwrap();
        p.lambda_alpha[[0, 0]] = 0.01;
        let r = perturbation_bound_check(&block, &p).unwrap();
        assert!((r.delta_norm - 0.01 * r.spectrum_norm).abs() <= 1e-12 * r.spectrum_norm);
        assert!((r.time_delta_norm - r.delta_norm).abs() <= 1e-12 * r.spectrum_norm);
        assert!(r.satisfied && r.first_order_satisfied);

        let broken = perturbation_bound_check_scaled(&block, &p, 2.0).unwrap();
        assert!(!broken.satisfied);
    }
}
