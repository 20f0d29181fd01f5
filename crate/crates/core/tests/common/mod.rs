#![allow(dead_code)]

use ndarray::{Array2, Array3};
use sttc_core::spectral::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sttc_core::scaler::ScalerParams;
use sttc_core::spectral::{CalibratorParams, ForecastBlock, ScaleSpace};
use sttc_core::windows::WindowSample;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_block(rng: &mut ChaCha8Rng, n: usize, t: usize, scale: ScaleSpace) -> ForecastBlock {
    let v = Array2::from_shape_fn((n, t), |_| rng.random_range(-3.0..3.0));
    ForecastBlock::new(v, scale).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, t: usize, g: usize, n: usize, bound: f64) -> CalibratorParams {
    let mut p = CalibratorParams::for_horizon(t, g, n).unwrap();
    p.lambda_alpha.mapv_inplace(|_| rng.random_range(-bound..=bound));
    p.lambda_phi.mapv_inplace(|_| rng.random_range(-bound..=bound));
    p
}

pub fn random_scaler(rng: &mut ChaCha8Rng, n: usize) -> ScalerParams {
    ScalerParams::per_node(
        (0..n).map(|_| rng.random_range(-20.0..20.0)).collect(),
        (0..n).map(|_| rng.random_range(0.5..5.0)).collect(),
    )
    .unwrap()
}

/// Textbook O(T²) DFT of one real row, bins `0..=T/2`.
pub fn naive_rdft(row: &[f64]) -> Vec<Complex64> {
    let t = row.len();
    (0..=t / 2)
        .map(|k| {
            row.iter()
                .enumerate()
                .map(|(n, &x)| {
                    let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / t as f64;
                    Complex64::from_polar(x, ang)
                })
                .sum()
        })
        .collect()
}

/// Real signal from half-spectrum bins: the hermitian extension's inverse DFT.
/// DC and (even T) Nyquist contribute only their real part.
pub fn naive_irdft(bins: &[Complex64], t: usize) -> Vec<f64> {
    (0..t)
        .map(|n| {
            let mut acc = 0.0;
            for (k, b) in bins.iter().enumerate() {
                let ang = 2.0 * std::f64::consts::PI * (k * n) as f64 / t as f64;
                let edge = k == 0 || (t.is_multiple_of(2) && k == t / 2);
                if edge {
                    acc += b.re * ang.cos();
                } else {
                    acc += 2.0 * (b * Complex64::from_polar(1.0, ang)).re;
                }
            }
            acc / t as f64
        })
        .collect()
}

/// Stream samples cut from `rows` (`N × L`), all with the given lookback/horizon.
pub fn windows_from_rows(rows: &Array2<f64>, lookback: usize, horizon: usize) -> Vec<WindowSample> {
    let (n, len) = rows.dim();
    (0..=len - lookback - horizon)
        .map(|o| WindowSample {
            input: Array3::from_shape_fn((n, lookback, 1), |(i, t, _)| rows[[i, o + t]]),
            label: Array2::from_shape_fn((n, horizon), |(i, h)| rows[[i, o + lookback + h]]),
            label_mask: None,
            origin: o,
        })
        .collect()
}
