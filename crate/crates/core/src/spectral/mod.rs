//! Spectral-domain calibrator: per-node, per-frequency-group amplitude and
//! phase offsets applied to the half spectrum of a forecast.
//!
//! The calibrated forecast is
//! `irfft(A ⊙ (1 + λα[g]) ⊙ exp(j (P + λφ[g])))` where `A`, `P` are the
//! amplitude and phase of `rfft(ŷ)` and `g` is the frequency group of a bin.

mod bound;
mod fft;
mod gradient;

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;

use ndarray::Array2;
pub use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bound::{perturbation_bound_check, perturbation_bound_check_scaled, BoundReport};
pub use fft::{
    bin_count, bin_weight, forward_rfft, inverse_rfft, parseval_norm, visible_part,
};
pub use gradient::{calibrated_loss, calibrator_gradient, LossKind};

/// Whether values are in z-scored space or in the dataset's units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSpace {
    Normalized,
    Original,
}

/// A single-sample forecast, `N` nodes by `T` horizon steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBlock {
    values: Array2<f64>,
    scale: ScaleSpace,
}

impl ForecastBlock {
    pub fn new(values: Array2<f64>, scale: ScaleSpace) -> Result<Self> {
        let (n, t) = values.dim();
        if n == 0 || t == 0 {
            return Err(Error::shape(format!("empty forecast block {n}x{t}")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::shape(format!(
                "non-finite forecast value at node {}, step {}",
                pos / t,
                pos % t
            )));
        }
        Ok(Self { values, scale })
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn scale(&self) -> ScaleSpace {
        self.scale
    }
}

/// Half spectrum (`N × M`, `M = ⌊T/2⌋ + 1`) of a length-`T` real block.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Array2<Complex64>,
    horizon: usize,
    scale: ScaleSpace,
}

impl Spectrum {
    pub fn new(bins: Array2<Complex64>, horizon: usize, scale: ScaleSpace) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidHorizon(format!(
                "need at least 2 time steps, got {horizon}"
            )));
        }
        if bins.ncols() != bin_count(horizon) {
            return Err(Error::shape(format!(
                "{} bins for horizon {horizon}, expected {}",
                bins.ncols(),
                bin_count(horizon)
            )));
        }
        Ok(Self {
            bins,
            horizon,
            scale,
        })
    }

    pub fn bins(&self) -> &Array2<Complex64> {
        &self.bins
    }

    pub fn n_nodes(&self) -> usize {
        self.bins.nrows()
    }

    pub fn m_bins(&self) -> usize {
        self.bins.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn scale(&self) -> ScaleSpace {
        self.scale
    }
}

/// Polar form of a [`Spectrum`]. Phases lie in `(-π, π]`; empty bins have phase 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudePhase {
    pub amplitude: Array2<f64>,
    pub phase: Array2<f64>,
    horizon: usize,
    scale: ScaleSpace,
}

impl AmplitudePhase {
    pub fn n_nodes(&self) -> usize {
        self.amplitude.nrows()
    }

    pub fn m_bins(&self) -> usize {
        self.amplitude.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Element-wise modulus and argument of the spectrum.
pub fn decompose(spectrum: &Spectrum) -> AmplitudePhase {
    let amplitude = spectrum.bins.mapv(|z| z.norm());
    let phase = spectrum.bins.mapv(|z| {
        if z.re == 0.0 && z.im == 0.0 {
            0.0
        } else {
            let p = z.arg();
            // atan2 yields -π for (-x, -0.0); fold it onto the closed end.
            if p <= -PI {
                PI
            } else {
                p
            }
        }
    });
    AmplitudePhase {
        amplitude,
        phase,
        horizon: spectrum.horizon,
        scale: spectrum.scale,
    }
}

/// Partition of the `M` bins into `G` contiguous groups. The first `G - 1`
/// groups hold `⌊M/G⌋` bins each and the last one takes the remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    m_bins: usize,
    ranges: Vec<Range<usize>>,
    bin_group: Vec<usize>,
}

impl GroupLayout {
    /// Builds the layout, clamping the requested group count to `M`.
    pub fn new(m_bins: usize, n_groups: usize) -> Result<Self> {
        if m_bins == 0 {
            return Err(Error::InvalidHorizon("zero frequency bins".into()));
        }
        if n_groups == 0 {
            return Err(Error::config("at least one frequency group is required"));
        }
        let g = n_groups.min(m_bins);
        let size = m_bins / g;
        let ranges: Vec<_> = (0..g)
            .map(|i| {
                let end = if i + 1 == g { m_bins } else { (i + 1) * size };
                i * size..end
            })
            .collect();
        Self::from_ranges(m_bins, ranges)
    }

    /// Rebuilds a layout from explicit boundaries, checking that they tile `[0, M)`.
    pub fn from_ranges(m_bins: usize, ranges: Vec<Range<usize>>) -> Result<Self> {
        let mut expected = 0;
        for r in &ranges {
            if r.start != expected || r.end <= r.start {
                return Err(Error::config(format!(
                    "group ranges {ranges:?} do not tile [0, {m_bins})"
                )));
            }
            expected = r.end;
        }
        if expected != m_bins || ranges.is_empty() {
            return Err(Error::config(format!(
                "group ranges {ranges:?} do not tile [0, {m_bins})"
            )));
        }
        let mut bin_group = vec![0; m_bins];
        for (g, r) in ranges.iter().enumerate() {
            bin_group[r.clone()].fill(g);
        }
        Ok(Self {
            m_bins,
            ranges,
            bin_group,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.ranges.len()
    }

    pub fn m_bins(&self) -> usize {
        self.m_bins
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn group_of(&self, bin: usize) -> usize {
        self.bin_group[bin]
    }
}

impl fmt::Display for GroupLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self
            .ranges
            .iter()
            .map(|r| format!("[{}, {})", r.start, r.end))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Learnable offsets: `lambda_alpha` (amplitude, dimensionless) and
/// `lambda_phi` (phase, radians), both `G × N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorParams {
    pub lambda_alpha: Array2<f64>,
    pub lambda_phi: Array2<f64>,
    layout: GroupLayout,
}

impl CalibratorParams {
    /// Identity calibration: all offsets zero.
    pub fn zeros(layout: GroupLayout, n_nodes: usize) -> Self {
        let g = layout.n_groups();
        Self {
            lambda_alpha: Array2::zeros((g, n_nodes)),
            lambda_phi: Array2::zeros((g, n_nodes)),
            layout,
        }
    }

    /// Zero-initialized parameters for a forecast horizon and requested group count.
    pub fn for_horizon(horizon: usize, n_groups: usize, n_nodes: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidHorizon(format!(
                "need at least 2 time steps, got {horizon}"
            )));
        }
        let layout = GroupLayout::new(bin_count(horizon), n_groups)?;
        Ok(Self::zeros(layout, n_nodes))
    }

    pub fn from_parts(
        layout: GroupLayout,
        lambda_alpha: Array2<f64>,
        lambda_phi: Array2<f64>,
    ) -> Result<Self> {
        let g = layout.n_groups();
        if lambda_alpha.nrows() != g
            || lambda_phi.dim() != lambda_alpha.dim()
            || lambda_alpha.ncols() == 0
        {
            return Err(Error::shape(format!(
                "offset matrices {:?}/{:?} do not match {g} groups",
                lambda_alpha.dim(),
                lambda_phi.dim()
            )));
        }
        Ok(Self {
            lambda_alpha,
            lambda_phi,
            layout,
        })
    }

    pub fn layout(&self) -> &GroupLayout {
        &self.layout
    }

    pub fn n_nodes(&self) -> usize {
        self.lambda_alpha.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.layout.n_groups()
    }

    /// Total number of learnable scalars, `2·N·G`.
    pub fn param_count(&self) -> usize {
        self.lambda_alpha.len() + self.lambda_phi.len()
    }

    pub fn max_abs_alpha(&self) -> f64 {
        self.lambda_alpha.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_phi(&self) -> f64 {
        self.lambda_phi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean distance to `other` over all offsets.
    pub fn distance(&self, other: &CalibratorParams) -> f64 {
        let da = (&self.lambda_alpha - &other.lambda_alpha).mapv(|v| v * v).sum();
        let dp = (&self.lambda_phi - &other.lambda_phi).mapv(|v| v * v).sum();
        (da + dp).sqrt()
    }

    /// Clamps every offset into `[-eps, eps]`.
    pub fn clamp(&mut self, eps: f64) {
        self.lambda_alpha.mapv_inplace(|v| v.clamp(-eps, eps));
        self.lambda_phi.mapv_inplace(|v| v.clamp(-eps, eps));
    }

    pub(crate) fn check_shape(&self, n_nodes: usize, m_bins: usize) -> Result<()> {
        if self.n_nodes() != n_nodes {
            return Err(Error::shape(format!(
                "calibrator has {} nodes, forecast has {n_nodes}",
                self.n_nodes()
            )));
        }
        if self.layout.m_bins() != m_bins {
            return Err(Error::shape(format!(
                "calibrator expects {} bins, spectrum has {m_bins}",
                self.layout.m_bins()
            )));
        }
        Ok(())
    }
}

/// Gradient of a scalar loss with respect to [`CalibratorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub d_lambda_alpha: Array2<f64>,
    pub d_lambda_phi: Array2<f64>,
}

impl ParamGrads {
    pub fn zeros_like(params: &CalibratorParams) -> Self {
        Self {
            d_lambda_alpha: Array2::zeros(params.lambda_alpha.dim()),
            d_lambda_phi: Array2::zeros(params.lambda_phi.dim()),
        }
    }

    pub fn norm(&self) -> f64 {
        self.d_lambda_alpha
            .iter()
            .chain(self.d_lambda_phi.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.d_lambda_alpha
            .iter()
            .chain(self.d_lambda_phi.iter())
            .all(|v| v.is_finite())
    }

    /// Flattened `[alpha..., phi...]` view, row-major.
    pub fn to_vec(&self) -> Vec<f64> {
        self.d_lambda_alpha
            .iter()
            .chain(self.d_lambda_phi.iter())
            .copied()
            .collect()
    }
}

/// Applies the group-wise offsets to amplitude and phase and rebuilds the
/// complex half spectrum.
pub fn modulate(ap: &AmplitudePhase, params: &CalibratorParams) -> Result<Spectrum> {
    params.check_shape(ap.n_nodes(), ap.m_bins())?;
    let layout = params.layout();
    let mut bins = Array2::zeros(ap.amplitude.dim());
    for ((n, k), out) in bins.indexed_iter_mut() {
        let g = layout.group_of(k);
        let amp = ap.amplitude[[n, k]] * (1.0 + params.lambda_alpha[[g, n]]);
        let phase = ap.phase[[n, k]] + params.lambda_phi[[g, n]];
        *out = Complex64::from_polar(amp, phase);
    }
    Spectrum::new(bins, ap.horizon, ap.scale)
}

/// End-to-end calibration of one forecast block.
pub fn calibrate(block: &ForecastBlock, params: &CalibratorParams) -> Result<ForecastBlock> {
    let spectrum = forward_rfft(block)?;
    params.check_shape(spectrum.n_nodes(), spectrum.m_bins())?;
    let modulated = modulate(&decompose(&spectrum), params)?;
    inverse_rfft(&modulated, block.horizon())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single_group(horizon: usize, alpha: f64, phi: f64) -> CalibratorParams {
        let mut p = CalibratorParams::for_horizon(horizon, 1, 1).unwrap();
        p.lambda_alpha[[0, 0]] = alpha;
        p.lambda_phi[[0, 0]] = phi;
        p
    }

    fn spectrum_of(bins: Vec<Complex64>, horizon: usize) -> Spectrum {
        let m = bins.len();
        Spectrum::new(
            Array2::from_shape_vec((1, m), bins).unwrap(),
            horizon,
            ScaleSpace::Normalized,
        )
        .unwrap()
    }

    #[test]
    fn decompose_examples() {
        let ap = decompose(&spectrum_of(vec![c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)], 4));
        assert_eq!(ap.amplitude.row(0).to_vec(), vec![0.0, 2.0, 0.0]);
        assert_eq!(ap.phase.row(0).to_vec(), vec![0.0, 0.0, 0.0]);

        let ap = decompose(&spectrum_of(vec![c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0)], 4));
        assert_eq!(ap.amplitude[[0, 1]], 2.0);
        assert!((ap.phase[[0, 1]] - PI / 2.0).abs() < 1e-15);
        assert_eq!(ap.amplitude[[0, 2]], 3.0);
        assert_eq!(ap.phase[[0, 2]], PI);
    }

    #[test]
    fn negative_zero_imaginary_folds_to_pi() {
        let ap = decompose(&spectrum_of(vec![c(-3.0, -0.0), c(0.0, 0.0), c(0.0, 0.0)], 4));
        assert_eq!(ap.phase[[0, 0]], PI);
    }

    #[test]
    fn layout_examples() {
        let l = GroupLayout::new(7, 4).unwrap();
        assert_eq!(l.ranges(), &[0..1, 1..2, 2..3, 3..7]);
        assert_eq!(GroupLayout::new(7, 1).unwrap().ranges().to_vec(), vec![0..7]);
        let l = GroupLayout::new(3, 8).unwrap();
        assert_eq!(l.n_groups(), 3);
        assert_eq!(l.ranges(), &[0..1, 1..2, 2..3]);
        assert!(matches!(
            GroupLayout::new(0, 4).unwrap_err(),
            Error::InvalidHorizon(_)
        ));
    }

    #[test]
    fn layout_tiles_bins() {
        for m in 1..40 {
            for g in 1..12 {
                let l = GroupLayout::new(m, g).unwrap();
                let gg = g.min(m);
                assert_eq!(l.n_groups(), gg);
                let mut covered = vec![0u32; m];
                for (i, r) in l.ranges().iter().enumerate() {
                    if i + 1 < gg {
                        assert_eq!(r.len(), m / gg);
                    } else {
                        assert_eq!(r.len(), m - (gg - 1) * (m / gg));
                    }
                    for k in r.clone() {
                        covered[k] += 1;
                        assert_eq!(l.group_of(k), i);
                    }
                }
                assert!(covered.iter().all(|&c| c == 1));
            }
        }
    }

    #[test]
    fn bad_ranges_rejected() {
        assert!(GroupLayout::from_ranges(5, vec![0..2, 3..5]).is_err());
        assert!(GroupLayout::from_ranges(5, vec![0..2, 2..4]).is_err());
        assert!(GroupLayout::from_ranges(5, vec![]).is_err());
    }

    #[test]
    fn modulate_examples() {
        let ap = decompose(&spectrum_of(vec![c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)], 4));
        let scaled = modulate(&ap, &single_group(4, 0.5, 0.0)).unwrap();
        for (g, w) in scaled.bins().iter().zip([c(0.0, 0.0), c(3.0, 0.0), c(0.0, 0.0)]) {
            assert!((g - w).norm() < 1e-12);
        }
        let rotated = modulate(&ap, &single_group(4, 0.0, PI / 2.0)).unwrap();
        for (g, w) in rotated.bins().iter().zip([c(0.0, 0.0), c(0.0, 2.0), c(0.0, 0.0)]) {
            assert!((g - w).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_params_leave_spectrum_intact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals = Array2::from_shape_fn((3, 12), |_| rng.random_range(-5.0..5.0));
        let s = forward_rfft(&ForecastBlock::new(vals, ScaleSpace::Normalized).unwrap()).unwrap();
        let p = CalibratorParams::for_horizon(12, 4, 3).unwrap();
        let out = modulate(&decompose(&s), &p).unwrap();
        for (a, b) in out.bins().iter().zip(s.bins().iter()) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn calibrate_scales_cosine() {
        let block = ForecastBlock::new(array![[1.0, 0.0, -1.0, 0.0]], ScaleSpace::Original).unwrap();
        let out = calibrate(&block, &single_group(4, 0.5, 0.0)).unwrap();
        for (g, w) in out.values().iter().zip([1.5, 0.0, -1.5, 0.0]) {
            assert!((g - w).abs() < 1e-12);
        }
        assert_eq!(out.scale(), ScaleSpace::Original);
    }

    #[test]
    fn calibrate_rejects_mismatched_params() {
        let block = ForecastBlock::new(Array2::zeros((2, 12)), ScaleSpace::Normalized).unwrap();
        let wrong_nodes = CalibratorParams::for_horizon(12, 4, 3).unwrap();
        assert!(matches!(
            calibrate(&block, &wrong_nodes).unwrap_err(),
            Error::ShapeMismatch(_)
        ));
        let wrong_horizon = CalibratorParams::for_horizon(24, 4, 2).unwrap();
        assert!(matches!(
            calibrate(&block, &wrong_horizon).unwrap_err(),
            Error::ShapeMismatch(_)
        ));
    }

    #[test]
    fn non_finite_block_rejected() {
        assert!(ForecastBlock::new(array![[1.0, f64::NAN]], ScaleSpace::Normalized).is_err());
    }

    #[test]
    fn param_count_is_two_n_g() {
        let p = CalibratorParams::for_horizon(12, 4, 1000).unwrap();
        assert_eq!(p.param_count(), 8000);
        assert!(p.lambda_alpha.iter().all(|&v| v == 0.0));
    }
}
