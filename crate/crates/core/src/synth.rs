//! Multi-tone synthetic series whose amplitude and phase drift linearly
//! once the test split begins.
//!
//! `x_n(t) = offset + Σ_k a_{n,k}(t) sin(2π f_k t + φ_{n,k}(t)) + ε`, with
//! `a_{n,k}(t) = a_k j_n (1 + amp_drift_rate · τ)` and
//! `φ_{n,k}(t) = φ_k + ψ_{n,k} + phase_drift_rate · τ`, where
//! `τ = max(0, t - test_start)`. `j_n` and `ψ_{n,k}` are per-node jitters.

use std::f64::consts::PI;
use std::time::Duration;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SeriesTensor;
use crate::windows::SplitSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Cycles per time step; must be in `(0, 0.5]`.
    pub freq: f64,
    pub base_amp: f64,
    pub base_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_nodes: usize,
    pub t_total: usize,
    pub tones: Vec<Tone>,
    /// Relative amplitude change per step after the test boundary.
    pub amp_drift_rate: f64,
    /// Phase change (radians) per step after the test boundary.
    pub phase_drift_rate: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub offset: f64,
    /// Spread of per-node amplitude (relative) and phase (fraction of π) jitter.
    pub node_jitter: f64,
    pub split: SplitSpec,
    pub sampling_interval_secs: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_nodes: 8,
            t_total: 2000,
            tones: vec![Tone {
                freq: 1.0 / 12.0,
                base_amp: 10.0,
                base_phase: 0.0,
            }],
            amp_drift_rate: 0.0,
            phase_drift_rate: 0.0,
            noise_std: 0.0,
            seed: 0,
            offset: 50.0,
            node_jitter: 0.0,
            split: SplitSpec::default(),
            sampling_interval_secs: 300,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.t_total == 0 {
            return Err(Error::config("synthetic series needs nodes and time steps"));
        }
        if self.tones.is_empty() {
            return Err(Error::config("at least one tone is required"));
        }
        for tone in &self.tones {
            if !(tone.freq > 0.0 && tone.freq <= 0.5) {
                return Err(Error::config(format!(
                    "tone frequency {} cycles/step is not resolvable (need 0 < f <= 0.5)",
                    tone.freq
                )));
            }
            if !tone.base_amp.is_finite() || !tone.base_phase.is_finite() {
                return Err(Error::config("tone amplitude and phase must be finite"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("noise_std must be finite and non-negative"));
        }
        if !(self.node_jitter >= 0.0 && self.node_jitter.is_finite()) {
            return Err(Error::config("node_jitter must be finite and non-negative"));
        }
        if !self.amp_drift_rate.is_finite() || !self.phase_drift_rate.is_finite() || !self.offset.is_finite() {
            return Err(Error::config("drift rates and offset must be finite"));
        }
        self.split.validate()
    }

    /// First index of the test split, where drift starts.
    pub fn drift_start(&self) -> usize {
        self.split.bounds(self.t_total).test.start
    }
}

/// Deterministic realization of `spec` (single channel).
pub fn synth_generate(spec: &SynthSpec) -> Result<SeriesTensor> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.tones.len();
    let mut amp_scale = vec![1.0; spec.n_nodes];
    let mut phase_shift = vec![0.0; spec.n_nodes * k];
    for n in 0..spec.n_nodes {
        amp_scale[n] = 1.0 + spec.node_jitter * rng.random_range(-1.0..=1.0);
        for j in 0..k {
            phase_shift[n * k + j] = spec.node_jitter * PI * rng.random_range(-1.0..=1.0);
        }
    }
    let noise = (spec.noise_std > 0.0)
        .then(|| Normal::new(0.0, spec.noise_std).map_err(|e| Error::config(e.to_string())))
        .transpose()?;

    let start = spec.drift_start();
    let mut data = Array3::zeros((spec.n_nodes, spec.t_total, 1));
    for n in 0..spec.n_nodes {
        for t in 0..spec.t_total {
            let tau = t.saturating_sub(start) as f64;
            let amp_factor = 1.0 + spec.amp_drift_rate * tau;
            let phase_drift = spec.phase_drift_rate * tau;
            let mut x = spec.offset;
            for (j, tone) in spec.tones.iter().enumerate() {
                let amp = tone.base_amp * amp_scale[n] * amp_factor;
                let phase = tone.base_phase + phase_shift[n * k + j] + phase_drift;
                x += amp * (2.0 * PI * tone.freq * t as f64 + phase).sin();
            }
            if let Some(dist) = &noise {
                x += dist.sample(&mut rng);
            }
            data[[n, t, 0]] = x;
        }
    }
    Ok(SeriesTensor::new(data, None)?
        .with_sampling_interval(Duration::from_secs(spec.sampling_interval_secs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex64;

    /// Amplitude of frequency `f` in `x[range]` by direct projection.
    fn tone_amplitude(x: &[f64], f: f64, start: usize) -> f64 {
        let z: Complex64 = x
            .iter()
            .enumerate()
            .map(|(i, &v)| Complex64::from_polar(v, -2.0 * PI * f * (start + i) as f64))
            .sum();
        2.0 * z.norm() / x.len() as f64
    }

    #[test]
    fn stationary_limit_keeps_tone_amplitude() {
        let spec = SynthSpec {
            n_nodes: 3,
            node_jitter: 0.3,
            ..SynthSpec::default()
        };
        let s = synth_generate(&spec).unwrap();
        let b = spec.split.bounds(spec.t_total);
        for n in 0..3 {
            let row = s.target_rows(0..spec.t_total).row(n).to_vec();
            let train = tone_amplitude(&row[b.train.start..b.train.start + 600], 1.0 / 12.0, b.train.start);
            let test = tone_amplitude(&row[b.test.start..b.test.start + 396], 1.0 / 12.0, b.test.start);
            assert!((train - test).abs() < 1e-9, "node {n}: {train} vs {test}");
        }
    }

    #[test]
    fn amplitude_drift_grows_across_test() {
        let spec = SynthSpec {
            n_nodes: 1,
            amp_drift_rate: 1.0 / 400.0,
            ..SynthSpec::default()
        };
        let s = synth_generate(&spec).unwrap();
        let row = s.target_rows(0..spec.t_total).row(0).to_vec();
        let start = spec.drift_start();
        let mut prev = 0.0;
        for w in (start..spec.t_total - 24).step_by(24) {
            let a = tone_amplitude(&row[w..w + 24], 1.0 / 12.0, w);
            assert!(a > prev, "amplitude {a} at {w} did not grow past {prev}");
            prev = a;
        }
        assert!(prev > 1.8 * spec.tones[0].base_amp);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let spec = SynthSpec {
            noise_std: 0.5,
            node_jitter: 0.2,
            seed: 7,
            ..SynthSpec::default()
        };
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let other = SynthSpec { seed: 8, ..spec.clone() };
        assert_ne!(synth_generate(&spec).unwrap(), synth_generate(&other).unwrap());
    }

    #[test]
    fn aliased_tone_rejected() {
        let spec = SynthSpec {
            tones: vec![Tone {
                freq: 0.75,
                base_amp: 1.0,
                base_phase: 0.0,
            }],
            ..SynthSpec::default()
        };
        assert!(matches!(synth_generate(&spec).unwrap_err(), Error::InvalidConfig(_)));
    }
}
