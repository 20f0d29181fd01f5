//! Streaming test-time calibration for spatio-temporal forecasts.
//!
//! A frozen backbone forecaster is wrapped by a spectral calibrator that
//! rescales and phase-shifts groups of frequency bins per node. The offsets
//! are learned online, one gradient step per stream step, on past samples
//! whose labels have been fully observed.

pub mod backbone;
pub mod error;
pub mod metrics;
pub mod optim;
pub mod scaler;
pub mod seed;
pub mod series;
pub mod snapshot;
pub mod spectral;
pub mod stream;
pub mod synth;
pub mod windows;

pub use error::{Error, Result};
