//! Chronological splits and sliding-window sample construction.

use std::ops::Range;

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SeriesTensor;

/// Train/validation/test ratios. Each split length is `⌊ratio · T⌋`; the
/// rounding remainder goes to the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitBounds {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = Self { train, val, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config(format!("split ratios {parts:?} must lie in [0, 1]")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split ratios {parts:?} must sum to 1")));
        }
        Ok(())
    }

    pub fn bounds(&self, total: usize) -> SplitBounds {
        let train_len = (self.train * total as f64).floor() as usize;
        let val_len = (self.val * total as f64).floor() as usize;
        let train_end = train_len.min(total);
        let val_end = (train_end + val_len).min(total);
        SplitBounds {
            train: 0..train_end,
            val: train_end..val_end,
            test: val_end..total,
        }
    }
}

/// One stream sample: an input window and the label that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// `N × T_h × C`, original units.
    pub input: Array3<f64>,
    /// `N × T_f`, target channel, original units.
    pub label: Array2<f64>,
    /// `true` where the label is observed; `None` when fully observed.
    pub label_mask: Option<Array2<bool>>,
    /// Series index of the first input step.
    pub origin: usize,
}

impl WindowSample {
    pub fn n_nodes(&self) -> usize {
        self.input.dim().0
    }

    pub fn lookback(&self) -> usize {
        self.input.dim().1
    }

    pub fn horizon(&self) -> usize {
        self.label.ncols()
    }

    /// Target channel of the input window, `N × T_h`.
    pub fn target_input(&self) -> Array2<f64> {
        self.input.slice(s![.., .., 0]).to_owned()
    }

    /// Last series index covered by the input window.
    pub fn input_end(&self) -> usize {
        self.origin + self.lookback() - 1
    }

    /// Last series index covered by the label.
    pub fn label_end(&self) -> usize {
        self.origin + self.lookback() + self.horizon() - 1
    }

    pub fn observed_label_count(&self) -> usize {
        match &self.label_mask {
            Some(m) => m.iter().filter(|&&b| b).count(),
            None => self.label.len(),
        }
    }
}

/// Number of stride-1 windows in a segment of length `len`.
pub fn window_count(len: usize, lookback: usize, horizon: usize) -> usize {
    (len + 1).saturating_sub(lookback + horizon)
}

/// All stride-1 windows lying entirely inside `segment`, in origin order.
pub fn make_windows(
    series: &SeriesTensor,
    lookback: usize,
    horizon: usize,
    segment: Range<usize>,
) -> Result<Vec<WindowSample>> {
    if lookback == 0 || horizon == 0 {
        return Err(Error::config("lookback and horizon must be positive"));
    }
    if segment.end > series.len() {
        return Err(Error::config(format!(
            "segment {segment:?} exceeds series length {}",
            series.len()
        )));
    }
    if segment.len() < lookback + horizon {
        return Err(Error::config(format!(
            "segment of length {} is shorter than lookback + horizon = {}",
            segment.len(),
            lookback + horizon
        )));
    }
    let count = window_count(segment.len(), lookback, horizon);
    let data = series.data();
    let mut out = Vec::with_capacity(count);
    for origin in segment.start..segment.start + count {
        let label_range = origin + lookback..origin + lookback + horizon;
        let label = data.slice(s![.., label_range.clone(), 0]).to_owned();
        let label_mask = series.mask().and_then(|m| {
            let lm = m.slice(s![.., label_range.clone(), 0]).to_owned();
            (!lm.iter().all(|&b| b)).then_some(lm)
        });
        out.push(WindowSample {
            input: data.slice(s![.., origin..origin + lookback, ..]).to_owned(),
            label,
            label_mask,
            origin,
        });
    }
    Ok(out)
}
