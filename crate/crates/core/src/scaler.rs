//! Z-score normalization fitted on the training split.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SeriesTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMode {
    Global,
    PerNode,
}

impl FromStr for ScalerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "global" => Ok(ScalerMode::Global),
            "per_node" | "per-node" => Ok(ScalerMode::PerNode),
            other => Err(Error::config(format!("unknown scaler mode '{other}'"))),
        }
    }
}

impl fmt::Display for ScalerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerMode::Global => "global",
            ScalerMode::PerNode => "per_node",
        })
    }
}

/// Mean and (population) standard deviation, either one pair for all nodes
/// or one pair per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    mode: ScalerMode,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl ScalerParams {
    pub fn global(mean: f64, std: f64) -> Result<Self> {
        Self::from_parts(ScalerMode::Global, vec![mean], vec![std])
    }

    pub fn per_node(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        Self::from_parts(ScalerMode::PerNode, mean, std)
    }

    pub fn from_parts(mode: ScalerMode, mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::shape("scaler mean/std length mismatch"));
        }
        if mode == ScalerMode::Global && mean.len() != 1 {
            return Err(Error::shape("global scaler holds exactly one mean/std pair"));
        }
        if let Some(s) = std.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::DegenerateSeries(format!(
                "standard deviation must be positive, got {s}"
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::DegenerateSeries("non-finite mean".into()));
        }
        Ok(Self { mode, mean, std })
    }

    /// Identity transform (mean 0, std 1).
    pub fn identity() -> Self {
        Self {
            mode: ScalerMode::Global,
            mean: vec![0.0],
            std: vec![1.0],
        }
    }

    pub fn mode(&self) -> ScalerMode {
        self.mode
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn stds(&self) -> &[f64] {
        &self.std
    }

    fn slot(&self, node: usize) -> usize {
        match self.mode {
            ScalerMode::Global => 0,
            ScalerMode::PerNode => node,
        }
    }

    pub fn mean_of(&self, node: usize) -> f64 {
        self.mean[self.slot(node)]
    }

    pub fn std_of(&self, node: usize) -> f64 {
        self.std[self.slot(node)]
    }

    pub fn scale(&self, node: usize, x: f64) -> f64 {
        let i = self.slot(node);
        (x - self.mean[i]) / self.std[i]
    }

    pub fn unscale(&self, node: usize, z: f64) -> f64 {
        let i = self.slot(node);
        z * self.std[i] + self.mean[i]
    }

    pub(crate) fn check_nodes(&self, n_nodes: usize) -> Result<()> {
        if self.mode == ScalerMode::PerNode && self.mean.len() != n_nodes {
            return Err(Error::shape(format!(
                "per-node scaler has {} nodes, data has {n_nodes}",
                self.mean.len()
            )));
        }
        Ok(())
    }

    /// Scales an `N × T` matrix row by row.
    pub fn scale_rows(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_nodes(rows.nrows())?;
        let mut out = rows.clone();
        for (n, mut row) in out.outer_iter_mut().enumerate() {
            row.mapv_inplace(|x| self.scale(n, x));
        }
        Ok(out)
    }

    pub fn unscale_rows(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_nodes(rows.nrows())?;
        let mut out = rows.clone();
        for (n, mut row) in out.outer_iter_mut().enumerate() {
            row.mapv_inplace(|z| self.unscale(n, z));
        }
        Ok(out)
    }
}

fn moments(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        count += 1;
        let delta = x - mean;
        mean += delta / count as f64;
        m2 += delta * (x - mean);
    }
    (count > 0).then(|| (mean, (m2 / count as f64).sqrt()))
}

/// Fits the scaler on the observed target-channel values of `train`.
pub fn fit_scaler(series: &SeriesTensor, train: Range<usize>, mode: ScalerMode) -> Result<ScalerParams> {
    if train.is_empty() || train.end > series.len() {
        return Err(Error::config(format!(
            "training range {train:?} is empty or exceeds series length {}",
            series.len()
        )));
    }
    let node_values = |n: usize| {
        let train = train.clone();
        train.filter_map(move |t| series.observed(n, t, 0))
    };
    let empty = || Error::DegenerateSeries("training split has no observed values".into());
    match mode {
        ScalerMode::Global => {
            let (mean, std) = moments((0..series.n_nodes()).flat_map(node_values)).ok_or_else(empty)?;
            if std <= 0.0 {
                return Err(Error::DegenerateSeries(
                    "training split has zero variance".into(),
                ));
            }
            ScalerParams::global(mean, std)
        }
        ScalerMode::PerNode => {
            let mut means = Vec::with_capacity(series.n_nodes());
            let mut stds = Vec::with_capacity(series.n_nodes());
            for n in 0..series.n_nodes() {
                let (mean, std) = moments(node_values(n)).ok_or_else(empty)?;
                if std <= 0.0 {
                    return Err(Error::DegenerateSeries(format!(
                        "node {n} has zero variance on the training split"
                    )));
                }
                means.push(mean);
                stds.push(std);
            }
            ScalerParams::per_node(means, stds)
        }
    }
}
