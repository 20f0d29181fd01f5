//! Frozen forecasters that stand in for a pretrained backbone.
//!
//! Every forecaster maps a normalized `N × T_h` target-channel window to a
//! normalized `N × T_f` [`ForecastBlock`]. Prediction never mutates state.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Cholesky, DMatrix};
use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scaler::{ScalerMode, ScalerParams};
use crate::series::SeriesTensor;
use crate::snapshot::write_atomically;
use crate::spectral::{ForecastBlock, ScaleSpace};
use crate::windows::WindowSample;

/// A frozen point forecaster.
pub trait Forecaster {
    fn lookback(&self) -> usize;

    fn horizon(&self) -> usize;

    /// `window` is the normalized target channel (`N × T_h`) whose first
    /// step sits at series index `origin`.
    fn predict(&self, window: ArrayView2<'_, f64>, origin: usize) -> Result<ForecastBlock>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    SeasonalNaive,
    HistoricalAverage,
    RidgeLinear,
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "seasonal_naive" => Ok(BackboneKind::SeasonalNaive),
            "historical_average" => Ok(BackboneKind::HistoricalAverage),
            "ridge_linear" | "ridge" => Ok(BackboneKind::RidgeLinear),
            other => Err(Error::config(format!("unknown backbone kind '{other}'"))),
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackboneKind::SeasonalNaive => "seasonal_naive",
            BackboneKind::HistoricalAverage => "historical_average",
            BackboneKind::RidgeLinear => "ridge_linear",
        })
    }
}

/// Samples per day for the given sampling interval, the default seasonal
/// period. Unknown or super-daily intervals fall back to 5-minute data (288).
pub fn default_period(interval: Option<std::time::Duration>) -> usize {
    match interval.map(|d| d.as_secs_f64()) {
        Some(secs) if secs > 0.0 && secs <= 86_400.0 => (86_400.0 / secs).round().max(1.0) as usize,
        _ => 288,
    }
}

fn check_window(window: &ArrayView2<'_, f64>, lookback: usize) -> Result<()> {
    if window.ncols() != lookback || window.nrows() == 0 {
        return Err(Error::shape(format!(
            "window {:?} does not have lookback {lookback}",
            window.dim()
        )));
    }
    Ok(())
}

/// `forecast[n][h] = history[n][T_h - p + (h mod p)]`; falls back to
/// repeating the last value when `p > T_h` (or `p == 0`).
pub fn seasonal_naive_predict(history: ArrayView2<'_, f64>, period: usize, horizon: usize) -> Array2<f64> {
    let (n, th) = history.dim();
    Array2::from_shape_fn((n, horizon), |(i, h)| {
        if period == 0 || period > th {
            history[[i, th - 1]]
        } else {
            history[[i, th - period + h % period]]
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalNaive {
    pub period: usize,
    pub lookback: usize,
    pub horizon: usize,
}

impl Forecaster for SeasonalNaive {
    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, window: ArrayView2<'_, f64>, _origin: usize) -> Result<ForecastBlock> {
        check_window(&window, self.lookback)?;
        ForecastBlock::new(
            seasonal_naive_predict(window, self.period, self.horizon),
            ScaleSpace::Normalized,
        )
    }
}

/// Per-node mean of each phase slot `i mod p`, fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalAverage {
    pub period: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// `N × p`, normalized.
    pub slot_means: Array2<f64>,
}

impl HistoricalAverage {
    pub fn fit(
        series: &SeriesTensor,
        train: Range<usize>,
        period: usize,
        scaler: &ScalerParams,
        lookback: usize,
        horizon: usize,
    ) -> Result<Self> {
        if period == 0 || period > train.len() {
            return Err(Error::config(format!(
                "period {period} does not fit in a training split of {} steps",
                train.len()
            )));
        }
        scaler.check_nodes(series.n_nodes())?;
        let n = series.n_nodes();
        let mut sums = Array2::<f64>::zeros((n, period));
        let mut counts = Array2::<usize>::zeros((n, period));
        for node in 0..n {
            for t in train.clone() {
                if let Some(v) = series.observed(node, t, 0) {
                    sums[[node, t % period]] += scaler.scale(node, v);
                    counts[[node, t % period]] += 1;
                }
            }
        }
        let slot_means = Array2::from_shape_fn((n, period), |ix| {
            if counts[ix] > 0 {
                sums[ix] / counts[ix] as f64
            } else {
                0.0
            }
        });
        Ok(Self {
            period,
            lookback,
            horizon,
            slot_means,
        })
    }
}

impl Forecaster for HistoricalAverage {
    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, window: ArrayView2<'_, f64>, origin: usize) -> Result<ForecastBlock> {
        check_window(&window, self.lookback)?;
        if window.nrows() != self.slot_means.nrows() {
            return Err(Error::shape(format!(
                "model fitted on {} nodes, window has {}",
                self.slot_means.nrows(),
                window.nrows()
            )));
        }
        let first = origin + self.lookback;
        let values = Array2::from_shape_fn((window.nrows(), self.horizon), |(n, h)| {
            self.slot_means[[n, (first + h) % self.period]]
        });
        ForecastBlock::new(values, ScaleSpace::Normalized)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeMode {
    /// One coefficient matrix, rows pooled over nodes.
    Shared,
    PerNode,
}

impl FromStr for RidgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shared" => Ok(RidgeMode::Shared),
            "per_node" | "per-node" => Ok(RidgeMode::PerNode),
            other => Err(Error::config(format!("unknown ridge mode '{other}'"))),
        }
    }
}

impl fmt::Display for RidgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RidgeMode::Shared => "shared",
            RidgeMode::PerNode => "per_node",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeOptions {
    pub penalty: f64,
    pub mode: RidgeMode,
    /// Cap on training windows; a seeded random subset is used above it.
    pub max_windows: Option<usize>,
    pub seed: u64,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            penalty: 1e-3,
            mode: RidgeMode::Shared,
            max_windows: None,
            seed: 0,
        }
    }
}

/// Solves `(XᵀX + αI) W = XᵀY` by Cholesky factorization.
///
/// `x` is `rows × d`, `y` is `rows × k`; returns `d × k`.
pub fn solve_ridge(x: &Array2<f64>, y: &Array2<f64>, penalty: f64) -> Result<Array2<f64>> {
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(Error::config(format!("ridge penalty must be >= 0, got {penalty}")));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::shape(format!(
            "design has {} rows, targets have {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let d = x.ncols();
    let mut gram = x.t().dot(x);
    for i in 0..d {
        gram[[i, i]] += penalty;
    }
    let rhs = x.t().dot(y);
    let max_diag = (0..d).map(|i| gram[[i, i]]).fold(0.0, f64::max);
    let a = DMatrix::from_fn(d, d, |i, j| gram[[i, j]]);
    let singular = || {
        Error::SingularSystem(format!(
            "normal equations are not positive definite (penalty {penalty}); use a penalty > 0"
        ))
    };
    let chol = Cholesky::new(a).ok_or_else(singular)?;
    let l = chol.l_dirty();
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot.is_nan() || min_pivot <= 1e-12 * max_diag.max(f64::MIN_POSITIVE) {
        return Err(singular());
    }
    let b = DMatrix::from_fn(d, rhs.ncols(), |i, j| rhs[[i, j]]);
    let w = chol.solve(&b);
    Ok(Array2::from_shape_fn((d, rhs.ncols()), |(i, j)| w[(i, j)]))
}

/// Affine map from a normalized `T_h` window to a normalized `T_f` forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeLinear {
    pub lookback: usize,
    pub horizon: usize,
    pub penalty: f64,
    pub mode: RidgeMode,
    /// `(T_h + 1) × T_f` each (last row is the bias); one entry when shared.
    pub coefficients: Vec<Array2<f64>>,
}

impl RidgeLinear {
    pub fn fit(windows: &[WindowSample], scaler: &ScalerParams, options: &RidgeOptions) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::config("no training windows for ridge"))?;
        let (n, th, tf) = (first.n_nodes(), first.lookback(), first.horizon());
        if windows.len() < th {
            return Err(Error::config(format!(
                "ridge needs at least {th} training windows, got {}",
                windows.len()
            )));
        }
        scaler.check_nodes(n)?;
        let chosen: Vec<&WindowSample> = match options.max_windows {
            Some(cap) if cap < windows.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                let mut idx = sample(&mut rng, windows.len(), cap).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| &windows[i]).collect()
            }
            _ => windows.iter().collect(),
        };
        let design = |nodes: &[usize]| -> Result<(Array2<f64>, Array2<f64>)> {
            let rows = chosen.len() * nodes.len();
            let mut x = Array2::zeros((rows, th + 1));
            let mut y = Array2::zeros((rows, tf));
            let mut r = 0;
            for w in &chosen {
                if w.lookback() != th || w.horizon() != tf || w.n_nodes() != n {
                    return Err(Error::shape("training windows differ in shape"));
                }
                for &node in nodes {
                    for t in 0..th {
                        x[[r, t]] = scaler.scale(node, w.input[[node, t, 0]]);
                    }
                    x[[r, th]] = 1.0;
                    for h in 0..tf {
                        // masked labels were forward-filled; fine for a stand-in backbone
                        y[[r, h]] = scaler.scale(node, w.label[[node, h]]);
                    }
                    r += 1;
                }
            }
            Ok((x, y))
        };
        let coefficients = match options.mode {
            RidgeMode::Shared => {
                let all: Vec<usize> = (0..n).collect();
                let (x, y) = design(&all)?;
                vec![solve_ridge(&x, &y, options.penalty)?]
            }
            RidgeMode::PerNode => (0..n)
                .map(|node| {
                    let (x, y) = design(&[node])?;
                    solve_ridge(&x, &y, options.penalty)
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self {
            lookback: th,
            horizon: tf,
            penalty: options.penalty,
            mode: options.mode,
            coefficients,
        })
    }
}

impl Forecaster for RidgeLinear {
    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, window: ArrayView2<'_, f64>, _origin: usize) -> Result<ForecastBlock> {
        check_window(&window, self.lookback)?;
        if self.mode == RidgeMode::PerNode && window.nrows() != self.coefficients.len() {
            return Err(Error::shape(format!(
                "model fitted on {} nodes, window has {}",
                self.coefficients.len(),
                window.nrows()
            )));
        }
        let th = self.lookback;
        let mut out = Array2::zeros((window.nrows(), self.horizon));
        for (node, (row, mut dst)) in window.outer_iter().zip(out.outer_iter_mut()).enumerate() {
            let w = match self.mode {
                RidgeMode::Shared => &self.coefficients[0],
                RidgeMode::PerNode => &self.coefficients[node],
            };
            for h in 0..self.horizon {
                let mut acc = w[[th, h]];
                for t in 0..th {
                    acc += row[t] * w[[t, h]];
                }
                dst[h] = acc;
            }
        }
        ForecastBlock::new(out, ScaleSpace::Normalized)
    }
}

/// Any of the bundled forecasters.
#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    SeasonalNaive(SeasonalNaive),
    HistoricalAverage(HistoricalAverage),
    Ridge(RidgeLinear),
}

impl Backbone {
    pub fn kind(&self) -> BackboneKind {
        match self {
            Backbone::SeasonalNaive(_) => BackboneKind::SeasonalNaive,
            Backbone::HistoricalAverage(_) => BackboneKind::HistoricalAverage,
            Backbone::Ridge(_) => BackboneKind::RidgeLinear,
        }
    }

    fn inner(&self) -> &dyn Forecaster {
        match self {
            Backbone::SeasonalNaive(m) => m,
            Backbone::HistoricalAverage(m) => m,
            Backbone::Ridge(m) => m,
        }
    }
}

impl Forecaster for Backbone {
    fn lookback(&self) -> usize {
        self.inner().lookback()
    }

    fn horizon(&self) -> usize {
        self.inner().horizon()
    }

    fn predict(&self, window: ArrayView2<'_, f64>, origin: usize) -> Result<ForecastBlock> {
        self.inner().predict(window, origin)
    }
}

const BACKBONE_MAGIC: &[u8; 8] = b"STTCBK\0\0";
const BACKBONE_VERSION: u32 = 1;

/// A fitted backbone together with the scaler it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedBackbone {
    pub backbone: Backbone,
    pub scaler: ScalerParams,
}

fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    w.write_u32::<LittleEndian>(m.nrows() as u32)?;
    w.write_u32::<LittleEndian>(m.ncols() as u32)?;
    for &v in m.iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    let len = rows
        .checked_mul(cols)
        .filter(|&l| l <= 1 << 28)
        .ok_or_else(|| Error::Format(format!("matrix {rows}x{cols} too large")))?;
    let mut v = vec![0.0; len];
    r.read_f64_into::<LittleEndian>(&mut v)?;
    Array2::from_shape_vec((rows, cols), v).map_err(|e| Error::Format(e.to_string()))
}

fn read_vec<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 28 {
        return Err(Error::Format(format!("vector of {len} entries too large")));
    }
    let mut v = vec![0.0; len];
    r.read_f64_into::<LittleEndian>(&mut v)?;
    Ok(v)
}

impl FittedBackbone {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(BACKBONE_MAGIC)?;
        w.write_u32::<LittleEndian>(BACKBONE_VERSION)?;
        let (tag, lookback, horizon) = match &self.backbone {
            Backbone::SeasonalNaive(m) => (0u8, m.lookback, m.horizon),
            Backbone::HistoricalAverage(m) => (1u8, m.lookback, m.horizon),
            Backbone::Ridge(m) => (2u8, m.lookback, m.horizon),
        };
        w.write_u8(tag)?;
        w.write_u32::<LittleEndian>(lookback as u32)?;
        w.write_u32::<LittleEndian>(horizon as u32)?;
        match &self.backbone {
            Backbone::SeasonalNaive(m) => w.write_u32::<LittleEndian>(m.period as u32)?,
            Backbone::HistoricalAverage(m) => {
                w.write_u32::<LittleEndian>(m.period as u32)?;
                write_matrix(w, &m.slot_means)?;
            }
            Backbone::Ridge(m) => {
                w.write_f64::<LittleEndian>(m.penalty)?;
                w.write_u8(match m.mode {
                    RidgeMode::Shared => 0,
                    RidgeMode::PerNode => 1,
                })?;
                w.write_u32::<LittleEndian>(m.coefficients.len() as u32)?;
                for c in &m.coefficients {
                    write_matrix(w, c)?;
                }
            }
        }
        w.write_u8(match self.scaler.mode() {
            ScalerMode::Global => 0,
            ScalerMode::PerNode => 1,
        })?;
        w.write_u32::<LittleEndian>(self.scaler.means().len() as u32)?;
        for &v in self.scaler.means() {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_u32::<LittleEndian>(self.scaler.stds().len() as u32)?;
        for &v in self.scaler.stds() {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BACKBONE_MAGIC {
            return Err(Error::Format("not a fitted-backbone file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != BACKBONE_VERSION {
            return Err(Error::Format(format!("unsupported backbone file version {version}")));
        }
        let tag = r.read_u8()?;
        let lookback = r.read_u32::<LittleEndian>()? as usize;
        let horizon = r.read_u32::<LittleEndian>()? as usize;
        let backbone = match tag {
            0 => Backbone::SeasonalNaive(SeasonalNaive {
                period: r.read_u32::<LittleEndian>()? as usize,
                lookback,
                horizon,
            }),
            1 => {
                let period = r.read_u32::<LittleEndian>()? as usize;
                let slot_means = read_matrix(r)?;
                if slot_means.ncols() != period || period == 0 {
                    return Err(Error::Format("slot table does not match period".into()));
                }
                Backbone::HistoricalAverage(HistoricalAverage {
                    period,
                    lookback,
                    horizon,
                    slot_means,
                })
            }
            2 => {
                let penalty = r.read_f64::<LittleEndian>()?;
                let mode = match r.read_u8()? {
                    0 => RidgeMode::Shared,
                    1 => RidgeMode::PerNode,
                    m => return Err(Error::Format(format!("unknown ridge mode tag {m}"))),
                };
                let count = r.read_u32::<LittleEndian>()? as usize;
                let mut coefficients = Vec::with_capacity(count.min(1 << 16));
                for _ in 0..count {
                    let c = read_matrix(r)?;
                    if c.dim() != (lookback + 1, horizon) {
                        return Err(Error::Format("ridge coefficients have the wrong shape".into()));
                    }
                    coefficients.push(c);
                }
                if coefficients.is_empty() {
                    return Err(Error::Format("ridge model without coefficients".into()));
                }
                Backbone::Ridge(RidgeLinear {
                    lookback,
                    horizon,
                    penalty,
                    mode,
                    coefficients,
                })
            }
            t => return Err(Error::Format(format!("unknown backbone tag {t}"))),
        };
        let mode = match r.read_u8()? {
            0 => ScalerMode::Global,
            1 => ScalerMode::PerNode,
            m => return Err(Error::Format(format!("unknown scaler mode tag {m}"))),
        };
        let mean = read_vec(r)?;
        let std = read_vec(r)?;
        let scaler = ScalerParams::from_parts(mode, mean, std)
            .map_err(|e| Error::Format(format!("bad scaler: {e}")))?;
        Ok(Self { backbone, scaler })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        write_atomically(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
