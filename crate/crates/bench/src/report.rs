//! JSON report types and the baseline/calibrated comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sttc_core::metrics::MetricsReport;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mae: Option<Stat>,
    pub rmse: Option<Stat>,
    pub mape_percent: Option<Stat>,
}

impl Aggregate {
    pub fn over(runs: &[SeedRun]) -> Self {
        let collect = |f: fn(&MetricsReport) -> Option<f64>| -> Option<Stat> {
            let v: Option<Vec<f64>> = runs.iter().map(|r| f(&r.metrics)).collect();
            v.and_then(|v| Stat::of(&v))
        };
        Aggregate {
            mae: collect(|m| m.mae),
            rmse: collect(|m| m.rmse),
            mape_percent: collect(|m| m.mape_percent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorSummary {
    pub updates: usize,
    pub skipped_updates: usize,
    pub leaked_updates: usize,
    pub param_count: usize,
    pub max_abs_alpha: f64,
    pub max_abs_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub data_sha256: String,
    pub test_windows: usize,
    pub metrics: MetricsReport,
    pub calibrator: Option<CalibratorSummary>,
}

/// Per-step overhead of calibration, in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub steps: usize,
    pub calibrate_mean_us: f64,
    pub calibrate_p99_us: f64,
    pub update_mean_us: f64,
    pub update_p99_us: f64,
    pub overhead_mean_us: f64,
    pub overhead_max_us: f64,
    pub stride_secs: Option<f64>,
    pub steps_over_stride: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    /// `calibrate` and `update` are per-step durations in seconds.
    pub fn from_samples(calibrate: &[f64], update: &[f64], stride_secs: Option<f64>) -> Self {
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let sorted = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s
        };
        let total: Vec<f64> = calibrate.iter().zip(update).map(|(a, b)| a + b).collect();
        let us = 1e6;
        LatencyStats {
            steps: total.len(),
            calibrate_mean_us: mean(calibrate) * us,
            calibrate_p99_us: percentile(&sorted(calibrate), 0.99) * us,
            update_mean_us: mean(update) * us,
            update_p99_us: percentile(&sorted(update), 0.99) * us,
            overhead_mean_us: mean(&total) * us,
            overhead_max_us: total.iter().copied().fold(0.0, f64::max) * us,
            stride_secs,
            steps_over_stride: stride_secs.map_or(0, |s| total.iter().filter(|&&t| t > s).count()),
        }
    }
}

/// Wall-clock facts that differ between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub timestamp_unix_ms: u128,
    pub wall_seconds: f64,
    /// One entry per seed; absent when calibration is off.
    pub latency: Vec<LatencyStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ttc: bool,
    pub fingerprint: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedRun>,
    pub aggregate: Aggregate,
    pub runtime: Runtime,
}

impl RunReport {
    /// The report without its `runtime` section; equal for equal config and seed.
    pub fn deterministic_json(&self) -> CliResult<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("runtime");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// `(base - cal) / base * 100`: positive means the calibrated run is better.
pub fn delta_percent(base: f64, cal: f64) -> Option<f64> {
    if base == cal {
        Some(0.0)
    } else if base == 0.0 {
        None
    } else {
        Some((base - cal) / base * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub mape_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDelta {
    pub seed: u64,
    pub baseline_mae: Option<f64>,
    pub calibrated_mae: Option<f64>,
    pub delta_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub fingerprint: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub baseline_metrics: Aggregate,
    pub calibrated_metrics: Aggregate,
    pub delta_percent: Deltas,
    /// MAE delta per horizon step, averaged over seeds.
    pub per_horizon_mae_delta_percent: Vec<Option<f64>>,
    pub per_seed: Vec<SeedDelta>,
    pub latency: Vec<LatencyStats>,
}

fn mean_of(stat: &Option<Stat>) -> Option<f64> {
    stat.map(|s| s.mean)
}

fn both(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    a.zip(b).and_then(|(a, b)| delta_percent(a, b))
}

pub fn compare(baseline: &RunReport, calibrated: &RunReport) -> CliResult<ComparisonReport> {
    if baseline.fingerprint != calibrated.fingerprint {
        return Err(CliError::Config(format!(
            "config fingerprints differ ({} vs {})",
            baseline.fingerprint, calibrated.fingerprint
        )));
    }
    if baseline.seeds != calibrated.seeds {
        return Err(CliError::Config("reports cover different seeds".into()));
    }
    let (b, c) = (&baseline.aggregate, &calibrated.aggregate);
    let horizon = baseline.runs.first().map_or(0, |r| r.metrics.per_horizon.mae.len());
    let per_horizon = (0..horizon)
        .map(|h| {
            let pick = |runs: &[SeedRun]| -> Option<f64> {
                let v: Option<Vec<f64>> = runs
                    .iter()
                    .map(|r| r.metrics.per_horizon.mae.get(h).copied().flatten())
                    .collect();
                v.and_then(|v| Stat::of(&v)).map(|s| s.mean)
            };
            both(pick(&baseline.runs), pick(&calibrated.runs))
        })
        .collect();
    let per_seed = baseline
        .runs
        .iter()
        .zip(&calibrated.runs)
        .map(|(rb, rc)| SeedDelta {
            seed: rb.seed,
            baseline_mae: rb.metrics.mae,
            calibrated_mae: rc.metrics.mae,
            delta_percent: both(rb.metrics.mae, rc.metrics.mae),
        })
        .collect();
    let mut config = calibrated.config.clone();
    config.remove("ttc");
    Ok(ComparisonReport {
        fingerprint: baseline.fingerprint.clone(),
        config,
        seeds: baseline.seeds.clone(),
        baseline_metrics: b.clone(),
        calibrated_metrics: c.clone(),
        delta_percent: Deltas {
            mae: both(mean_of(&b.mae), mean_of(&c.mae)),
            rmse: both(mean_of(&b.rmse), mean_of(&c.rmse)),
            mape_percent: both(mean_of(&b.mape_percent), mean_of(&c.mape_percent)),
        },
        per_horizon_mae_delta_percent: per_horizon,
        per_seed,
        latency: calibrated.runtime.latency.clone(),
    })
}

fn cell(stat: &Option<Stat>) -> String {
    match stat {
        Some(s) if s.std > 0.0 => format!("{:.4} ± {:.4}", s.mean, s.std),
        Some(s) => format!("{:.4}", s.mean),
        None => "n/a".into(),
    }
}

fn delta_cell(d: Option<f64>) -> String {
    match d {
        Some(d) if d > 0.0 => format!("{d:.2}% improved"),
        Some(d) if d < 0.0 => format!("{d:.2}% REGRESSION"),
        Some(_) => "0.00%".into(),
        None => "n/a".into(),
    }
}

/// Plain-text table of a comparison.
pub fn render_table(c: &ComparisonReport) -> String {
    let rows = [
        ("MAE", &c.baseline_metrics.mae, &c.calibrated_metrics.mae, c.delta_percent.mae),
        ("RMSE", &c.baseline_metrics.rmse, &c.calibrated_metrics.rmse, c.delta_percent.rmse),
        (
            "MAPE%",
            &c.baseline_metrics.mape_percent,
            &c.calibrated_metrics.mape_percent,
            c.delta_percent.mape_percent,
        ),
    ];
    let mut out = String::new();
    let _ = writeln!(out, "{:<7} {:>22} {:>22}  delta", "metric", "baseline", "calibrated");
    for (name, b, cal, d) in rows {
        let _ = writeln!(out, "{name:<7} {:>22} {:>22}  {}", cell(b), cell(cal), delta_cell(d));
    }
    let _ = writeln!(out, "seeds: {:?}  fingerprint: {}", c.seeds, &c.fingerprint[..12.min(c.fingerprint.len())]);
    out
}
