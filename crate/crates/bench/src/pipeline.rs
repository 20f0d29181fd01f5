//! From config to metrics: load data, fit the backbone, stream the test split.

use std::time::Instant;

use ndarray::Array2;
use sha2::{Digest, Sha256};
use sttc_core::backbone::{
    default_period, Backbone, FittedBackbone, Forecaster, HistoricalAverage, RidgeLinear,
    RidgeOptions, SeasonalNaive, BackboneKind,
};
use sttc_core::metrics::{MetricsAccumulator, MetricsReport};
use sttc_core::optim::OptimizerState;
use sttc_core::scaler::fit_scaler;
use sttc_core::seed::{sub_seed, SeedComponent};
use sttc_core::series::{load_dataset, DatasetFormat, SeriesTensor};
use sttc_core::snapshot::CalibratorState;
use sttc_core::spectral::CalibratorParams;
use sttc_core::stream::{uncalibrated_forecast, EngineConfig, StreamEngine};
use sttc_core::synth::synth_generate;
use sttc_core::windows::{make_windows, SplitBounds};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{
    Aggregate, CalibratorSummary, LatencyStats, RunReport, Runtime, SeedRun,
};
use crate::synthspec::load_synth_spec;

pub struct Dataset {
    pub series: SeriesTensor,
    pub split: SplitBounds,
}

impl Dataset {
    pub fn sha256(&self) -> CliResult<String> {
        let mut bytes = Vec::new();
        self.series.write_binary(&mut bytes)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

/// The configured dataset, or the synthetic spec realized under `seed`.
pub fn load_data(cfg: &RunConfig, seed: u64) -> CliResult<Dataset> {
    let series = if let Some(spec) = &cfg.synth_spec {
        let mut spec = load_synth_spec(&cfg.resolve(spec))?;
        spec.seed = sub_seed(seed, SeedComponent::DataGen);
        synth_generate(&spec)?
    } else if let Some(path) = &cfg.dataset {
        let path = cfg.resolve(path);
        if !path.is_file() {
            return Err(CliError::Data(format!("dataset {} not found", path.display())));
        }
        let format = cfg.format.unwrap_or_else(|| DatasetFormat::from_path(&path));
        load_dataset(&path, format).map_err(|e| CliError::Data(e.to_string()))?
    } else {
        return Err(CliError::Config("either dataset or synth_spec must be set".into()));
    };
    let split = cfg.split.bounds(series.len());
    let need = cfg.lookback + cfg.horizon;
    for (name, seg) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if seg.len() < need {
            return Err(CliError::Data(format!(
                "{name} split has {} steps, windows need {need}",
                seg.len()
            )));
        }
    }
    Ok(Dataset { series, split })
}

/// Fits the scaler and backbone on the training split.
pub fn fit_backbone(cfg: &RunConfig, data: &Dataset, seed: u64) -> CliResult<FittedBackbone> {
    let train = data.split.train.clone();
    let scaler = fit_scaler(&data.series, train.clone(), cfg.scaler)?;
    let period = cfg
        .period
        .unwrap_or_else(|| default_period(data.series.sampling_interval()));
    let (th, tf) = (cfg.lookback, cfg.horizon);
    let backbone = match cfg.backbone {
        BackboneKind::SeasonalNaive => Backbone::SeasonalNaive(SeasonalNaive {
            period,
            lookback: th,
            horizon: tf,
        }),
        BackboneKind::HistoricalAverage => Backbone::HistoricalAverage(HistoricalAverage::fit(
            &data.series,
            train,
            period,
            &scaler,
            th,
            tf,
        )?),
        BackboneKind::RidgeLinear => {
            let windows = make_windows(&data.series, th, tf, train)?;
            let options = RidgeOptions {
                penalty: cfg.ridge_penalty,
                mode: cfg.ridge_mode,
                max_windows: cfg.ridge_max_windows,
                seed: sub_seed(seed, SeedComponent::RidgeShuffle),
            };
            Backbone::Ridge(RidgeLinear::fit(&windows, &scaler, &options)?)
        }
    };
    Ok(FittedBackbone { backbone, scaler })
}

/// Loads `backbone_file` when configured, otherwise fits in process.
pub fn obtain_backbone(cfg: &RunConfig, data: &Dataset, seed: u64) -> CliResult<FittedBackbone> {
    let Some(file) = &cfg.backbone_file else {
        return fit_backbone(cfg, data, seed);
    };
    let path = cfg.resolve(file);
    if !path.is_file() {
        return Err(CliError::Data(format!("backbone file {} not found", path.display())));
    }
    let fitted = FittedBackbone::load(&path).map_err(|e| CliError::Data(e.to_string()))?;
    if fitted.backbone.lookback() != cfg.lookback || fitted.backbone.horizon() != cfg.horizon {
        return Err(CliError::Config(format!(
            "backbone file is {}→{}, config asks for {}→{}",
            fitted.backbone.lookback(),
            fitted.backbone.horizon(),
            cfg.lookback,
            cfg.horizon
        )));
    }
    Ok(fitted)
}

/// Uncalibrated metrics of `fitted` on the validation split.
pub fn validation_metrics(cfg: &RunConfig, data: &Dataset, fitted: &FittedBackbone) -> CliResult<MetricsReport> {
    let windows = make_windows(&data.series, cfg.lookback, cfg.horizon, data.split.val.clone())?;
    let mut acc = MetricsAccumulator::new(cfg.horizon, cfg.mape_zero_eps);
    for w in &windows {
        let f = uncalibrated_forecast(&fitted.backbone, &fitted.scaler, w)?;
        acc.push(f.values(), &w.label, w.label_mask.as_ref())?;
    }
    Ok(acc.finish())
}

pub struct StreamOutcome {
    pub metrics: MetricsReport,
    pub test_windows: usize,
    pub calibrator: Option<CalibratorSummary>,
    pub latency: Option<LatencyStats>,
}

/// Streams the test split in origin order. `observe` sees every emitted
/// forecast (original units) with its step index.
pub fn stream_test(
    cfg: &RunConfig,
    data: &Dataset,
    fitted: &FittedBackbone,
    ttc: bool,
    mut observe: impl FnMut(usize, &Array2<f64>),
) -> CliResult<StreamOutcome> {
    let windows = make_windows(&data.series, cfg.lookback, cfg.horizon, data.split.test.clone())?;
    let mut acc = MetricsAccumulator::new(cfg.horizon, cfg.mape_zero_eps);
    let test_windows = windows.len();
    if !ttc {
        for (i, w) in windows.iter().enumerate() {
            let f = uncalibrated_forecast(&fitted.backbone, &fitted.scaler, w)?;
            observe(i, f.values());
            acc.push(f.values(), &w.label, w.label_mask.as_ref())?;
        }
        return Ok(StreamOutcome {
            metrics: acc.finish(),
            test_windows,
            calibrator: None,
            latency: None,
        });
    }

    let params = CalibratorParams::for_horizon(cfg.horizon, cfg.groups, data.series.n_nodes())?;
    let optimizer = OptimizerState::new(cfg.optimizer, cfg.lr, &params);
    let config = EngineConfig {
        loss: cfg.loss,
        queue_rule: cfg.queue_rule,
        update_samples: cfg.update_samples,
        update_steps: cfg.update_steps,
        clip_eps: cfg.clip_eps,
        audit_descent: false,
    };
    let mut engine = StreamEngine::new(
        &fitted.backbone,
        &fitted.scaler,
        CalibratorState { params, optimizer },
        config,
    )?;
    let (mut cal_t, mut upd_t) = (Vec::with_capacity(test_windows), Vec::with_capacity(test_windows));
    let (mut updates, mut skipped, mut leaked) = (0, 0, 0);
    for (i, w) in windows.into_iter().enumerate() {
        let label = w.label.clone();
        let mask = w.label_mask.clone();
        let out = engine.step(w)?;
        observe(i, out.forecast.values());
        acc.push(out.forecast.values(), &label, mask.as_ref())?;
        cal_t.push(out.log.calibrate_latency.as_secs_f64());
        upd_t.push(out.log.update_latency.as_secs_f64());
        if out.log.dequeued_origin.is_some() {
            if out.log.update_skipped {
                skipped += 1;
            } else {
                updates += 1;
            }
        }
        leaked += usize::from(out.log.leaked);
    }
    let stride = cfg
        .stride_secs
        .or_else(|| data.series.sampling_interval().map(|d| d.as_secs_f64()));
    let params = engine.params();
    Ok(StreamOutcome {
        metrics: acc.finish(),
        test_windows,
        calibrator: Some(CalibratorSummary {
            updates,
            skipped_updates: skipped,
            leaked_updates: leaked,
            param_count: params.param_count(),
            max_abs_alpha: params.max_abs_alpha(),
            max_abs_phi: params.max_abs_phi(),
        }),
        latency: Some(LatencyStats::from_samples(&cal_t, &upd_t, stride)),
    })
}

/// Full `run` for `seeds` consecutive seeds starting at `cfg.seed`.
pub fn run_report(cfg: &RunConfig, seeds: usize) -> CliResult<RunReport> {
    cfg.validate()?;
    if seeds == 0 {
        return Err(CliError::Config("--seeds must be >= 1".into()));
    }
    let started = Instant::now();
    let seed_list: Vec<u64> = (0..seeds as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let mut runs = Vec::with_capacity(seeds);
    let mut latency = Vec::new();
    for &seed in &seed_list {
        let data = load_data(cfg, seed)?;
        let fitted = obtain_backbone(cfg, &data, seed)?;
        let out = stream_test(cfg, &data, &fitted, cfg.ttc, |_, _| {})?;
        latency.extend(out.latency);
        runs.push(SeedRun {
            seed,
            data_sha256: data.sha256()?,
            test_windows: out.test_windows,
            metrics: out.metrics,
            calibrator: out.calibrator,
        });
    }
    let timestamp_unix_ms = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    Ok(RunReport {
        ttc: cfg.ttc,
        fingerprint: cfg.fingerprint(),
        config: cfg.echo(),
        seeds: seed_list,
        aggregate: Aggregate::over(&runs),
        runs,
        runtime: Runtime {
            timestamp_unix_ms,
            wall_seconds: started.elapsed().as_secs_f64(),
            latency,
        },
    })
}
