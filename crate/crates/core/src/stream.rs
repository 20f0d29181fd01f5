//! Streaming test-time loop: forecast with the current calibrator, queue
//! the sample, and once a queued sample's label is fully observed take one
//! gradient step on it.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::backbone::Forecaster;
use crate::error::{Error, Result};
use crate::optim::{optimizer_step, OptimizerState};
use crate::scaler::ScalerParams;
use crate::snapshot::CalibratorState;
use crate::spectral::{
    calibrate, calibrated_loss, calibrator_gradient, CalibratorParams, ForecastBlock, LossKind,
    ParamGrads, ScaleSpace,
};
use crate::windows::WindowSample;

/// When a queued sample becomes eligible for an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueRule {
    /// Dequeue once the queue holds more than `T_f` samples. The dequeued
    /// label ends exactly at the last observed step.
    Strict,
    /// Dequeue as soon as the queue holds `T_f` samples. Its label overlaps
    /// the current forecast target by one step; kept for replication runs.
    ListingCompat,
}

impl FromStr for QueueRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "strict" => Ok(QueueRule::Strict),
            "listing" | "listing_compat" => Ok(QueueRule::ListingCompat),
            other => Err(Error::config(format!("unknown queue rule '{other}'"))),
        }
    }
}

impl fmt::Display for QueueRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueueRule::Strict => "strict",
            QueueRule::ListingCompat => "listing",
        })
    }
}

/// FIFO of past samples, oldest first.
#[derive(Debug, Clone)]
pub struct StreamQueue {
    capacity: usize,
    rule: QueueRule,
    entries: VecDeque<WindowSample>,
}

impl StreamQueue {
    pub fn new(capacity: usize, rule: QueueRule) -> Self {
        Self {
            capacity,
            rule,
            entries: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn enqueue(&mut self, sample: WindowSample) -> Result<()> {
        if let Some(last) = self.entries.back() {
            if sample.origin <= last.origin {
                return Err(Error::Sequence {
                    expected: last.origin + 1,
                    got: sample.origin,
                });
            }
        }
        self.entries.push_back(sample);
        Ok(())
    }

    /// Removes the oldest sample if the queue rule says it is due.
    pub fn dequeue_due(&mut self) -> Option<WindowSample> {
        let due = match self.rule {
            QueueRule::Strict => self.entries.len() > self.capacity,
            QueueRule::ListingCompat => self.entries.len() >= self.capacity,
        };
        if due {
            self.entries.pop_front()
        } else {
            None
        }
    }

    pub fn origins(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|s| s.origin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub loss: LossKind,
    pub queue_rule: QueueRule,
    /// Number of most recent dequeued samples averaged into one gradient.
    pub update_samples: usize,
    /// Optimizer steps per dequeue.
    pub update_steps: usize,
    /// Clamp offsets into `[-clip, clip]` after every step.
    pub clip_eps: Option<f64>,
    /// Re-evaluate the loss on the update samples after stepping.
    pub audit_descent: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Mae,
            queue_rule: QueueRule::Strict,
            update_samples: 1,
            update_steps: 1,
            clip_eps: None,
            audit_descent: false,
        }
    }
}

/// Result of one flash update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateOutcome {
    pub loss_before: f64,
    pub loss_after: Option<f64>,
    pub grad_norm: f64,
    pub param_delta_norm: f64,
    /// No observed label entries, so nothing was updated.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step_index: usize,
    pub origin: usize,
    pub dequeued_origin: Option<usize>,
    pub loss_before_update: Option<f64>,
    pub loss_after_update: Option<f64>,
    pub grad_norm: Option<f64>,
    pub param_delta_norm: Option<f64>,
    pub update_skipped: bool,
    /// The dequeued label reaches past the last observed step (listing rule only).
    pub leaked: bool,
    pub calibrate_latency: Duration,
    pub update_latency: Duration,
}

/// Backbone output for `sample`, normalized.
pub fn backbone_forecast(
    backbone: &dyn Forecaster,
    scaler: &ScalerParams,
    sample: &WindowSample,
) -> Result<ForecastBlock> {
    let window = scaler.scale_rows(&sample.target_input())?;
    let out = backbone.predict(window.view(), sample.origin)?;
    if out.scale() != ScaleSpace::Normalized {
        return Err(Error::config("backbone must forecast in normalized space"));
    }
    Ok(out)
}

/// Backbone output for `sample` mapped back to original units.
pub fn uncalibrated_forecast(
    backbone: &dyn Forecaster,
    scaler: &ScalerParams,
    sample: &WindowSample,
) -> Result<ForecastBlock> {
    let pred = backbone_forecast(backbone, scaler, sample)?;
    ForecastBlock::new(scaler.unscale_rows(pred.values())?, ScaleSpace::Original)
}

/// One gradient step on a single fully-observed past sample. The backbone
/// is only evaluated, never changed.
pub fn flash_update(
    sample: &WindowSample,
    backbone: &dyn Forecaster,
    scaler: &ScalerParams,
    params: &mut CalibratorParams,
    opt: &mut OptimizerState,
    loss: LossKind,
) -> Result<UpdateOutcome> {
    flash_update_batch(&[sample], backbone, scaler, params, opt, loss, 1, None, false)
}

#[allow(clippy::too_many_arguments)]
fn flash_update_batch(
    samples: &[&WindowSample],
    backbone: &dyn Forecaster,
    scaler: &ScalerParams,
    params: &mut CalibratorParams,
    opt: &mut OptimizerState,
    loss: LossKind,
    steps: usize,
    clip: Option<f64>,
    audit: bool,
) -> Result<UpdateOutcome> {
    let usable: Vec<&WindowSample> = samples
        .iter()
        .copied()
        .filter(|s| s.observed_label_count() > 0)
        .collect();
    if usable.is_empty() {
        return Ok(UpdateOutcome {
            skipped: true,
            ..UpdateOutcome::default()
        });
    }
    let predictions: Vec<ForecastBlock> = usable
        .iter()
        .map(|s| backbone_forecast(backbone, scaler, s))
        .collect::<Result<_>>()?;
    let weight = 1.0 / usable.len() as f64;
    let averaged = |params: &CalibratorParams| -> Result<(f64, ParamGrads)> {
        let mut total = 0.0;
        let mut grads = ParamGrads::zeros_like(params);
        for (s, pred) in usable.iter().zip(&predictions) {
            let (l, g) =
                calibrator_gradient(pred, &s.label, params, loss, Some(scaler), s.label_mask.as_ref())?;
            total += weight * l;
            grads.d_lambda_alpha.scaled_add(weight, &g.d_lambda_alpha);
            grads.d_lambda_phi.scaled_add(weight, &g.d_lambda_phi);
        }
        Ok((total, grads))
    };

    let start = params.clone();
    let mut outcome = UpdateOutcome::default();
    for i in 0..steps.max(1) {
        let (l, grads) = averaged(params)?;
        if !grads.is_finite() {
            return Err(Error::config("non-finite calibrator gradient"));
        }
        if i == 0 {
            outcome.loss_before = l;
            outcome.grad_norm = grads.norm();
        }
        optimizer_step(params, &grads, opt)?;
        if let Some(eps) = clip {
            params.clamp(eps);
        }
    }
    outcome.param_delta_norm = params.distance(&start);
    if audit {
        let mut after = 0.0;
        for (s, pred) in usable.iter().zip(&predictions) {
            after += weight
                * calibrated_loss(pred, &s.label, params, loss, Some(scaler), s.label_mask.as_ref())?;
        }
        outcome.loss_after = Some(after);
    }
    Ok(outcome)
}

/// Forecast and log of one stream step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Calibrated forecast in original units.
    pub forecast: ForecastBlock,
    pub log: StepLog,
}

/// Drives one stream. Steps must arrive with consecutive origins.
pub struct StreamEngine<'a> {
    backbone: &'a dyn Forecaster,
    scaler: &'a ScalerParams,
    params: CalibratorParams,
    optimizer: OptimizerState,
    queue: StreamQueue,
    recent: VecDeque<WindowSample>,
    config: EngineConfig,
    last_origin: Option<usize>,
    steps: usize,
}

impl<'a> StreamEngine<'a> {
    pub fn new(
        backbone: &'a dyn Forecaster,
        scaler: &'a ScalerParams,
        state: CalibratorState,
        config: EngineConfig,
    ) -> Result<Self> {
        let horizon = backbone.horizon();
        if state.params.layout().m_bins() != horizon / 2 + 1 {
            return Err(Error::shape(format!(
                "calibrator has {} bins, backbone horizon {horizon} needs {}",
                state.params.layout().m_bins(),
                horizon / 2 + 1
            )));
        }
        if config.update_samples == 0 || config.update_steps == 0 {
            return Err(Error::config("update_samples and update_steps must be >= 1"));
        }
        Ok(Self {
            backbone,
            scaler,
            params: state.params,
            optimizer: state.optimizer,
            queue: StreamQueue::new(horizon, config.queue_rule),
            recent: VecDeque::with_capacity(config.update_samples),
            config,
            last_origin: None,
            steps: 0,
        })
    }

    pub fn params(&self) -> &CalibratorParams {
        &self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn queue(&self) -> &StreamQueue {
        &self.queue
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn state(&self) -> CalibratorState {
        CalibratorState {
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    pub fn into_state(self) -> CalibratorState {
        CalibratorState {
            params: self.params,
            optimizer: self.optimizer,
        }
    }

    fn check_sample(&self, sample: &WindowSample) -> Result<()> {
        if let Some(prev) = self.last_origin {
            if sample.origin != prev + 1 {
                return Err(Error::Sequence {
                    expected: prev + 1,
                    got: sample.origin,
                });
            }
        }
        if sample.n_nodes() != self.params.n_nodes()
            || sample.lookback() != self.backbone.lookback()
            || sample.horizon() != self.backbone.horizon()
            || sample.label.nrows() != sample.n_nodes()
        {
            return Err(Error::shape(format!(
                "sample {}x{}→{} does not fit engine {}x{}→{}",
                sample.n_nodes(),
                sample.lookback(),
                sample.horizon(),
                self.params.n_nodes(),
                self.backbone.lookback(),
                self.backbone.horizon()
            )));
        }
        Ok(())
    }

    /// Forecasts `sample` with the current offsets before queueing it. At most
    /// one flash update follows, on whichever queued sample is due.
    pub fn step(&mut self, sample: WindowSample) -> Result<StepOutput> {
        self.check_sample(&sample)?;

        let pred = backbone_forecast(self.backbone, self.scaler, &sample)?;
        let started = Instant::now();
        let calibrated = calibrate(&pred, &self.params)?;
        let forecast = ForecastBlock::new(
            self.scaler.unscale_rows(calibrated.values())?,
            ScaleSpace::Original,
        )?;
        let calibrate_latency = started.elapsed();

        let mut log = StepLog {
            step_index: self.steps,
            origin: sample.origin,
            dequeued_origin: None,
            loss_before_update: None,
            loss_after_update: None,
            grad_norm: None,
            param_delta_norm: None,
            update_skipped: false,
            leaked: false,
            calibrate_latency,
            update_latency: Duration::ZERO,
        };

        let observed_end = sample.input_end();
        self.last_origin = Some(sample.origin);
        self.queue.enqueue(sample)?;
        self.steps += 1;

        if let Some(old) = self.queue.dequeue_due() {
            log.dequeued_origin = Some(old.origin);
            if old.label_end() > observed_end {
                if self.config.queue_rule == QueueRule::Strict {
                    return Err(Error::Leakage {
                        origin: old.origin,
                        label_end: old.label_end(),
                        observed_end,
                    });
                }
                log.leaked = true;
            }
            let started = Instant::now();
            if self.recent.len() == self.config.update_samples {
                self.recent.pop_front();
            }
            self.recent.push_back(old);
            let batch: Vec<&WindowSample> = self.recent.iter().collect();
            let outcome = flash_update_batch(
                &batch,
                self.backbone,
                self.scaler,
                &mut self.params,
                &mut self.optimizer,
                self.config.loss,
                self.config.update_steps,
                self.config.clip_eps,
                self.config.audit_descent,
            )?;
            log.update_latency = started.elapsed();
            log.update_skipped = outcome.skipped;
            if !outcome.skipped {
                log.loss_before_update = Some(outcome.loss_before);
                log.loss_after_update = outcome.loss_after;
                log.grad_norm = Some(outcome.grad_norm);
                log.param_delta_norm = Some(outcome.param_delta_norm);
            }
        }
        Ok(StepOutput { forecast, log })
    }
}

/// Outcome of one candidate step size in [`descent_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentEntry {
    pub eta: f64,
    pub loss_after: f64,
    pub strictly_decreased: bool,
    pub non_increasing: bool,
    /// `η (1 - L_c η / 2) ‖∇L‖²`.
    pub predicted_decrement: f64,
    pub decrement_respected: bool,
    /// `η < 2 / L_c` for the estimated `L_c`.
    pub within_guarantee: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentReport {
    pub loss_before: f64,
    pub grad_norm: f64,
    /// Largest secant estimate of the gradient's Lipschitz constant.
    pub lipschitz_estimate: f64,
    pub entries: Vec<DescentEntry>,
    /// Largest step size that is inside the guarantee and did descend.
    pub largest_safe_eta: Option<f64>,
    /// Step sizes whose single step failed to descend.
    pub failing_etas: Vec<f64>,
    /// Step sizes inside the guarantee that still failed to descend.
    pub violations: Vec<f64>,
}

/// Gradient norms at or below this count as stationary.
pub const STATIONARY_GRAD: f64 = 1e-10;

/// Single-step gradient-descent check on an arbitrary differentiable objective.
///
/// `objective(x)` returns the loss and its gradient. `L_c` is estimated from
/// gradient differences along `probe_directions` random unit directions and
/// along the segment of every candidate step.
pub fn descent_check_objective<F>(
    objective: F,
    point: &[f64],
    eta_grid: &[f64],
    probe_seed: u64,
) -> Result<DescentReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const PROBE_DIRECTIONS: usize = 8;
    let (loss_before, grad) = objective(point)?;
    let grad_norm = norm(&grad);
    let dim = point.len();

    let mut lipschitz: f64 = 0.0;
    let mut probe = |dir: &[f64], radius: f64| -> Result<()> {
        if radius <= 0.0 || !radius.is_finite() {
            return Ok(());
        }
        let shifted: Vec<f64> = point.iter().zip(dir).map(|(x, d)| x + radius * d).collect();
        let (_, g) = objective(&shifted)?;
        let diff: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        lipschitz = lipschitz.max(norm(&diff) / radius);
        Ok(())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let base_radius = 1e-3 * norm(point).max(1.0);
    for _ in 0..PROBE_DIRECTIONS {
        let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&dir);
        if n > 0.0 {
            dir.iter_mut().for_each(|d| *d /= n);
            probe(&dir, base_radius)?;
        }
    }
    if grad_norm > 0.0 {
        let down: Vec<f64> = grad.iter().map(|g| -g / grad_norm).collect();
        for &eta in eta_grid {
            probe(&down, eta * grad_norm)?;
        }
    }

    let tol = 1e-12 * loss_before.abs().max(1.0);
    let mut entries = Vec::with_capacity(eta_grid.len());
    for &eta in eta_grid {
        let next: Vec<f64> = point.iter().zip(&grad).map(|(x, g)| x - eta * g).collect();
        let (loss_after, _) = objective(&next)?;
        let predicted = eta * (1.0 - lipschitz * eta / 2.0) * grad_norm * grad_norm;
        entries.push(DescentEntry {
            eta,
            loss_after,
            strictly_decreased: loss_after < loss_before,
            non_increasing: loss_after <= loss_before + tol,
            predicted_decrement: predicted,
            decrement_respected: loss_after <= loss_before - predicted + tol,
            within_guarantee: lipschitz == 0.0 || eta < 2.0 / lipschitz,
        });
    }
    let descended = |e: &DescentEntry| {
        if grad_norm > STATIONARY_GRAD {
            e.strictly_decreased
        } else {
            e.non_increasing
        }
    };
    let largest_safe_eta = entries
        .iter()
        .filter(|e| e.within_guarantee && descended(e))
        .map(|e| e.eta)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let failing_etas = entries.iter().filter(|e| !descended(e)).map(|e| e.eta).collect();
    let violations = entries
        .iter()
        .filter(|e| e.within_guarantee && !descended(e))
        .map(|e| e.eta)
        .collect();
    Ok(DescentReport {
        loss_before,
        grad_norm,
        lipschitz_estimate: lipschitz,
        entries,
        largest_safe_eta,
        failing_etas,
        violations,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn flatten(params: &CalibratorParams) -> Vec<f64> {
    params
        .lambda_alpha
        .iter()
        .chain(params.lambda_phi.iter())
        .copied()
        .collect()
}

fn unflatten(template: &CalibratorParams, flat: &[f64]) -> CalibratorParams {
    let mut p = template.clone();
    let half = p.lambda_alpha.len();
    p.lambda_alpha
        .iter_mut()
        .zip(&flat[..half])
        .for_each(|(d, s)| *d = *s);
    p.lambda_phi
        .iter_mut()
        .zip(&flat[half..])
        .for_each(|(d, s)| *d = *s);
    p
}

/// Checks single-step SGD descent of the MSE loss on `sample` for every
/// step size in `eta_grid`, starting from `params`.
pub fn descent_check(
    sample: &WindowSample,
    backbone: &dyn Forecaster,
    scaler: &ScalerParams,
    params: &CalibratorParams,
    eta_grid: &[f64],
    probe_seed: u64,
) -> Result<DescentReport> {
    let pred = backbone_forecast(backbone, scaler, sample)?;
    let objective = |flat: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = unflatten(params, flat);
        let (l, g) = calibrator_gradient(
            &pred,
            &sample.label,
            &p,
            LossKind::Mse,
            Some(scaler),
            sample.label_mask.as_ref(),
        )?;
        Ok((l, g.to_vec()))
    };
    descent_check_objective(objective, &flatten(params), eta_grid, probe_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::SeasonalNaive;
    use ndarray::{Array2, Array3};

    fn sample(origin: usize, n: usize, th: usize, tf: usize) -> WindowSample {
        WindowSample {
            input: Array3::from_shape_fn((n, th, 1), |(i, t, _)| ((origin + t) as f64 * 0.5 + i as f64).sin()),
            label: Array2::from_shape_fn((n, tf), |(i, h)| ((origin + th + h) as f64 * 0.5 + i as f64).sin()),
            label_mask: None,
            origin,
        }
    }

    #[test]
    fn queue_rules() {
        let mut strict = StreamQueue::new(3, QueueRule::Strict);
        let mut listing = StreamQueue::new(3, QueueRule::ListingCompat);
        let mut strict_out = Vec::new();
        let mut listing_out = Vec::new();
        for o in 0..6 {
            strict.enqueue(sample(o, 1, 2, 3)).unwrap();
            listing.enqueue(sample(o, 1, 2, 3)).unwrap();
            strict_out.push(strict.dequeue_due().map(|s| s.origin));
            listing_out.push(listing.dequeue_due().map(|s| s.origin));
            assert!(strict.len() <= 3);
        }
        assert_eq!(strict_out, vec![None, None, None, Some(0), Some(1), Some(2)]);
        assert_eq!(listing_out, vec![None, None, Some(0), Some(1), Some(2), Some(3)]);
        assert!(matches!(
            strict.enqueue(sample(1, 1, 2, 3)).unwrap_err(),
            Error::Sequence { .. }
        ));
    }

    #[test]
    fn engine_rejects_gaps_and_bad_shapes() {
        let bb = SeasonalNaive { period: 4, lookback: 8, horizon: 4 };
        let scaler = ScalerParams::identity();
        let params = CalibratorParams::for_horizon(4, 2, 2).unwrap();
        let state = CalibratorState {
            optimizer: OptimizerState::sgd(0.1),
            params,
        };
        let mut engine = StreamEngine::new(&bb, &scaler, state, EngineConfig::default()).unwrap();
        engine.step(sample(5, 2, 8, 4)).unwrap();
        assert!(matches!(
            engine.step(sample(7, 2, 8, 4)).unwrap_err(),
            Error::Sequence { expected: 6, got: 7 }
        ));
        assert!(matches!(
            engine.step(sample(6, 3, 8, 4)).unwrap_err(),
            Error::ShapeMismatch(_)
        ));
        engine.step(sample(6, 2, 8, 4)).unwrap();
    }

    #[test]
    fn fully_masked_label_skips_update() {
        let bb = SeasonalNaive { period: 4, lookback: 8, horizon: 4 };
        let scaler = ScalerParams::identity();
        let mut params = CalibratorParams::for_horizon(4, 2, 1).unwrap();
        let mut opt = OptimizerState::sgd(0.1);
        let mut s = sample(0, 1, 8, 4);
        s.label_mask = Some(Array2::from_elem((1, 4), false));
        let out = flash_update(&s, &bb, &scaler, &mut params, &mut opt, LossKind::Mae).unwrap();
        assert!(out.skipped);
        assert_eq!(opt.step_count, 0);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        // label equals the seasonal-naive forecast, so calibrated loss is minimal at zero
        let bb = SeasonalNaive { period: 4, lookback: 8, horizon: 4 };
        let scaler = ScalerParams::identity();
        let mut s = sample(0, 1, 8, 4);
        s.label = crate::backbone::seasonal_naive_predict(s.target_input().view(), 4, 4);
        let mut params = CalibratorParams::for_horizon(4, 2, 1).unwrap();
        let mut opt = OptimizerState::sgd(0.1);
        let out = flash_update(&s, &bb, &scaler, &mut params, &mut opt, LossKind::Mse).unwrap();
        assert!(out.grad_norm < 1e-12);
        assert!(out.param_delta_norm < 1e-13);
    }

    #[test]
    fn quadratic_descent_window() {
        // L(λ) = c (λ - 1)², c = 0.5 → L_c = 1, descent iff η < 2
        let c = 0.5;
        let obj = |x: &[f64]| Ok((c * (x[0] - 1.0).powi(2), vec![2.0 * c * (x[0] - 1.0)]));
        let grid = [0.1, 0.5, 1.0, 1.5, 1.99, 2.5];
        let r = descent_check_objective(obj, &[0.0], &grid, 1).unwrap();
        assert!((r.lipschitz_estimate - 1.0).abs() < 1e-9);
        assert_eq!(r.failing_etas, vec![2.5]);
        assert!(r.violations.is_empty());
        assert_eq!(r.largest_safe_eta, Some(1.99));
        for e in &r.entries {
            assert_eq!(e.within_guarantee, e.eta < 2.0);
            if e.within_guarantee {
                assert!(e.decrement_respected);
            }
        }
    }

    #[test]
    fn stationary_point_never_increases() {
        let obj = |x: &[f64]| Ok((3.0 * x[0] * x[0], vec![6.0 * x[0]]));
        let r = descent_check_objective(obj, &[0.0], &[1e-4, 1.0, 10.0], 2).unwrap();
        assert!(r.failing_etas.is_empty());
        assert!(r.entries.iter().all(|e| e.loss_after == 0.0));
    }
}
