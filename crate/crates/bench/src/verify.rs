//! Property battery behind `sttc verify`. Every check draws its own random
//! instances and reports the worst deviation from an independent oracle.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sttc_core::backbone::SeasonalNaive;
use sttc_core::optim::OptimizerState;
use sttc_core::scaler::{fit_scaler, ScalerMode, ScalerParams};
use sttc_core::seed::{sub_seed, SeedComponent};
use sttc_core::snapshot::CalibratorState;
use sttc_core::spectral::{
    calibrate, calibrated_loss, calibrator_gradient, forward_rfft, inverse_rfft,
    perturbation_bound_check_scaled, CalibratorParams, ForecastBlock, LossKind, ScaleSpace,
};
use sttc_core::stream::{descent_check, descent_check_objective, EngineConfig, StreamEngine, STATIONARY_GRAD};
use sttc_core::synth::{synth_generate, SynthSpec, Tone};
use sttc_core::windows::{make_windows, WindowSample};

use crate::error::CliResult;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Multiplies every `ΔY` in the bound check by 2 (fault injection).
    pub break_bound: bool,
    pub descent_etas: Vec<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            break_bound: false,
            descent_etas: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: Value,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn first_failure(&self) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| !c.passed)
    }
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, SeedComponent::Verify) ^ salt.wrapping_mul(0x9E37_79B9))
}

fn random_block(rng: &mut ChaCha8Rng, n: usize, t: usize, scale: ScaleSpace) -> ForecastBlock {
    ForecastBlock::new(Array2::from_shape_fn((n, t), |_| rng.random_range(-5.0..5.0)), scale)
        .expect("finite random block")
}

fn random_params(rng: &mut ChaCha8Rng, t: usize, g: usize, n: usize, bound: f64) -> CalibratorParams {
    let mut p = CalibratorParams::for_horizon(t, g, n).expect("valid horizon");
    p.lambda_alpha.mapv_inplace(|_| rng.random_range(-bound..=bound));
    p.lambda_phi.mapv_inplace(|_| rng.random_range(-bound..=bound));
    p
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest error of zero-offset calibration over `cases` blocks with
/// `N ≤ 64`, `T ∈ {4, 12, 24}`.
pub fn identity_at_init(seed: u64, cases: usize) -> CliResult<f64> {
    let mut rng = rng_for(seed, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let t = [4, 12, 24][rng.random_range(0..3)];
        let n = rng.random_range(1..=64);
        let block = random_block(&mut rng, n, t, ScaleSpace::Normalized);
        let params = CalibratorParams::for_horizon(t, rng.random_range(1..=6), n)?;
        worst = worst.max(max_abs_diff(calibrate(&block, &params)?.values(), block.values()));
    }
    Ok(worst)
}

/// Largest `irfft(rfft(x)) - x` error over `cases` blocks, odd and even `T`.
pub fn fft_round_trip(seed: u64, cases: usize) -> CliResult<f64> {
    let mut rng = rng_for(seed, 2);
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        // alternate parity so both branches are always exercised
        let t = 2 * rng.random_range(1..=24) + i % 2;
        let n = rng.random_range(1..=32);
        let block = random_block(&mut rng, n, t, ScaleSpace::Normalized);
        let back = inverse_rfft(&forward_rfft(&block)?, t)?;
        worst = worst.max(max_abs_diff(back.values(), block.values()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientOracleStats {
    pub cases: usize,
    pub mae_cases: usize,
    pub mse_cases: usize,
    pub scaled_cases: usize,
    pub masked_cases: usize,
    /// Worst `|analytic - numeric| / max(‖numeric‖, 1e-3)` over all coordinates.
    pub max_relative_error: f64,
}

const FD_STEP: f64 = 1e-6;

/// Central finite differences of the calibrated loss against the analytic
/// gradient on random (prediction, target, offsets, loss, scaler, mask) cases.
pub fn gradient_oracle(seed: u64, cases: usize) -> CliResult<GradientOracleStats> {
    let mut rng = rng_for(seed, 3);
    let mut stats = GradientOracleStats {
        cases: 0,
        mae_cases: 0,
        mse_cases: 0,
        scaled_cases: 0,
        masked_cases: 0,
        max_relative_error: 0.0,
    };
    while stats.cases < cases {
        let loss = if stats.cases.is_multiple_of(2) { LossKind::Mae } else { LossKind::Mse };
        let t = [3, 4, 7, 12, 24][rng.random_range(0..5)];
        let n = rng.random_range(1..=5);
        let g = rng.random_range(1..=4);
        let scaler = rng.random_bool(0.7).then(|| {
            ScalerParams::per_node(
                (0..n).map(|_| rng.random_range(-20.0..20.0)).collect(),
                (0..n).map(|_| rng.random_range(0.5..4.0)).collect(),
            )
            .expect("positive std")
        });
        let space = if scaler.is_some() { ScaleSpace::Normalized } else { ScaleSpace::Original };
        let pred = random_block(&mut rng, n, t, space);
        let target = Array2::from_shape_fn((n, t), |(i, _)| {
            scaler.as_ref().map_or(0.0, |s| s.mean_of(i)) + rng.random_range(-8.0..8.0)
        });
        let mask = rng
            .random_bool(0.25)
            .then(|| Array2::from_shape_fn((n, t), |_| rng.random_bool(0.8)));
        let params = random_params(&mut rng, t, g, n, 0.4);

        if loss == LossKind::Mae {
            // absolute value is not differentiable at zero residual; keep kinks
            // far outside the finite-difference stencil
            let cal = calibrate(&pred, &params)?;
            let vals = match &scaler {
                Some(s) => s.unscale_rows(cal.values())?,
                None => cal.values().clone(),
            };
            if vals.iter().zip(&target).any(|(a, b)| (a - b).abs() < 1e-3) {
                continue;
            }
        }

        let eval = |p: &CalibratorParams| {
            calibrated_loss(&pred, &target, p, loss, scaler.as_ref(), mask.as_ref())
        };
        let (_, grads) =
            calibrator_gradient(&pred, &target, &params, loss, scaler.as_ref(), mask.as_ref())?;
        let analytic = grads.to_vec();
        let mut numeric = Vec::with_capacity(analytic.len());
        for which in 0..2 {
            for idx in 0..params.lambda_alpha.len() {
                let (gi, ni) = (idx / n, idx % n);
                let mut plus = params.clone();
                let mut minus = params.clone();
                let (p, m) = if which == 0 {
                    (&mut plus.lambda_alpha, &mut minus.lambda_alpha)
                } else {
                    (&mut plus.lambda_phi, &mut minus.lambda_phi)
                };
                p[[gi, ni]] += FD_STEP;
                m[[gi, ni]] -= FD_STEP;
                numeric.push((eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP));
            }
        }
        let scale = numeric.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
        for (a, f) in analytic.iter().zip(&numeric) {
            stats.max_relative_error = stats.max_relative_error.max((a - f).abs() / scale);
        }
        stats.cases += 1;
        match loss {
            LossKind::Mae => stats.mae_cases += 1,
            LossKind::Mse => stats.mse_cases += 1,
        }
        stats.scaled_cases += usize::from(scaler.is_some());
        stats.masked_cases += usize::from(mask.is_some());
    }
    Ok(stats)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundStats {
    pub cases: usize,
    pub exact_violations: usize,
    /// Worst `‖ΔY‖ / ((εα + εφ + εαεφ)‖Y‖)`.
    pub max_exact_ratio: f64,
    pub first_order_cases: usize,
    /// Worst `‖ΔY‖ / ((εα + εφ)‖Y‖)` for `|λ| ≤ 1e-3`.
    pub max_first_order_slack: f64,
}

/// Exact bound on `cases` instances with `|λ| ≤ 0.1`, then the first-order
/// form on as many instances with `|λ| ≤ 1e-3`.
pub fn bound_check(seed: u64, cases: usize, delta_scale: f64) -> CliResult<BoundStats> {
    let mut rng = rng_for(seed, 4);
    let mut stats = BoundStats {
        cases,
        exact_violations: 0,
        max_exact_ratio: 0.0,
        first_order_cases: cases,
        max_first_order_slack: 0.0,
    };
    for (bound, first_order) in [(0.1, false), (1e-3, true)] {
        for _ in 0..cases {
            let t = rng.random_range(2..=32);
            let n = rng.random_range(1..=16);
            let g = rng.random_range(1..=6);
            let block = random_block(&mut rng, n, t, ScaleSpace::Normalized);
            let params = random_params(&mut rng, t, g, n, bound);
            let r = perturbation_bound_check_scaled(&block, &params, delta_scale)?;
            if first_order {
                stats.max_first_order_slack = stats.max_first_order_slack.max(r.first_order_slack());
            } else {
                if !r.satisfied {
                    stats.exact_violations += 1;
                }
                if r.bound > 0.0 {
                    stats.max_exact_ratio = stats.max_exact_ratio.max(r.delta_norm / r.bound);
                }
            }
        }
    }
    Ok(stats)
}

/// Drifting multi-node stream used by the descent and leakage checks.
pub fn drifting_stream(seed: u64, n_nodes: usize, windows: usize, lookback: usize, horizon: usize) -> CliResult<(Vec<WindowSample>, ScalerParams)> {
    let len = windows + lookback + horizon - 1;
    let spec = SynthSpec {
        n_nodes,
        t_total: len.max(lookback + horizon + 10),
        tones: vec![
            Tone { freq: 1.0 / 12.0, base_amp: 10.0, base_phase: 0.0 },
            Tone { freq: 1.0 / 6.0, base_amp: 4.0, base_phase: 0.7 },
        ],
        amp_drift_rate: 1e-3,
        phase_drift_rate: 1e-3,
        noise_std: 0.5,
        node_jitter: 0.2,
        seed: sub_seed(seed, SeedComponent::DataGen),
        ..SynthSpec::default()
    };
    let series = synth_generate(&spec)?;
    let scaler = fit_scaler(&series, 0..series.len().min(lookback + horizon + 200), ScalerMode::PerNode)?;
    let samples = make_windows(&series, lookback, horizon, 0..series.len())?;
    Ok((samples, scaler))
}

#[derive(Debug, Clone, Serialize)]
pub struct DescentStats {
    pub eta: f64,
    pub updates: usize,
    /// Updates with `‖∇L‖ > 1e-10`.
    pub checked: usize,
    pub non_decreasing: usize,
    /// Worst `|‖Δλ‖ - η‖∇L‖| / (η‖∇L‖)`.
    pub max_step_norm_error: f64,
}

/// MSE + SGD stream: loss on every dequeued sample must drop after its update.
pub fn streamed_descent(seed: u64, updates: usize, eta: f64) -> CliResult<DescentStats> {
    let (th, tf) = (12, 12);
    let (samples, scaler) = drifting_stream(seed, 4, updates + tf, th, tf)?;
    let bb = SeasonalNaive { period: 12, lookback: th, horizon: tf };
    let params = CalibratorParams::for_horizon(tf, 4, 4)?;
    let config = EngineConfig { loss: LossKind::Mse, audit_descent: true, ..EngineConfig::default() };
    let mut engine = StreamEngine::new(
        &bb,
        &scaler,
        CalibratorState { params, optimizer: OptimizerState::sgd(eta) },
        config,
    )?;
    let mut stats = DescentStats { eta, updates: 0, checked: 0, non_decreasing: 0, max_step_norm_error: 0.0 };
    for s in samples {
        let log = engine.step(s)?.log;
        let (Some(before), Some(after), Some(g), Some(d)) =
            (log.loss_before_update, log.loss_after_update, log.grad_norm, log.param_delta_norm)
        else {
            continue;
        };
        stats.updates += 1;
        if g > STATIONARY_GRAD {
            stats.checked += 1;
            if after >= before {
                stats.non_decreasing += 1;
            }
            let want = eta * g;
            stats.max_step_norm_error = stats.max_step_norm_error.max((d - want).abs() / want);
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridStats {
    pub samples: usize,
    pub violations: usize,
    pub smallest_safe_eta: Option<f64>,
    pub failing_etas: Vec<f64>,
    pub max_lipschitz_estimate: f64,
}

/// `descent_check` at the zero point on `samples` streamed samples.
pub fn grid_descent(seed: u64, samples: usize, etas: &[f64]) -> CliResult<GridStats> {
    let (windows, scaler) = drifting_stream(seed ^ 0x5A5A, 3, samples, 12, 12)?;
    let bb = SeasonalNaive { period: 12, lookback: 12, horizon: 12 };
    let params = CalibratorParams::for_horizon(12, 4, 3)?;
    let mut stats = GridStats {
        samples: 0,
        violations: 0,
        smallest_safe_eta: None,
        failing_etas: Vec::new(),
        max_lipschitz_estimate: 0.0,
    };
    for (i, w) in windows.iter().take(samples).enumerate() {
        let r = descent_check(w, &bb, &scaler, &params, etas, seed.wrapping_add(i as u64))?;
        stats.samples += 1;
        stats.violations += r.violations.len();
        stats.max_lipschitz_estimate = stats.max_lipschitz_estimate.max(r.lipschitz_estimate);
        if let Some(e) = r.largest_safe_eta {
            stats.smallest_safe_eta = Some(stats.smallest_safe_eta.map_or(e, |m: f64| m.min(e)));
        }
        for e in r.failing_etas {
            if !stats.failing_etas.contains(&e) {
                stats.failing_etas.push(e);
            }
        }
    }
    stats.failing_etas.sort_by(f64::total_cmp);
    Ok(stats)
}

/// `c (λ - 1)²`, whose gradient is `2c`-Lipschitz.
pub fn quadratic_descent(c: f64, etas: &[f64]) -> CliResult<sttc_core::stream::DescentReport> {
    let obj = |x: &[f64]| Ok((c * (x[0] - 1.0).powi(2), vec![2.0 * c * (x[0] - 1.0)]));
    Ok(descent_check_objective(obj, &[0.0], etas, 0)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct LeakageStats {
    pub steps: usize,
    pub dequeues: usize,
    pub violations: usize,
}

/// Index audit of every dequeue over a `steps`-long stream.
pub fn leakage_audit(seed: u64, steps: usize, lookback: usize, horizon: usize) -> CliResult<LeakageStats> {
    let (samples, scaler) = drifting_stream(seed ^ 0xA5A5, 2, steps, lookback, horizon)?;
    let bb = SeasonalNaive { period: 12, lookback, horizon };
    let params = CalibratorParams::for_horizon(horizon, 4, 2)?;
    let mut engine = StreamEngine::new(
        &bb,
        &scaler,
        CalibratorState { params, optimizer: OptimizerState::sgd(1e-4) },
        EngineConfig::default(),
    )?;
    let mut stats = LeakageStats { steps: 0, dequeues: 0, violations: 0 };
    for s in samples.into_iter().take(steps) {
        let (t, observed_end) = (s.origin, s.input_end());
        let log = engine.step(s)?.log;
        stats.steps += 1;
        if let Some(o) = log.dequeued_origin {
            stats.dequeues += 1;
            let label_end = o + lookback + horizon - 1;
            if t - o != horizon || label_end != observed_end || log.leaked {
                stats.violations += 1;
            }
        }
    }
    Ok(stats)
}

fn timed<T: Serialize>(
    name: &'static str,
    f: impl FnOnce() -> CliResult<T>,
    pass: impl FnOnce(&T) -> bool,
) -> CheckOutcome {
    let started = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => (pass(&v), serde_json::to_value(&v).unwrap_or(Value::Null)),
        Err(e) => (false, json!({ "error": e.to_string() })),
    };
    CheckOutcome { name, passed, detail, elapsed_ms: started.elapsed().as_secs_f64() * 1e3 }
}

/// Runs every check; failures are collected, never short-circuited.
pub fn run_battery(opts: &VerifyOptions) -> VerifyReport {
    let seed = opts.seed;
    let delta_scale = if opts.break_bound { 2.0 } else { 1.0 };
    let etas = opts.descent_etas.clone();
    let checks = vec![
        timed("identity_at_init", || identity_at_init(seed, 100), |e| *e <= 1e-9),
        timed("fft_round_trip", || fft_round_trip(seed, 100), |e| *e <= 1e-9),
        timed(
            "gradient_finite_difference",
            || gradient_oracle(seed, 100),
            |s| s.max_relative_error <= 1e-4,
        ),
        timed(
            "perturbation_bound",
            || bound_check(seed, 1000, delta_scale),
            |s| s.exact_violations == 0 && s.max_first_order_slack <= 1.001,
        ),
        timed(
            "sgd_descent",
            || streamed_descent(seed, 1000, 1e-4),
            |s| s.non_decreasing == 0 && s.max_step_norm_error <= 1e-12 && s.checked > 0,
        ),
        timed("descent_eta_grid", || grid_descent(seed, 50, &etas), |s| s.violations == 0),
        timed(
            "descent_quadratic",
            || quadratic_descent(5.0, &etas),
            |r| r.violations.is_empty(),
        ),
        timed("no_leakage", || leakage_audit(seed, 5000, 12, 12), |s| s.violations == 0 && s.dequeues > 0),
        timed(
            "parameter_count",
            || Ok(CalibratorParams::for_horizon(12, 4, 1000)?.param_count()),
            |c| *c == 8000,
        ),
    ];
    VerifyReport { seed, passed: checks.iter().all(|c| c.passed), checks }
}
