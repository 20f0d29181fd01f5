//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sttc_bench::config::RunConfig;
use sttc_bench::pipeline::run_report;
use sttc_bench::report::{compare, RunReport};
use sttc_bench::verify;
use sttc_core::backbone::SeasonalNaive;
use sttc_core::optim::OptimizerState;
use sttc_core::scaler::ScalerParams;
use sttc_core::snapshot::CalibratorState;
use sttc_core::spectral::CalibratorParams;
use sttc_core::stream::{EngineConfig, StreamEngine};
use sttc_core::windows::WindowSample;

const SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn config(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    RunConfig::from_file(&path).expect("bundled config")
}

fn paired(name: &str) -> (RunReport, RunReport) {
    let mut cfg = config(name);
    cfg.ttc = false;
    let base = run_report(&cfg, 5).expect("baseline run");
    cfg.ttc = true;
    let cal = run_report(&cfg, 5).expect("calibrated run");
    (base, cal)
}

fn c1() -> Outcome {
    let err = verify::identity_at_init(SEED, 100).unwrap();
    Outcome { passed: err <= 1e-9, detail: format!("max abs error {err:.2e} over 100 blocks") }
}

fn c2() -> Outcome {
    let err = verify::fft_round_trip(SEED, 100).unwrap();
    Outcome { passed: err <= 1e-9, detail: format!("max abs error {err:.2e} over 100 blocks, odd and even T") }
}

fn c3() -> Outcome {
    let s = verify::gradient_oracle(SEED, 120).unwrap();
    Outcome {
        passed: s.max_relative_error <= 1e-4 && s.cases >= 100 && s.mae_cases > 0 && s.mse_cases > 0,
        detail: format!(
            "max relative error {:.2e} over {} cases ({} mae, {} mse, {} scaled, {} masked)",
            s.max_relative_error, s.cases, s.mae_cases, s.mse_cases, s.scaled_cases, s.masked_cases
        ),
    }
}

fn c4() -> Outcome {
    let s = verify::bound_check(SEED, 1000, 1.0).unwrap();
    Outcome {
        passed: s.exact_violations == 0 && s.max_first_order_slack <= 1.001,
        detail: format!(
            "{} exact-bound violations in {} cases (worst ratio {:.4}); first-order slack {:.4}",
            s.exact_violations, s.cases, s.max_exact_ratio, s.max_first_order_slack
        ),
    }
}

fn c5() -> Outcome {
    let s = verify::streamed_descent(SEED, 1000, 1e-4).unwrap();
    Outcome {
        passed: s.updates >= 1000 && s.non_decreasing == 0 && s.max_step_norm_error <= 1e-12,
        detail: format!(
            "{} updates, {} with nonzero gradient, {} without descent; step norm rel error {:.2e}",
            s.updates, s.checked, s.non_decreasing, s.max_step_norm_error
        ),
    }
}

fn c6() -> Outcome {
    let s = verify::leakage_audit(SEED, 5000, 12, 12).unwrap();
    Outcome {
        passed: s.steps == 5000 && s.violations == 0 && s.dequeues == 5000 - 12,
        detail: format!("{} steps, {} dequeues, {} violations", s.steps, s.dequeues, s.violations),
    }
}

fn c7() -> Outcome {
    let (n, t) = (1000, 12);
    let count = CalibratorParams::for_horizon(t, 4, n).unwrap().param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let len = 400;
    let rows = Array2::from_shape_fn((n, len), |(i, s)| {
        50.0 + 10.0 * (std::f64::consts::TAU * s as f64 / 12.0 + i as f64).sin() + rng.random_range(-1.0..1.0)
    });
    let samples: Vec<WindowSample> = (0..=len - 2 * t)
        .map(|o| WindowSample {
            input: Array3::from_shape_fn((n, t, 1), |(i, h, _)| rows[[i, o + h]]),
            label: Array2::from_shape_fn((n, t), |(i, h)| rows[[i, o + t + h]]),
            label_mask: None,
            origin: o,
        })
        .collect();
    let bb = SeasonalNaive { period: 12, lookback: t, horizon: t };
    let scaler = ScalerParams::global(50.0, 7.0).unwrap();
    let params = CalibratorParams::for_horizon(t, 4, n).unwrap();
    let optimizer = OptimizerState::adam(1e-4, &params);
    let mut engine =
        StreamEngine::new(&bb, &scaler, CalibratorState { params, optimizer }, EngineConfig::default()).unwrap();
    let mut total = Duration::ZERO;
    let mut timed = 0;
    for s in samples {
        let started = Instant::now();
        let out = engine.step(s).unwrap();
        let took = started.elapsed();
        if out.log.dequeued_origin.is_some() {
            total += took;
            timed += 1;
        }
    }
    let mean_ms = total.as_secs_f64() * 1e3 / timed as f64;
    Outcome {
        passed: count == 8000 && mean_ms < 10.0,
        detail: format!("{count} parameters; mean stream step {mean_ms:.3} ms over {timed} updating steps (N=1000, T=12)"),
    }
}

fn c8() -> Outcome {
    let (base, cal) = paired("drift.conf");
    let cmp = compare(&base, &cal).unwrap();
    let deltas: Vec<f64> = cmp.per_seed.iter().map(|s| s.delta_percent.unwrap_or(f64::NAN)).collect();
    let all_better = base
        .runs
        .iter()
        .zip(&cal.runs)
        .all(|(b, c)| c.metrics.mae.unwrap() < b.metrics.mae.unwrap());
    let mean = cmp.delta_percent.mae.unwrap_or(f64::NAN);
    Outcome {
        passed: all_better && mean >= 5.0,
        detail: format!("MAE improvement per seed {deltas:.2?} %, mean {mean:.2} %"),
    }
}

fn c9() -> Outcome {
    let (base, cal) = paired("stationary.conf");
    let cmp = compare(&base, &cal).unwrap();
    let deltas: Vec<f64> = cmp.per_seed.iter().map(|s| s.delta_percent.unwrap_or(f64::NAN)).collect();
    Outcome {
        passed: deltas.iter().all(|d| d.abs() <= 0.5),
        detail: format!("MAE change per seed {deltas:.3?} %"),
    }
}

fn c10() -> Outcome {
    let cfg = config("drift.conf");
    let a = run_report(&cfg, 2).unwrap();
    let b = run_report(&cfg, 2).unwrap();
    let (ja, jb) = (a.deterministic_json().unwrap(), b.deterministic_json().unwrap());
    Outcome {
        passed: ja == jb && !ja.contains("timestamp") && !ja.is_empty(),
        detail: format!("{} report bytes compared, identical: {}", ja.len(), ja == jb),
    }
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("identity at init", c1, Duration::from_secs(1)),
        ("fft round trip", c2, Duration::from_secs(1)),
        ("gradient oracle", c3, Duration::from_secs(10)),
        ("perturbation bound", c4, Duration::from_secs(5)),
        ("descent property", c5, Duration::from_secs(30)),
        ("no-leakage audit", c6, Duration::from_secs(5)),
        ("parameter count and step cost", c7, Duration::from_secs(30)),
        ("drift experiment", c8, Duration::from_secs(120)),
        ("stationary control", c9, Duration::from_secs(120)),
        ("determinism", c10, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let out = check();
        let took = started.elapsed();
        let passed = out.passed && took < budget;
        failures += usize::from(!passed);
        println!(
            "criterion {:>2} {:<30} {}  {} [{:.2} s of {} s]",
            i + 1,
            name,
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
