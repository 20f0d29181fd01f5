use std::path::Path;

use sttc_bench::config::RunConfig;
use sttc_bench::pipeline::{fit_backbone, load_data, stream_test};

fn drift_config() -> RunConfig {
    RunConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/drift.conf")).unwrap()
}

#[test]
fn warm_up_forecasts_match_uncalibrated() {
    let cfg = drift_config();
    let data = load_data(&cfg, 3).unwrap();
    let fitted = fit_backbone(&cfg, &data, 3).unwrap();
    let mut off = Vec::new();
    let mut on = Vec::new();
    stream_test(&cfg, &data, &fitted, false, |_, f| off.push(f.clone())).unwrap();
    stream_test(&cfg, &data, &fitted, true, |_, f| on.push(f.clone())).unwrap();
    assert_eq!(off.len(), on.len());
    for (i, (a, b)) in off.iter().zip(&on).enumerate() {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if i <= cfg.horizon {
            // the first update lands after the forecast of step T_f
            assert!(diff < 1e-9, "step {i}: {diff}");
        }
    }
    assert!(off.iter().zip(&on).skip(cfg.horizon + 1).any(|(a, b)| a != b));
}

#[test]
fn update_count_is_stream_length_minus_horizon() {
    let cfg = drift_config();
    let data = load_data(&cfg, 0).unwrap();
    let fitted = fit_backbone(&cfg, &data, 0).unwrap();
    let out = stream_test(&cfg, &data, &fitted, true, |_, _| {}).unwrap();
    let cal = out.calibrator.unwrap();
    assert_eq!(cal.updates + cal.skipped_updates, out.test_windows - cfg.horizon);
    assert_eq!(cal.leaked_updates, 0);
    assert_eq!(cal.param_count, 2 * 8 * 4);
}
