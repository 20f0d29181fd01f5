//! Text format for synthetic dataset specs.
//!
//! ```text
//! nodes = 8
//! length = 2000
//! tone = 1/12, 10, 0        # freq (cycles/step), amplitude, phase; repeatable
//! amp_drift_factor = 2      # amplitude multiplier reached at the last test step
//! noise_std = 0.2
//! ```

use std::fs;
use std::path::Path;

use sttc_core::synth::{SynthSpec, Tone};
use sttc_core::windows::SplitSpec;

use crate::error::{CliError, CliResult};

fn number(key: &str, v: &str) -> CliResult<f64> {
    let v = v.trim();
    let parsed = match v.split_once('/') {
        Some((a, b)) => a
            .trim()
            .parse::<f64>()
            .ok()
            .zip(b.trim().parse::<f64>().ok())
            .map(|(a, b)| a / b),
        None => v.parse::<f64>().ok(),
    };
    parsed
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Config(format!("{key}: '{v}' is not a number")))
}

fn integer<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: '{v}' is not an integer")))
}

pub fn parse_synth_spec(text: &str) -> CliResult<SynthSpec> {
    let mut spec = SynthSpec {
        tones: Vec::new(),
        ..SynthSpec::default()
    };
    let mut drift_factor = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("spec line {}: expected key = value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "nodes" => spec.n_nodes = integer(k, v)?,
            "length" => spec.t_total = integer(k, v)?,
            "seed" => spec.seed = integer(k, v)?,
            "tone" => {
                let parts: Vec<&str> = v.split(',').collect();
                if !(2..=3).contains(&parts.len()) {
                    return Err(CliError::Config(format!("tone '{v}': expected freq, amp[, phase]")));
                }
                spec.tones.push(Tone {
                    freq: number(k, parts[0])?,
                    base_amp: number(k, parts[1])?,
                    base_phase: parts.get(2).map(|p| number(k, p)).transpose()?.unwrap_or(0.0),
                });
            }
            "amp_drift_rate" => spec.amp_drift_rate = number(k, v)?,
            "amp_drift_factor" => drift_factor = Some(number(k, v)?),
            "phase_drift_rate" => spec.phase_drift_rate = number(k, v)?,
            "noise_std" => spec.noise_std = number(k, v)?,
            "offset" => spec.offset = number(k, v)?,
            "node_jitter" => spec.node_jitter = number(k, v)?,
            "interval_secs" => spec.sampling_interval_secs = integer(k, v)?,
            "split" => {
                let r = v.split(',').map(|x| number(k, x)).collect::<CliResult<Vec<_>>>()?;
                if r.len() != 3 {
                    return Err(CliError::Config("split: expected train,val,test".into()));
                }
                spec.split = SplitSpec::new(r[0], r[1], r[2])?;
            }
            other => return Err(CliError::Config(format!("unknown spec key '{other}'"))),
        }
    }
    if let Some(factor) = drift_factor {
        let test = spec.split.bounds(spec.t_total).test.len();
        if test < 2 {
            return Err(CliError::Config("amp_drift_factor needs a test split of >= 2 steps".into()));
        }
        spec.amp_drift_rate = (factor - 1.0) / (test - 1) as f64;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn load_synth_spec(path: &Path) -> CliResult<SynthSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", path.display())))?;
    parse_synth_spec(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tones_and_drift_factor() {
        let s = parse_synth_spec(
            "nodes = 3\nlength = 1000\ntone = 1/12, 10, 0.5\ntone = 0.25,2\namp_drift_factor = 2\nseed = 5\n",
        )
        .unwrap();
        assert_eq!(s.n_nodes, 3);
        assert_eq!(s.tones.len(), 2);
        assert!((s.tones[0].freq - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(s.tones[1].base_phase, 0.0);
        // test split is 200 steps; the last one reaches twice the base amplitude
        assert!((1.0 + s.amp_drift_rate * 199.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_aliased_and_malformed() {
        assert!(matches!(parse_synth_spec("tone = 0.7, 1"), Err(CliError::Config(_))));
        assert!(parse_synth_spec("tone = 1/0, 1").is_err());
        assert!(parse_synth_spec("tone = x").is_err());
        assert!(parse_synth_spec("nodes = 2").is_err());
        assert!(parse_synth_spec("weather = sunny").is_err());
    }
}
