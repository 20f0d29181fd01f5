//! SGD and Adam for the calibrator offsets.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{CalibratorParams, ParamGrads};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config(format!("unknown optimizer '{other}'"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// First/second moment estimates, shaped like the offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m_alpha: Array2<f64>,
    pub m_phi: Array2<f64>,
    pub v_alpha: Array2<f64>,
    pub v_phi: Array2<f64>,
}

impl Moments {
    fn zeros(dim: (usize, usize)) -> Self {
        Self {
            m_alpha: Array2::zeros(dim),
            m_phi: Array2::zeros(dim),
            v_alpha: Array2::zeros(dim),
            v_phi: Array2::zeros(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    /// Present for Adam only.
    pub moments: Option<Moments>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            moments: None,
        }
    }

    /// Adam with `(0.9, 0.999, 1e-8)` and zeroed moments shaped like `params`.
    pub fn adam(learning_rate: f64, params: &CalibratorParams) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            moments: Some(Moments::zeros(params.lambda_alpha.dim())),
            ..Self::sgd(learning_rate)
        }
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &CalibratorParams) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(learning_rate),
            OptimizerKind::Adam => Self::adam(learning_rate, params),
        }
    }
}

/// Applies one optimizer step in place.
pub fn optimizer_step(
    params: &mut CalibratorParams,
    grads: &ParamGrads,
    opt: &mut OptimizerState,
) -> Result<()> {
    let dim = params.lambda_alpha.dim();
    if grads.d_lambda_alpha.dim() != dim || grads.d_lambda_phi.dim() != dim {
        return Err(Error::shape(format!(
            "gradient {:?} vs parameters {dim:?}",
            grads.d_lambda_alpha.dim()
        )));
    }
    let lr = opt.learning_rate;
    match opt.kind {
        OptimizerKind::Sgd => {
            params.lambda_alpha.scaled_add(-lr, &grads.d_lambda_alpha);
            params.lambda_phi.scaled_add(-lr, &grads.d_lambda_phi);
            opt.step_count += 1;
        }
        OptimizerKind::Adam => {
            let moments = opt.moments.get_or_insert_with(|| Moments::zeros(dim));
            if moments.m_alpha.dim() != dim {
                return Err(Error::shape("optimizer moments do not match parameters"));
            }
            opt.step_count += 1;
            let t = opt.step_count as i32;
            let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.eps);
            let bc1 = 1.0 - b1.powi(t);
            let bc2 = 1.0 - b2.powi(t);
            let update = |p: &mut Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, g: &Array2<f64>| {
                Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
            };
            update(
                &mut params.lambda_alpha,
                &mut moments.m_alpha,
                &mut moments.v_alpha,
                &grads.d_lambda_alpha,
            );
            update(
                &mut params.lambda_phi,
                &mut moments.m_phi,
                &mut moments.v_phi,
                &grads.d_lambda_phi,
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params_1x1() -> CalibratorParams {
        CalibratorParams::for_horizon(2, 1, 1).unwrap()
    }

    fn grads(a: f64, p: f64) -> ParamGrads {
        ParamGrads {
            d_lambda_alpha: array![[a]],
            d_lambda_phi: array![[p]],
        }
    }

    #[test]
    fn sgd_examples() {
        let mut p = params_1x1();
        let mut opt = OptimizerState::sgd(0.1);
        optimizer_step(&mut p, &grads(2.0, 0.0), &mut opt).unwrap();
        assert!((p.lambda_alpha[[0, 0]] + 0.2).abs() < 1e-15);
        assert_eq!(opt.step_count, 1);
        let before = p.clone();
        optimizer_step(&mut p, &grads(0.0, 0.0), &mut opt).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count, 2);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = params_1x1();
        let mut opt = OptimizerState::adam(1e-4, &p);
        optimizer_step(&mut p, &grads(5.0, -3.0), &mut opt).unwrap();
        // bias-corrected moments: m̂ = g, v̂ = g², step = lr·g/(|g| + ε)
        let want_a = -1e-4 * 5.0 / (5.0 + 1e-8);
        let want_p = 1e-4 * 3.0 / (3.0 + 1e-8);
        assert!((p.lambda_alpha[[0, 0]] - want_a).abs() < 1e-18);
        assert!((p.lambda_phi[[0, 0]] - want_p).abs() < 1e-18);
    }

    #[test]
    fn adam_matches_hand_rolled_recurrence() {
        let gs = [0.3, -1.2, 0.05, 2.0, 0.0, -0.7];
        let (lr, b1, b2, eps) = (1e-2, 0.9, 0.999, 1e-8);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
        let mut p = params_1x1();
        let mut opt = OptimizerState::adam(lr, &p);
        for (i, &g) in gs.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            x -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            optimizer_step(&mut p, &grads(g, 0.0), &mut opt).unwrap();
            assert!((p.lambda_alpha[[0, 0]] - x).abs() < 1e-15);
        }
        assert_eq!(opt.step_count, gs.len() as u64);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = CalibratorParams::for_horizon(12, 4, 2).unwrap();
        let mut opt = OptimizerState::sgd(0.1);
        assert!(matches!(
            optimizer_step(&mut p, &grads(1.0, 1.0), &mut opt).unwrap_err(),
            Error::ShapeMismatch(_)
        ));
        assert_eq!(opt.step_count, 0);
    }
}
