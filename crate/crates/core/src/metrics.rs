//! MAE / RMSE / MAPE with missing-value masks and per-horizon breakdown.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truth values with `|y| <` this are left out of MAPE.
pub const DEFAULT_MAPE_ZERO_EPS: f64 = 1e-6;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn check_lengths(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<()> {
    if pred.len() != truth.len() || mask.is_some_and(|m| m.len() != truth.len()) {
        return Err(Error::shape(format!(
            "metric inputs differ in length: pred {}, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

fn reduce(
    pred: &[f64],
    truth: &[f64],
    mask: Option<&[bool]>,
    keep: impl Fn(f64) -> bool,
    term: impl Fn(f64, f64) -> f64,
) -> Result<Option<f64>> {
    check_lengths(pred, truth, mask)?;
    let mut acc = CompensatedSum::default();
    let mut count = 0usize;
    for (i, (&p, &y)) in pred.iter().zip(truth).enumerate() {
        if mask.is_some_and(|m| !m[i]) || !keep(y) {
            continue;
        }
        acc.add(term(p, y));
        count += 1;
    }
    Ok((count > 0).then(|| acc.value() / count as f64))
}

/// Mean absolute error over unmasked entries; `None` if everything is masked.
pub fn metric_mae(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<Option<f64>> {
    reduce(pred, truth, mask, |_| true, |p, y| (y - p).abs())
}

pub fn metric_rmse(pred: &[f64], truth: &[f64], mask: Option<&[bool]>) -> Result<Option<f64>> {
    Ok(reduce(pred, truth, mask, |_| true, |p, y| (y - p) * (y - p))?.map(f64::sqrt))
}

/// Mean absolute percentage error in percent, skipping `|truth| < zero_eps`.
pub fn metric_mape(
    pred: &[f64],
    truth: &[f64],
    mask: Option<&[bool]>,
    zero_eps: f64,
) -> Result<Option<f64>> {
    Ok(reduce(
        pred,
        truth,
        mask,
        |y| y.abs() >= zero_eps,
        |p, y| ((p - y) / y).abs(),
    )?
    .map(|v| v * 100.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub mae: Vec<Option<f64>>,
    pub rmse: Vec<Option<f64>>,
    pub mape_percent: Vec<Option<f64>>,
}

/// Aggregated error metrics of a forecast stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub mape_percent: Option<f64>,
    pub per_horizon: HorizonMetrics,
    pub sample_count: usize,
    pub masked_count: usize,
}

#[derive(Debug, Clone, Default)]
struct StepSums {
    abs: CompensatedSum,
    sq: CompensatedSum,
    ape: CompensatedSum,
    count: usize,
    ape_count: usize,
}

/// Streams forecast/truth pairs (`N × T_f` each) into per-horizon sums.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    steps: Vec<StepSums>,
    zero_eps: f64,
    samples: usize,
    masked: usize,
}

impl MetricsAccumulator {
    pub fn new(horizon: usize, zero_eps: f64) -> Self {
        Self {
            steps: vec![StepSums::default(); horizon],
            zero_eps,
            samples: 0,
            masked: 0,
        }
    }

    pub fn push(
        &mut self,
        pred: &Array2<f64>,
        truth: &Array2<f64>,
        mask: Option<&Array2<bool>>,
    ) -> Result<()> {
        if pred.dim() != truth.dim() || pred.ncols() != self.steps.len() {
            return Err(Error::shape(format!(
                "prediction {:?} / truth {:?} for horizon {}",
                pred.dim(),
                truth.dim(),
                self.steps.len()
            )));
        }
        if mask.is_some_and(|m| m.dim() != truth.dim()) {
            return Err(Error::shape("mask shape differs from truth"));
        }
        self.samples += 1;
        for ((n, h), &y) in truth.indexed_iter() {
            if mask.is_some_and(|m| !m[[n, h]]) {
                self.masked += 1;
                continue;
            }
            let e = pred[[n, h]] - y;
            let s = &mut self.steps[h];
            s.abs.add(e.abs());
            s.sq.add(e * e);
            s.count += 1;
            if y.abs() >= self.zero_eps {
                s.ape.add((e / y).abs());
                s.ape_count += 1;
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> MetricsReport {
        let ratio = |sum: f64, count: usize| (count > 0).then(|| sum / count as f64);
        let mut total = StepSums::default();
        let mut per = HorizonMetrics {
            mae: Vec::new(),
            rmse: Vec::new(),
            mape_percent: Vec::new(),
        };
        for s in &self.steps {
            per.mae.push(ratio(s.abs.value(), s.count));
            per.rmse.push(ratio(s.sq.value(), s.count).map(f64::sqrt));
            per.mape_percent.push(ratio(s.ape.value(), s.ape_count).map(|v| v * 100.0));
            total.abs.add(s.abs.value());
            total.sq.add(s.sq.value());
            total.ape.add(s.ape.value());
            total.count += s.count;
            total.ape_count += s.ape_count;
        }
        MetricsReport {
            mae: ratio(total.abs.value(), total.count),
            rmse: ratio(total.sq.value(), total.count).map(f64::sqrt),
            mape_percent: ratio(total.ape.value(), total.ape_count).map(|v| v * 100.0),
            per_horizon: per,
            sample_count: self.samples,
            masked_count: self.masked,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn textbook_values() {
        let (t, p) = ([1.0, 2.0], [2.0, 4.0]);
        assert_eq!(metric_mae(&p, &t, None).unwrap(), Some(1.5));
        assert!((metric_rmse(&p, &t, None).unwrap().unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(metric_mape(&p, &t, None, DEFAULT_MAPE_ZERO_EPS).unwrap(), Some(100.0));
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let t = [3.0, -1.0, 7.5];
        assert_eq!(metric_mae(&t, &t, None).unwrap(), Some(0.0));
        assert_eq!(metric_rmse(&t, &t, None).unwrap(), Some(0.0));
        assert_eq!(metric_mape(&t, &t, None, 1e-6).unwrap(), Some(0.0));
    }

    #[test]
    fn mape_skips_zero_truth() {
        let (t, p) = ([0.0, 2.0], [1.0, 2.0]);
        assert_eq!(metric_mape(&p, &t, None, 1e-6).unwrap(), Some(0.0));
        assert_eq!(metric_mae(&p, &t, None).unwrap(), Some(0.5));
    }

    #[test]
    fn fully_masked_is_absent() {
        let mask = [false, false];
        assert_eq!(metric_mae(&[1.0, 2.0], &[0.0, 0.0], Some(&mask)).unwrap(), None);
        assert_eq!(metric_mape(&[1.0], &[0.0], None, 1e-6).unwrap(), None);
        assert!(metric_mae(&[1.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn accumulator_per_horizon() {
        let mut acc = MetricsAccumulator::new(2, 1e-6);
        acc.push(&array![[1.0, 2.0]], &array![[2.0, 4.0]], None).unwrap();
        acc.push(&array![[0.0, 0.0]], &array![[1.0, 0.0]], Some(&array![[true, false]])).unwrap();
        let r = acc.finish();
        assert_eq!(r.sample_count, 2);
        assert_eq!(r.masked_count, 1);
        assert_eq!(r.per_horizon.mae, vec![Some(1.0), Some(2.0)]);
        assert_eq!(r.mae, Some(4.0 / 3.0));
        assert_eq!(r.per_horizon.mape_percent, vec![Some(75.0), Some(50.0)]);
    }

    #[test]
    fn mape_is_not_shift_invariant() {
        let (t, p) = ([1.0, 2.0], [2.0, 4.0]);
        let c = 10.0;
        let ts: Vec<f64> = t.iter().map(|v| v + c).collect();
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        assert_eq!(metric_mae(&ps, &ts, None).unwrap(), metric_mae(&p, &t, None).unwrap());
        assert_ne!(
            metric_mape(&ps, &ts, None, 1e-6).unwrap(),
            metric_mape(&p, &t, None, 1e-6).unwrap()
        );
    }

    proptest! {
        #[test]
        fn identities(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64), c in -50.0f64..50.0) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mae = metric_mae(&p, &t, None).unwrap().unwrap();
            let rmse = metric_rmse(&p, &t, None).unwrap().unwrap();
            let mse = p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
            prop_assert!(mae >= 0.0);
            prop_assert!(rmse + 1e-9 * rmse.max(1.0) >= mae);
            prop_assert!((rmse * rmse - mse).abs() <= 1e-9 * mse.max(1.0));
            let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
            let ts: Vec<f64> = t.iter().map(|v| v + c).collect();
            let mae_s = metric_mae(&ps, &ts, None).unwrap().unwrap();
            let rmse_s = metric_rmse(&ps, &ts, None).unwrap().unwrap();
            prop_assert!((mae_s - mae).abs() <= 1e-9 * mae.max(1.0));
            prop_assert!((rmse_s - rmse).abs() <= 1e-9 * rmse.max(1.0));
        }
    }
}
