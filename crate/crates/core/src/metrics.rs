//! Point-forecast error metrics.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub n_windows: usize,
    /// Per-window MSE, filled when the report comes from an accumulator.
    pub window_mse: Vec<f64>,
}

pub fn compute_metrics(pred: &[f64], truth: &[f64]) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::default();
    acc.add(pred, truth)?;
    let mut r = acc.finish()?;
    r.window_mse.clear();
    Ok(r)
}

/// Averages metrics over windows. Every window contributes equally,
/// regardless of its length.
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    mse: Vec<f64>,
    mae: Vec<f64>,
}

impl MetricAccumulator {
    pub fn add(&mut self, pred: &[f64], truth: &[f64]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!("prediction has {} points, truth {}", pred.len(), truth.len())));
        }
        if pred.is_empty() {
            return Err(Error::Input("empty window".into()));
        }
        let n = pred.len() as f64;
        let (mut se, mut ae) = (0.0, 0.0);
        for (p, t) in pred.iter().zip(truth) {
            let d = p - t;
            se += d * d;
            ae += d.abs();
        }
        if !(se.is_finite() && ae.is_finite()) {
            return Err(Error::NonFinite("forecast error".into()));
        }
        self.mse.push(se / n);
        self.mae.push(ae / n);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mse.is_empty()
    }

    pub fn finish(self) -> Result<MetricReport> {
        if self.mse.is_empty() {
            return Err(Error::Input("no windows to score".into()));
        }
        let n = self.mse.len() as f64;
        let mse = self.mse.iter().sum::<f64>() / n;
        let mae = self.mae.iter().sum::<f64>() / n;
        Ok(MetricReport { mse, mae, rmse: libm::sqrt(mse), n_windows: self.mse.len(), window_mse: self.mse })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn perfect_forecast() {
        let r = compute_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.mse, r.mae, r.rmse), (0.0, 0.0, 0.0));
        assert_eq!(r.n_windows, 1);
    }

    #[test]
    fn unit_offset() {
        let r = compute_metrics(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.mse, r.mae, r.rmse), (1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_example() {
        let r = compute_metrics(&[1.0, 2.0], &[3.0, 2.0]).unwrap();
        assert_eq!(r.mse, 2.0);
        assert_eq!(r.mae, 1.0);
        assert!((r.rmse - libm::sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn window_average() {
        let mut acc = MetricAccumulator::default();
        acc.add(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        acc.add(&[0.0, 0.0], &[3.0, 3.0]).unwrap();
        let r = acc.finish().unwrap();
        assert_eq!(r.mse, 5.0);
        assert_eq!(r.mae, 2.0);
        assert_eq!(r.window_mse, vec![1.0, 9.0]);
    }

    #[test]
    fn rejects_mismatch() {
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(MetricAccumulator::default().finish().is_err());
    }

    proptest! {
        #[test]
        fn rmse_is_sqrt_mse(pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = compute_metrics(&p, &t).unwrap();
            prop_assert!((r.rmse - r.mse.sqrt()).abs() <= 1e-9 * (1.0 + r.rmse));
            prop_assert!(r.mse >= 0.0 && r.mae >= 0.0);
            prop_assert!(r.mae <= r.rmse + 1e-9);
        }
    }
}
