use alloc::format;
use alloc::vec::Vec;

use crate::error::{param, Result};

/// Variance schedule of the forward noising process. Index `k` here is
/// step `k + 1` of the usual 1-based notation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// `ᾱ_k = Π_{s≤k} (1 − β_s)`.
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(param("steps", "schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(param("beta", format!("every beta must lie in (0,1), got {b}")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut acc = 1.0;
        let alpha_bars = alphas
            .iter()
            .map(|a| {
                acc *= a;
                acc
            })
            .collect();
        Ok(Self { betas, alphas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }
}

/// Linearly spaced betas from `beta_start` to `beta_end`.
pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(param("steps", "must be at least 1"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(param("beta", format!("need 0 < start ≤ end < 1, got [{beta_start}, {beta_end}]")));
    }
    let betas = if steps == 1 {
        alloc::vec![beta_start]
    } else {
        (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect()
    };
    NoiseSchedule::from_betas(betas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn single_step() {
        let s = make_linear_schedule(1, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bars, alloc::vec![0.5]);
    }

    #[test]
    fn fifty_step_product() {
        let s = make_linear_schedule(50, 1e-4, 0.05).unwrap();
        let mut prod = 1.0;
        for i in 0..50 {
            let b = 1e-4 + (0.05 - 1e-4) * i as f64 / 49.0;
            prod *= 1.0 - b;
        }
        assert!((s.alpha_bars[49] - prod).abs() < 1e-12);
        assert!(s.alpha_bars[49] > 0.0 && s.alpha_bars[49] < 1.0);
    }

    #[test]
    fn invariants_over_random_configs() {
        let mut r = Rng::new(0);
        for _ in 0..100 {
            let k = 1 + r.below(200);
            let a = r.uniform_range(1e-5, 0.2);
            let b = r.uniform_range(a, 0.5);
            let s = make_linear_schedule(k, a, b).unwrap();
            assert_eq!(s.alpha_bars[0], 1.0 - s.betas[0]);
            assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
            let last = s.alpha_bars[k - 1];
            assert!(last > 0.0 && last < 1.0);
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(make_linear_schedule(0, 0.1, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.3, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.0, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.1, 1.0).is_err());
    }
}
