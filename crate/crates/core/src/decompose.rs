//! Multi-scale moving-average trend decomposition.
//!
//! Three centred moving averages with replicate padding are taken on the raw
//! series and differenced into bands:
//!
//! ```text
//! residual = x − MA5      trend1 = MA5 − MA25
//! trend2   = MA25 − MA51  trend3 = MA51
//! ```
//!
//! The bands telescope, so their sum is the input up to rounding.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{param, Error, Result};
use crate::preprocess::TimeSeries;

pub const DEFAULT_WINDOWS: [usize; 3] = [5, 25, 51];

/// Which band of a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Trend1,
    Trend2,
    Trend3,
    Residual,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Trend1, Component::Trend2, Component::Trend3, Component::Residual];

    pub fn name(self) -> &'static str {
        match self {
            Component::Trend1 => "trend1",
            Component::Trend2 => "trend2",
            Component::Trend3 => "trend3",
            Component::Residual => "residual",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendComponents {
    pub trend1: Vec<f64>,
    pub trend2: Vec<f64>,
    pub trend3: Vec<f64>,
    pub residual: Vec<f64>,
    pub windows: [usize; 3],
}

impl TrendComponents {
    pub fn get(&self, c: Component) -> &[f64] {
        match c {
            Component::Trend1 => &self.trend1,
            Component::Trend2 => &self.trend2,
            Component::Trend3 => &self.trend3,
            Component::Residual => &self.residual,
        }
    }

    pub fn get_mut(&mut self, c: Component) -> &mut Vec<f64> {
        match c {
            Component::Trend1 => &mut self.trend1,
            Component::Trend2 => &mut self.trend2,
            Component::Trend3 => &mut self.trend3,
            Component::Residual => &mut self.residual,
        }
    }

    pub fn len(&self) -> usize {
        self.trend3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend3.is_empty()
    }

    pub fn from_parts(parts: [Vec<f64>; 4], windows: [usize; 3]) -> Result<Self> {
        let [trend1, trend2, trend3, residual] = parts;
        let n = trend1.len();
        if trend2.len() != n || trend3.len() != n || residual.len() != n {
            return Err(Error::Shape("component lengths differ".into()));
        }
        Ok(Self { trend1, trend2, trend3, residual, windows })
    }

    /// Zero one band in place (trend-removal ablations).
    pub fn zero(&mut self, c: Component) {
        self.get_mut(c).iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Centred moving average of odd width `w`, edge values replicated
/// `(w−1)/2` times on each side.
pub fn moving_average(x: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 || w % 2 == 0 {
        return Err(param("window", format!("must be odd and positive, got {w}")));
    }
    if w > x.len() {
        return Err(param("window", format!("{w} exceeds series length {}", x.len())));
    }
    let n = x.len();
    let half = (w - 1) / 2;
    let at = |i: isize| -> f64 { x[i.clamp(0, n as isize - 1) as usize] };
    // Direct summation per output keeps each value independent of
    // accumulated rounding from a running sum.
    Ok((0..n as isize)
        .map(|t| {
            let s: f64 = (t - half as isize..=t + half as isize).map(at).sum();
            s / w as f64
        })
        .collect())
}

pub fn decompose(x: &TimeSeries) -> Result<TrendComponents> {
    decompose_with(x.values(), DEFAULT_WINDOWS)
}

pub fn decompose_with(x: &[f64], windows: [usize; 3]) -> Result<TrendComponents> {
    if !(windows[0] < windows[1] && windows[1] < windows[2]) {
        return Err(param("windows", "window sizes must be strictly increasing"));
    }
    if x.len() < windows[2] {
        return Err(Error::Input(format!(
            "series of length {} is shorter than the largest window {}",
            x.len(),
            windows[2]
        )));
    }
    let m1 = moving_average(x, windows[0])?;
    let m2 = moving_average(x, windows[1])?;
    let m3 = moving_average(x, windows[2])?;
    let sub = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p - q).collect() };
    Ok(TrendComponents {
        residual: sub(x, &m1),
        trend1: sub(&m1, &m2),
        trend2: sub(&m2, &m3),
        trend3: m3,
        windows,
    })
}

/// Elementwise sum of the four bands.
pub fn recompose(c: &TrendComponents) -> TimeSeries {
    TimeSeries::new(
        (0..c.len())
            .map(|t| c.trend1[t] + c.trend2[t] + c.trend3[t] + c.residual[t])
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::stats;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn moving_average_hand_values() {
        let out = moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 3).unwrap();
        // padded: [1,1,2,3,4,5,5]
        let want = [4.0 / 3.0, 2.0, 3.0, 4.0, 14.0 / 3.0];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn moving_average_rejects_bad_windows() {
        assert!(moving_average(&[1.0; 10], 4).is_err());
        assert!(moving_average(&[1.0; 10], 11).is_err());
        assert!(moving_average(&[1.0; 10], 0).is_err());
    }

    #[test]
    fn constant_series() {
        let x = TimeSeries::new(vec![3.25; 80]);
        for w in DEFAULT_WINDOWS {
            assert!(moving_average(x.values(), w).unwrap().iter().all(|&v| (v - 3.25).abs() < 1e-14));
        }
        let c = decompose(&x).unwrap();
        assert!(c.trend3.iter().all(|&v| (v - 3.25).abs() < 1e-14));
        for comp in [Component::Trend1, Component::Trend2, Component::Residual] {
            assert!(c.get(comp).iter().all(|&v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn linear_ramp_interior() {
        let x: Vec<f64> = (0..200).map(|t| 0.5 * t as f64 - 3.0).collect();
        let c = decompose_with(&x, DEFAULT_WINDOWS).unwrap();
        // Away from the replicate-padded edges the averages reproduce the ramp.
        for t in 25..175 {
            assert!(c.residual[t].abs() < 1e-12);
            assert!(c.trend1[t].abs() < 1e-12);
            assert!(c.trend2[t].abs() < 1e-12);
            assert!((c.trend3[t] - x[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn too_short() {
        assert!(decompose(&TimeSeries::new(vec![0.0; 50])).is_err());
        assert!(decompose(&TimeSeries::new(vec![0.0; 51])).is_ok());
    }

    #[test]
    fn smoothness_ordering_on_noisy_cycle() {
        for seed in [42, 43, 44] {
            let mut r = Rng::new(seed);
            let x: Vec<f64> = (0..600)
                .map(|t| libm::sin(2.0 * core::f64::consts::PI * t as f64 / 24.0) + 0.5 * r.normal())
                .collect();
            let diffvar = |v: &[f64]| {
                let d: Vec<f64> = v.windows(2).map(|p| p[1] - p[0]).collect();
                stats::variance(&d)
            };
            let m5 = moving_average(&x, 5).unwrap();
            let m25 = moving_average(&x, 25).unwrap();
            let m51 = moving_average(&x, 51).unwrap();
            assert!(diffvar(&m51) <= diffvar(&m25));
            assert!(diffvar(&m25) <= diffvar(&m5));
        }
    }

    proptest! {
        #[test]
        fn telescoping(seed in any::<u64>(), len in 51usize..512) {
            let mut r = Rng::new(seed);
            let v: Vec<f64> = (0..len).map(|_| 10.0 * r.normal()).collect();
            let c = decompose(&TimeSeries::new(v.clone())).unwrap();
            let back = recompose(&c);
            for (a, b) in back.values().iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn moving_average_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut r = Rng::new(seed);
            let x: Vec<f64> = (0..64).map(|_| r.normal()).collect();
            let y: Vec<f64> = (0..64).map(|_| r.normal()).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = moving_average(&mix, 25).unwrap();
            let mx = moving_average(&x, 25).unwrap();
            let my = moving_average(&y, 25).unwrap();
            for i in 0..64 {
                prop_assert!((lhs[i] - (a * mx[i] + b * my[i])).abs() < 1e-12);
            }
        }
    }
}
