//! Series container, cleaning, z-score normalisation, chronological
//! splitting and sliding-window extraction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{param, Error, Result};
use crate::stats;

/// Univariate series with an observation mask (`true` where the value was observed).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    observed: Vec<bool>,
    /// Sampling interval in hours.
    pub step: f64,
}

impl TimeSeries {
    /// Fully observed hourly series.
    pub fn new(values: Vec<f64>) -> Self {
        let observed = vec![true; values.len()];
        Self { values, observed, step: 1.0 }
    }

    pub fn with_mask(values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        if values.len() != observed.len() {
            return Err(Error::Shape(format!(
                "{} values but {} mask entries",
                values.len(),
                observed.len()
            )));
        }
        Ok(Self { values, observed, step: 1.0 })
    }

    /// Build from optional samples; `None` marks a missing value.
    pub fn from_options(samples: &[Option<f64>]) -> Self {
        let values = samples.iter().map(|s| s.unwrap_or(0.0)).collect();
        let observed = samples.iter().map(Option::is_some).collect();
        Self { values, observed, step: 1.0 }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Contiguous sub-series `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            values: self.values[start..end].to_vec(),
            observed: self.observed[start..end].to_vec(),
            step: self.step,
        }
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            observed: self.observed.clone(),
            step: self.step,
        }
    }
}

/// Fill missing samples: linear interpolation between the nearest observed
/// neighbours in the interior, constant extension at either end. A single
/// observation is extended over the whole series; none at all is an error.
pub fn interpolate_missing(series: &TimeSeries) -> Result<TimeSeries> {
    let idx: Vec<usize> = (0..series.len()).filter(|&i| series.observed[i]).collect();
    if idx.is_empty() {
        return Err(Error::Input("series has no observed samples".into()));
    }
    let v = &series.values;
    let mut out = v.clone();
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    for o in out.iter_mut().take(first) {
        *o = v[first];
    }
    for o in out.iter_mut().skip(last + 1) {
        *o = v[last];
    }
    for pair in idx.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let span = (b - a) as f64;
        for (t, o) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let f = (t - a) as f64 / span;
            *o = v[a] + f * (v[b] - v[a]);
        }
    }
    if let Some(t) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("sample {t} after interpolation")));
    }
    Ok(TimeSeries { values: out, observed: vec![true; series.len()], step: series.step })
}

/// Clamp values outside `mean ± 3·std` (statistics of the whole input) to the
/// nearest bound. Zero-variance input is returned unchanged.
pub fn clip_outliers_3sigma(series: &TimeSeries) -> TimeSeries {
    let (lo, hi) = three_sigma_bounds(series.values());
    if lo == hi {
        return series.clone();
    }
    series.map_values(|v| v.clamp(lo, hi))
}

/// The `[mean − 3σ, mean + 3σ]` interval used by [`clip_outliers_3sigma`].
pub fn three_sigma_bounds(x: &[f64]) -> (f64, f64) {
    let m = stats::mean(x);
    let s = stats::std_dev(x);
    (m - 3.0 * s, m + 3.0 * s)
}

/// Z-score statistics. `std` is the population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(param("std", format!("must be finite and positive, got {std}")));
        }
        Ok(Self { mean, std })
    }

    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

pub fn fit_normalizer(train: &TimeSeries) -> Result<Normalizer> {
    if train.len() < 2 {
        return Err(Error::Input(format!("training segment has {} samples", train.len())));
    }
    let mean = stats::mean(train.values());
    let std = stats::std_dev(train.values());
    if std == 0.0 {
        return Err(Error::ZeroVariance("normalization undefined for a constant training segment".into()));
    }
    Normalizer::new(mean, std)
}

pub fn normalize(series: &TimeSeries, n: &Normalizer) -> TimeSeries {
    series.map_values(|v| n.apply(v))
}

pub fn denormalize(series: &TimeSeries, n: &Normalizer) -> TimeSeries {
    series.map_values(|v| n.invert(v))
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        for (name, f) in [("train", train), ("val", val), ("test", test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(param(name, format!("fraction must lie in (0,1), got {f}")));
            }
        }
        if libm::fabs(train + val + test - 1.0) > 1e-9 {
            return Err(param("split", format!("fractions sum to {}", train + val + test)));
        }
        Ok(Self { train, val, test })
    }
}

impl Default for SplitSpec {
    /// 70/10/20.
    fn default() -> Self {
        Self { train: 0.7, val: 0.1, test: 0.2 }
    }
}

/// Contiguous train/val/test segments of lengths ⌊L·train⌋, ⌊L·val⌋ and the remainder.
pub fn chronological_split(series: &TimeSeries, spec: &SplitSpec) -> (TimeSeries, TimeSeries, TimeSeries) {
    let l = series.len();
    let n_train = libm::floor(l as f64 * spec.train) as usize;
    let n_val = libm::floor(l as f64 * spec.val) as usize;
    (
        series.slice(0, n_train),
        series.slice(n_train, n_train + n_val),
        series.slice(n_train + n_val, l),
    )
}

/// One forecasting example: `history = x[t−seq_len..t)`, `target = x[t..t+horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub history: Vec<f64>,
    pub target: Vec<f64>,
}

pub fn window_count(len: usize, seq_len: usize, horizon: usize, stride: usize) -> usize {
    if seq_len + horizon > len || stride == 0 {
        0
    } else {
        (len - seq_len - horizon) / stride + 1
    }
}

pub fn make_windows(series: &TimeSeries, seq_len: usize, horizon: usize, stride: usize) -> Result<Vec<Window>> {
    if stride == 0 {
        return Err(param("stride", "must be positive"));
    }
    if seq_len == 0 || horizon == 0 {
        return Err(param("seq_len/horizon", "must be positive"));
    }
    if seq_len + horizon > series.len() {
        return Err(param(
            "seq_len",
            format!("seq_len {seq_len} + horizon {horizon} exceeds series length {}", series.len()),
        ));
    }
    let v = series.values();
    let n = window_count(series.len(), seq_len, horizon, stride);
    Ok((0..n)
        .map(|i| {
            let s = i * stride;
            Window {
                start: s,
                history: v[s..s + seq_len].to_vec(),
                target: v[s + seq_len..s + seq_len + horizon].to_vec(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn interpolate_midpoint_and_edges() {
        let s = TimeSeries::from_options(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(interpolate_missing(&s).unwrap().values(), &[1.0, 2.0, 3.0]);

        let s = TimeSeries::from_options(&[None, Some(5.0), None]);
        assert_eq!(interpolate_missing(&s).unwrap().values(), &[5.0; 3]);

        let s = TimeSeries::from_options(&[None, None]);
        assert!(matches!(interpolate_missing(&s), Err(Error::Input(_))));

        let s = TimeSeries::from_options(&[None, Some(5.0), Some(5.0), None]);
        assert_eq!(interpolate_missing(&s).unwrap().values(), &[5.0; 4]);
    }

    #[test]
    fn interpolate_two_gap_segment() {
        let s = TimeSeries::from_options(&[Some(0.0), None, None, Some(9.0)]);
        let out = interpolate_missing(&s).unwrap();
        // slope 9/3 = 3 per step
        assert_eq!(out.values(), &[0.0, 3.0, 6.0, 9.0]);
        assert!(out.is_fully_observed());
    }

    #[test]
    fn interpolate_is_idempotent_on_observed() {
        let s = TimeSeries::new(vec![1.0, -2.0, 4.5]);
        assert_eq!(interpolate_missing(&s).unwrap(), s);
    }

    #[test]
    fn clip_constant_and_inliers() {
        let s = TimeSeries::new(vec![2.0; 10]);
        assert_eq!(clip_outliers_3sigma(&s), s);
        let s = TimeSeries::new(vec![0.0, 1.0, 2.0, 1.0, 0.0]);
        assert_eq!(clip_outliers_3sigma(&s), s);
    }

    #[test]
    fn clip_single_spike() {
        let mut v = vec![0.0; 99];
        v.push(1000.0);
        // mean = 10, E[x^2] = 1e6/100 = 1e4, var = 1e4 - 100 = 9900
        let mu = 10.0;
        let sigma = 9900f64.sqrt();
        let out = clip_outliers_3sigma(&TimeSeries::new(v));
        assert!((out.values()[99] - (mu + 3.0 * sigma)).abs() < 1e-9);
        assert!(out.values()[..99].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalizer_population_std() {
        let n = fit_normalizer(&TimeSeries::new(vec![0.0, 0.0, 2.0, 2.0])).unwrap();
        assert_eq!(n.mean, 1.0);
        assert_eq!(n.std, 1.0);
        assert!(matches!(fit_normalizer(&TimeSeries::new(vec![5.0; 8])), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn normalizer_on_gaussian_sample() {
        let mut r = Rng::new(11);
        let v: Vec<f64> = (0..10_000).map(|_| r.normal()).collect();
        let n = fit_normalizer(&TimeSeries::new(v)).unwrap();
        assert!(n.mean.abs() < 0.05);
        assert!((n.std - 1.0).abs() < 0.05);
    }

    #[test]
    fn split_lengths_and_remainder() {
        let s = TimeSeries::new((0..17).map(f64::from).collect());
        let (a, b, c) = chronological_split(&s, &SplitSpec::default());
        // floor(11.9)=11, floor(1.7)=1, remainder 5
        assert_eq!((a.len(), b.len(), c.len()), (11, 1, 5));
        let joined: Vec<f64> = [a.values(), b.values(), c.values()].concat();
        assert_eq!(joined, s.values());
        assert!(SplitSpec::new(0.5, 0.5, 0.1).is_err());
    }

    #[test]
    fn window_counts() {
        let s = TimeSeries::new(vec![0.0; 192]);
        // floor((192 - 96 - 96) / 96) + 1
        assert_eq!(make_windows(&s, 96, 96, 96).unwrap().len(), 1);
        let s = TimeSeries::new(vec![0.0; 288]);
        assert_eq!(make_windows(&s, 96, 96, 96).unwrap().len(), 2);
        let s = TimeSeries::new(vec![0.0; 96]);
        assert!(make_windows(&s, 96, 1, 1).is_err());
    }

    #[test]
    fn windows_slice_correctly() {
        let s = TimeSeries::new((0..500).map(f64::from).collect());
        for h in [24, 48, 96, 192] {
            let w = make_windows(&s, 96, h, 7).unwrap();
            assert_eq!(w.len(), (500 - 96 - h) / 7 + 1);
            for win in &w {
                assert_eq!(win.history[0], win.start as f64);
                assert_eq!(win.target[0], (win.start + 96) as f64);
                assert_eq!(win.target.len(), h);
            }
        }
    }

    proptest! {
        #[test]
        fn normalize_round_trip(v in proptest::collection::vec(-1e3f64..1e3, 2..200), m in -50.0f64..50.0, sd in 0.1f64..20.0) {
            let s = TimeSeries::new(v);
            let n = Normalizer::new(m, sd).unwrap();
            let back = denormalize(&normalize(&s, &n), &n);
            for (a, b) in back.values().iter().zip(s.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn clip_respects_bounds(v in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
            let s = TimeSeries::new(v);
            let (lo, hi) = three_sigma_bounds(s.values());
            let out = clip_outliers_3sigma(&s);
            prop_assert!(out.values().iter().all(|&x| x >= lo - 1e-9 && x <= hi + 1e-9));
        }
    }
}
