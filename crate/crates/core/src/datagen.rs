//! Synthetic hourly load-like series: daily and weekly cycles, a linear
//! trend, a daytime boost and Gaussian noise, rescaled to a target mean/std.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{param, Result};
use crate::preprocess::TimeSeries;
use crate::rng::Rng;
use crate::stats;

pub const DAY: usize = 24;
pub const WEEK: usize = 168;
/// Hours (inclusive start, exclusive end) that receive the daytime boost.
pub const DAYTIME: (usize, usize) = (8, 20);

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_points: usize,
    pub seed: u64,
    pub target_mean: f64,
    pub target_std: f64,
    pub amp_daily: f64,
    pub amp_weekly: f64,
    pub trend_slope: f64,
    pub noise_std: f64,
    pub daytime_boost: f64,
    /// Probability that a sample is marked unobserved.
    pub missing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_points: 17_420,
            seed: 42,
            target_mean: 13.3,
            target_std: 8.6,
            amp_daily: 1.0,
            amp_weekly: 0.5,
            trend_slope: 2e-5,
            noise_std: 0.6,
            daytime_boost: 1.2,
            missing_rate: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 1000 {
            return Err(param("n_points", format!("must be >= 1000, got {}", self.n_points)));
        }
        let finite = [
            ("target_mean", self.target_mean),
            ("target_std", self.target_std),
            ("amp_daily", self.amp_daily),
            ("amp_weekly", self.amp_weekly),
            ("trend_slope", self.trend_slope),
            ("noise_std", self.noise_std),
            ("daytime_boost", self.daytime_boost),
            ("missing_rate", self.missing_rate),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(param(name, format!("must be finite, got {v}")));
            }
        }
        if self.target_std < 0.0 {
            return Err(param("target_std", format!("must be >= 0, got {}", self.target_std)));
        }
        if self.noise_std < 0.0 {
            return Err(param("noise_std", format!("must be >= 0, got {}", self.noise_std)));
        }
        if self.daytime_boost < 1.0 {
            return Err(param("daytime_boost", format!("must be >= 1, got {}", self.daytime_boost)));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(param("missing_rate", format!("must be in [0, 1), got {}", self.missing_rate)));
        }
        Ok(())
    }
}

fn boost(t: usize, factor: f64) -> f64 {
    let hour = t % DAY;
    if hour >= DAYTIME.0 && hour < DAYTIME.1 {
        factor
    } else {
        1.0
    }
}

/// Shifts and scales `x` in place so its mean and population std hit the
/// targets. A constant input becomes the constant `mean`.
pub fn rescale(x: &mut [f64], mean: f64, std: f64) {
    let m = stats::mean(x);
    let s = stats::std_dev(x);
    if s == 0.0 {
        x.iter_mut().for_each(|v| *v = mean);
        return;
    }
    let k = std / s;
    x.iter_mut().for_each(|v| *v = (*v - m) * k + mean);
    // One correction pass absorbs the rounding left by the first.
    let m2 = stats::mean(x);
    x.iter_mut().for_each(|v| *v += mean - m2);
}

/// Raw signal before rescaling, plus the observation mask.
fn raw(cfg: &SynthConfig, rng: &mut Rng) -> (Vec<f64>, Vec<bool>) {
    let phase_d = rng.uniform_range(0.0, 2.0 * PI);
    let phase_w = rng.uniform_range(0.0, 2.0 * PI);
    let mut noise = rng.fork(1);
    let mut drops = rng.fork(2);
    let mut x = Vec::with_capacity(cfg.n_points);
    let mut observed = Vec::with_capacity(cfg.n_points);
    for t in 0..cfg.n_points {
        let tf = t as f64;
        let signal = cfg.amp_daily * libm::sin(2.0 * PI * tf / DAY as f64 + phase_d)
            + cfg.amp_weekly * libm::sin(2.0 * PI * tf / WEEK as f64 + phase_w)
            + cfg.trend_slope * tf;
        let eps = if cfg.noise_std > 0.0 { cfg.noise_std * noise.normal() } else { 0.0 };
        x.push(boost(t, cfg.daytime_boost) * signal + eps);
        observed.push(cfg.missing_rate == 0.0 || drops.uniform() >= cfg.missing_rate);
    }
    (x, observed)
}

pub fn synthesize(cfg: &SynthConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let (mut x, observed) = raw(cfg, &mut rng);
    rescale(&mut x, cfg.target_mean, cfg.target_std);
    TimeSeries::with_mask(x, observed)
}

/// Returns the base series followed by `k_extra` channels, each correlated
/// with the base at roughly `rho`. All channels share the base's mask.
pub fn synthesize_correlated(cfg: &SynthConfig, k_extra: usize, rho: f64) -> Result<Vec<TimeSeries>> {
    cfg.validate()?;
    if !(-1.0..=1.0).contains(&rho) {
        return Err(param("rho", format!("must be in [-1, 1], got {rho}")));
    }
    let mut rng = Rng::new(cfg.seed);
    let (mut x, observed) = raw(cfg, &mut rng);
    let mut z = x.clone();
    rescale(&mut z, 0.0, 1.0);
    rescale(&mut x, cfg.target_mean, cfg.target_std);
    let mut out = Vec::with_capacity(k_extra + 1);
    out.push(TimeSeries::with_mask(x, observed.clone())?);
    let indep = libm::sqrt(1.0 - rho * rho);
    for i in 0..k_extra {
        let mut r = rng.fork(100 + i as u64);
        let mut c: Vec<f64> = z.iter().map(|&b| rho * b + indep * r.normal()).collect();
        rescale(&mut c, cfg.target_mean, cfg.target_std);
        out.push(TimeSeries::with_mask(c, observed.clone())?);
    }
    Ok(out)
}
