//! Training and evaluation protocols: single evaluation, multi-horizon,
//! input-length sweep, ablations and multi-seed aggregation.
//!
//! Metrics are computed in normalised (z-score) space over non-overlapping
//! test windows (stride = horizon). Each window gets its own random stream
//! derived from the seed and window index, so results do not depend on the
//! number of threads.

use std::collections::BTreeMap;

use mrcdm_core::baselines::{arima_fit, arima_forecast, naive_last, seasonal_naive};
use mrcdm_core::metrics::{MetricAccumulator, MetricReport};
use mrcdm_core::pipeline::{Forecaster, ModelConfig, Progress, Variant};
use mrcdm_core::preprocess::{make_windows, TimeSeries, Window};
use mrcdm_core::rng::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Prepared;
use crate::error::{Error, Result};

/// Seasonal period of the seasonal-naive baseline (hours).
pub const SEASON: usize = 24;
/// Monte Carlo paths for the ARIMA spread; the point forecast is analytic.
const ARIMA_DRAWS: usize = 0;
const TAG_EVAL: u64 = 0x6576_616c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Model(Variant),
    SeasonalNaive,
    Naive,
    Arima,
}

impl Method {
    pub fn parse_baseline(s: &str) -> Option<Method> {
        match s {
            "seasonal_naive" => Some(Method::SeasonalNaive),
            "naive" => Some(Method::Naive),
            "arima" => Some(Method::Arima),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Model(v) => v.name(),
            Method::SeasonalNaive => "seasonal_naive",
            Method::Naive => "naive",
            Method::Arima => "arima",
        }
    }
}

/// One scored run; a row of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: String,
    pub seed: u64,
    pub seq_len: usize,
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub n_windows: usize,
}

impl RunRow {
    pub fn new(method: Method, seed: u64, seq_len: usize, horizon: usize, r: &MetricReport) -> Self {
        Self {
            method: method.name().into(),
            seed,
            seq_len,
            horizon,
            mse: r.mse,
            mae: r.mae,
            rmse: r.rmse,
            n_windows: r.n_windows,
        }
    }
}

/// Mean and population std of each metric over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub seq_len: usize,
    pub horizon: usize,
    pub runs: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

/// Test windows with full histories, stride = horizon.
pub fn test_windows(data: &Prepared, seq_len: usize, horizon: usize) -> Result<Vec<Window>> {
    let series = TimeSeries::new(data.test_context(seq_len));
    make_windows(&series, seq_len, horizon, horizon)
        .map_err(|e| Error::Data(format!("test split too short for seq_len {seq_len} and horizon {horizon}: {e}")))
}

fn window_rng(seed: u64, horizon: usize, index: usize) -> Rng {
    Rng::new(seed).fork(TAG_EVAL).fork(((horizon as u64) << 32) | index as u64)
}

fn score(windows: &[Window], preds: Vec<Vec<f64>>) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::default();
    for (w, p) in windows.iter().zip(&preds) {
        acc.add(p, &w.target)?;
    }
    Ok(acc.finish()?)
}

/// Point forecasts for every window, in window order.
pub fn model_forecasts(m: &Forecaster, windows: &[Window], seed: u64) -> Result<Vec<Vec<f64>>> {
    windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = window_rng(seed, w.target.len(), i);
            Ok(m.forecast(&w.history, w.target.len(), &mut rng)?)
        })
        .collect()
}

pub fn evaluate_model(m: &Forecaster, data: &Prepared, horizon: usize, seed: u64) -> Result<MetricReport> {
    let windows = test_windows(data, m.config.seq_len, horizon)?;
    let preds = model_forecasts(m, &windows, seed)?;
    score(&windows, preds)
}

/// A fitted baseline. ARIMA is fitted once on the training split.
pub enum Baseline {
    SeasonalNaive,
    Naive,
    Arima(mrcdm_core::baselines::ArimaModel),
}

impl Baseline {
    pub fn fit(method: Method, data: &Prepared) -> Result<Self> {
        Ok(match method {
            Method::SeasonalNaive => Baseline::SeasonalNaive,
            Method::Naive => Baseline::Naive,
            Method::Arima => Baseline::Arima(arima_fit(&data.train)?),
            Method::Model(_) => return Err(Error::config("baselines", "a model is not a baseline")),
        })
    }

    pub fn forecast(&self, history: &[f64], horizon: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(match self {
            Baseline::SeasonalNaive => seasonal_naive(history, horizon, SEASON)?,
            Baseline::Naive => naive_last(history, horizon)?,
            Baseline::Arima(m) => arima_forecast(m, history, horizon, rng, ARIMA_DRAWS)?.mean,
        })
    }
}

pub fn evaluate_baseline(b: &Baseline, data: &Prepared, seq_len: usize, horizon: usize, seed: u64) -> Result<MetricReport> {
    let windows = test_windows(data, seq_len, horizon)?;
    let preds = windows
        .iter()
        .enumerate()
        .map(|(i, w)| b.forecast(&w.history, horizon, &mut window_rng(seed, horizon, i)))
        .collect::<Result<Vec<_>>>()?;
    score(&windows, preds)
}

/// Train from scratch on the training split; the validation split selects
/// the reconstructor weights.
pub fn train(config: ModelConfig, data: &Prepared, progress: &mut dyn Progress) -> Result<Forecaster> {
    let mut m = Forecaster::new(config)?;
    let val = data.val_context(m.config.seq_len);
    m.fit(&data.train, &val, progress)?;
    if m.losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("training loss diverged".into()));
    }
    Ok(m)
}

/// One trained model scored at several horizons.
pub fn multi_horizon(m: &Forecaster, data: &Prepared, horizons: &[usize], seed: u64) -> Result<Vec<RunRow>> {
    horizons
        .iter()
        .map(|&h| Ok(RunRow::new(Method::Model(m.config.variant), seed, m.config.seq_len, h, &evaluate_model(m, data, h, seed)?)))
        .collect()
}

/// A training job: model config plus the horizon to score.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: ModelConfig,
    pub horizon: usize,
}

/// Train and score independent jobs, in parallel; rows come back in job order.
pub fn run_jobs(jobs: &[Job], data: &Prepared, on_done: &(dyn Fn(&Job, &RunRow) + Sync)) -> Result<Vec<RunRow>> {
    jobs.par_iter()
        .map(|j| {
            let m = train(j.config.clone(), data, &mut ())?;
            let r = evaluate_model(&m, data, j.horizon, j.config.seed)?;
            let row = RunRow::new(Method::Model(j.config.variant), j.config.seed, j.config.seq_len, j.horizon, &r);
            on_done(j, &row);
            Ok(row)
        })
        .collect()
}

/// Every variant trained from scratch with the same budget, for every seed.
pub fn ablation_jobs(base: &ModelConfig, variants: &[Variant], seeds: &[u64], horizon: usize) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &v in variants {
        for &s in seeds {
            jobs.push(Job { config: ModelConfig { variant: v, seed: s, ..base.clone() }, horizon });
        }
    }
    jobs
}

pub fn sweep_jobs(base: &ModelConfig, seq_lens: &[usize], seeds: &[u64], horizon: usize) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &l in seq_lens {
        for &s in seeds {
            jobs.push(Job { config: ModelConfig { seq_len: l, seed: s, ..base.clone() }, horizon });
        }
    }
    jobs
}

pub fn run_ablations(base: &ModelConfig, variants: &[Variant], seeds: &[u64], data: &Prepared, horizon: usize) -> Result<Vec<RunRow>> {
    run_jobs(&ablation_jobs(base, variants, seeds, horizon), data, &|_, _| {})
}

pub fn input_length_sweep(base: &ModelConfig, seq_lens: &[usize], seeds: &[u64], data: &Prepared, horizon: usize) -> Result<Vec<RunRow>> {
    run_jobs(&sweep_jobs(base, seq_lens, seeds, horizon), data, &|_, _| {})
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Aggregate rows over seeds, keyed by (method, seq_len, horizon). Output
/// order is by key, whatever the input order.
pub fn multi_seed(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, usize), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.seq_len, r.horizon)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, seq_len, horizon), mut g)| {
            g.sort_by_key(|r| r.seed);
            let col = |f: fn(&RunRow) -> f64| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (mse_mean, mse_std) = col(|r| r.mse);
            let (mae_mean, mae_std) = col(|r| r.mae);
            let (rmse_mean, rmse_std) = col(|r| r.rmse);
            SummaryRow { method, seq_len, horizon, runs: g.len(), mse_mean, mse_std, mae_mean, mae_std, rmse_mean, rmse_std }
        })
        .collect()
}
