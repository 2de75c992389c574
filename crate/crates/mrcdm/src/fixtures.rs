//! Golden fixtures: plain CSV inputs and expected outputs produced by
//! `scripts/make_fixtures.py`, listed in `index.csv`.
//!
//! A value passes when `|got − want| ≤ tolerance · max(1, |want|)`. Besides
//! the stored expectations, every fixture also checks the exact inverse of
//! its operation (recomposition, inverse transforms, denormalisation,
//! `rmse = √mse`).

use std::path::Path;

use mrcdm_core::decompose::{decompose_with, recompose, Component, DEFAULT_WINDOWS};
use mrcdm_core::embed::{delay_embed, delay_embed_invert, DEFAULT_DIM, DEFAULT_TAU};
use mrcdm_core::fusion::{defuse, fuse, lift_channels, ComponentLifts};
use mrcdm_core::metrics::compute_metrics;
use mrcdm_core::preprocess::{denormalize, fit_normalizer, interpolate_missing, normalize, TimeSeries};
use mrcdm_core::rng::Rng;
use mrcdm_core::stft::{istft, stft, StftParams};
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct GoldenFixture {
    pub name: String,
    pub operation: String,
    pub input: String,
    pub expected: String,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureResult {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

/// Numeric table: header plus rows; empty cells become `None`.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let header = r.headers().map_err(|e| Error::Data(e.to_string()))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let row = rec
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>().map(Some).map_err(|_| Error::Data(format!("{}: `{c}` is not a number", path.display())))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("no column `{name}`")))?;
        self.rows.iter().map(|r| r[i].ok_or_else(|| Error::Data(format!("empty cell in `{name}`")))).collect()
    }

    fn optional(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("no column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Largest scaled deviation between two equally long sequences.
fn max_err(got: &[f64], want: &[f64]) -> Result<f64> {
    if got.len() != want.len() {
        return Err(Error::Data(format!("{} values computed, {} expected", got.len(), want.len())));
    }
    Ok(got.iter().zip(want).map(|(g, w)| (g - w).abs() / w.abs().max(1.0)).fold(0.0, f64::max))
}

struct Check {
    err: f64,
    detail: String,
}

fn check(f: &GoldenFixture, dir: &Path) -> Result<Check> {
    let input = Table::read(&dir.join(&f.input))?;
    let expected = if f.expected.is_empty() { None } else { Some(Table::read(&dir.join(&f.expected))?) };
    let want = |c: &str| expected.as_ref().ok_or_else(|| Error::Data("fixture has no expected file".into()))?.col(c);
    match f.operation.as_str() {
        "decompose" => {
            let x = input.col("value")?;
            let c = decompose_with(&x, DEFAULT_WINDOWS)?;
            let mut err = 0.0f64;
            for comp in Component::ALL {
                err = err.max(max_err(c.get(comp), &want(comp.name())?)?);
            }
            let back = max_err(recompose(&c).values(), &x)?;
            Ok(Check { err: err.max(back), detail: format!("recompose error {back:e}") })
        }
        "stft" => {
            let x = input.col("value")?;
            let img = stft(&x, &StftParams::default())?;
            let (ch, row, col, val) = (want("channel")?, want("row")?, want("col")?, want("value")?);
            let got: Vec<f64> = (0..val.len()).map(|i| img.get(ch[i] as usize, row[i] as usize, col[i] as usize)).collect();
            let valid = img.valid_cells() * img.channels;
            if valid != val.len() {
                return Err(Error::Data(format!("{valid} valid cells computed, {} expected", val.len())));
            }
            let back = max_err(&istft(&img)?, &x)?;
            Ok(Check { err: max_err(&got, &val)?.max(back), detail: format!("inverse error {back:e}") })
        }
        "delay_embed" => {
            let x = input.col("value")?;
            let img = delay_embed(&x, DEFAULT_TAU, DEFAULT_DIM)?;
            let (row, col, val) = (want("row")?, want("col")?, want("value")?);
            let got: Vec<f64> = (0..val.len()).map(|i| img.get(0, row[i] as usize, col[i] as usize)).collect();
            if img.valid_cells() != val.len() {
                return Err(Error::Data(format!("{} valid cells computed, {} expected", img.valid_cells(), val.len())));
            }
            let back = max_err(&delay_embed_invert(&img)?, &x)?;
            Ok(Check { err: max_err(&got, &val)?.max(back), detail: format!("inverse error {back:e}") })
        }
        "fuse_defuse" => {
            let x = input.col("value")?;
            let c = decompose_with(&x, DEFAULT_WINDOWS)?;
            let embed = |s: &[f64]| delay_embed(s, DEFAULT_TAU, DEFAULT_DIM);
            let parts = [
                Some(embed(c.get(Component::Trend1))?),
                Some(embed(c.get(Component::Trend2))?),
                Some(stft(c.get(Component::Trend3), &StftParams::default())?),
                Some(embed(c.get(Component::Residual))?),
            ];
            let lifts = ComponentLifts::init(&mut Rng::new(0));
            let lifted: Vec<_> = parts
                .iter()
                .zip(Component::ALL)
                .map(|(p, comp)| lift_channels(p.as_ref().expect("present"), lifts.get(comp)))
                .collect::<std::result::Result<_, _>>()?;
            let back = defuse(&fuse(parts, Some(&lifts))?);
            let mut err = 0.0f64;
            for (a, b) in back.iter().zip(&lifted) {
                err = err.max(max_err(&a.data, &b.data)?);
            }
            Ok(Check { err, detail: "defuse(fuse(x)) against lifted blocks".into() })
        }
        "normalize" => {
            let s = TimeSeries::new(input.col("value")?);
            let n = fit_normalizer(&s)?;
            let z = normalize(&s, &n);
            let back = max_err(denormalize(&z, &n).values(), s.values())?;
            Ok(Check { err: max_err(z.values(), &want("value")?)?.max(back), detail: format!("round trip error {back:e}") })
        }
        "interpolate" => {
            let s = TimeSeries::from_options(&input.optional("value")?);
            let filled = interpolate_missing(&s)?;
            let again = max_err(interpolate_missing(&filled)?.values(), filled.values())?;
            Ok(Check { err: max_err(filled.values(), &want("value")?)?.max(again), detail: format!("idempotence error {again:e}") })
        }
        "metrics" => {
            let r = compute_metrics(&input.col("pred")?, &input.col("truth")?)?;
            let got = [r.mse, r.mae, r.rmse];
            let exp = [want("mse")?[0], want("mae")?[0], want("rmse")?[0]];
            let consistency = (r.rmse - r.mse.sqrt()).abs();
            Ok(Check { err: max_err(&got, &exp)?.max(consistency), detail: format!("rmse - sqrt(mse) = {consistency:e}") })
        }
        other => Err(Error::Data(format!("unknown fixture operation `{other}`"))),
    }
}

pub fn load_index(dir: &Path) -> Result<Vec<GoldenFixture>> {
    let path = dir.join("index.csv");
    let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut r = csv::Reader::from_reader(text.as_slice());
    r.deserialize().collect::<std::result::Result<Vec<_>, _>>().map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Check every fixture listed in `dir/index.csv`. Errors in a single
/// fixture are reported as failures, not aborts.
pub fn verify_fixtures(dir: &Path) -> Result<Vec<FixtureResult>> {
    let index = load_index(dir)?;
    Ok(index
        .into_iter()
        .map(|f| match check(&f, dir) {
            Ok(c) => FixtureResult {
                passed: c.err <= f.tolerance,
                name: f.name,
                max_error: c.err,
                tolerance: f.tolerance,
                detail: c.detail,
            },
            Err(e) => FixtureResult { name: f.name, max_error: f64::NAN, tolerance: f.tolerance, passed: false, detail: e.to_string() },
        })
        .collect())
}
