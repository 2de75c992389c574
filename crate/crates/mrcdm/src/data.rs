//! ETT-format CSV input/output and dataset preparation.
//!
//! An ETT file has a header row, an ISO 8601 timestamp in the first column
//! and one feature per remaining column. Empty cells and `NaN` mark missing
//! samples.

use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use mrcdm_core::datagen::{synthesize, SynthConfig};
use mrcdm_core::preprocess::{
    chronological_split, clip_outliers_3sigma, fit_normalizer, interpolate_missing, normalize, Normalizer, TimeSeries,
};

use crate::config::{sha256_hex, RunConfig};
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// First timestamp written for synthetic data, matching the ETT files.
pub fn synth_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2016, 7, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time")
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| Error::Data(format!("`{t}` is not a number")))
}

/// Read one feature column. Returns the timestamps as written and the series.
pub fn read_ett(path: &Path, feature: &str) -> Result<(Vec<String>, TimeSeries)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ett_from(file, feature).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_ett_from(reader: impl std::io::Read, feature: &str) -> Result<(Vec<String>, TimeSeries)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == feature)
        .ok_or_else(|| Error::Data(format!("no column `{feature}` in header {:?}", headers.iter().collect::<Vec<_>>())))?;
    if col == 0 {
        return Err(Error::Data("the first column holds timestamps, not a feature".into()));
    }
    let mut stamps = Vec::new();
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        let line = i + 2;
        let ts = rec.get(0).unwrap_or("").trim();
        if NaiveDateTime::parse_from_str(ts, TIMESTAMP_FORMAT).is_err()
            && NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M:%S").is_err()
        {
            return Err(Error::Data(format!("line {line}: bad timestamp `{ts}`")));
        }
        stamps.push(ts.to_string());
        let cell = rec.get(col).unwrap_or("");
        samples.push(parse_cell(cell).map_err(|e| Error::Data(format!("line {line}: {e}")))?);
    }
    if samples.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok((stamps, TimeSeries::from_options(&samples)))
}

/// Write hourly columns starting at `start`. Unobserved samples of the first
/// series are written as empty cells.
pub fn write_ett(path: &Path, start: NaiveDateTime, names: &[&str], columns: &[&TimeSeries]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ett_to(file, start, names, columns).map_err(|e| match e {
        Error::Data(m) => Error::io(path, std::io::Error::other(m)),
        other => other,
    })
}

pub fn write_ett_to(writer: impl std::io::Write, start: NaiveDateTime, names: &[&str], columns: &[&TimeSeries]) -> Result<()> {
    assert_eq!(names.len(), columns.len());
    let n = columns.first().map_or(0, |c| c.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date"];
    header.extend_from_slice(names);
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for t in 0..n {
        let ts = (start + Duration::hours(t as i64)).format(TIMESTAMP_FORMAT).to_string();
        let mut row = vec![ts];
        for c in columns {
            row.push(if c.observed()[t] { format_value(c.values()[t]) } else { String::new() });
        }
        w.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// Shortest representation that parses back to the same bits.
pub fn format_value(v: f64) -> String {
    format!("{v:?}")
}

/// A cleaned, split and normalised univariate dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub normalizer: Normalizer,
    pub train: Vec<f64>,
    pub val: Vec<f64>,
    pub test: Vec<f64>,
}

impl Prepared {
    /// Clean (interpolate, clip), split chronologically and z-score with
    /// training statistics.
    pub fn from_series(id: String, raw: &TimeSeries, cfg: &RunConfig) -> Result<Self> {
        let clean = clip_outliers_3sigma(&interpolate_missing(raw)?);
        let (tr, va, te) = chronological_split(&clean, &cfg.split()?);
        let n = fit_normalizer(&tr)?;
        Ok(Self {
            id,
            normalizer: n,
            train: normalize(&tr, &n).into_values(),
            val: normalize(&va, &n).into_values(),
            test: normalize(&te, &n).into_values(),
        })
    }

    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let (id, series) = load_raw(cfg)?;
        Self::from_series(id, &series, cfg)
    }

    /// Tail of `before` (up to `seq_len` samples) followed by `seg`, so the
    /// first window of `seg` has a full history.
    fn with_context(before: &[f64], seg: &[f64], seq_len: usize) -> Vec<f64> {
        let mut v = before[before.len().saturating_sub(seq_len)..].to_vec();
        v.extend_from_slice(seg);
        v
    }

    pub fn val_context(&self, seq_len: usize) -> Vec<f64> {
        Self::with_context(&self.train, &self.val, seq_len)
    }

    pub fn test_context(&self, seq_len: usize) -> Vec<f64> {
        let before: Vec<f64> = self.train.iter().chain(&self.val).copied().collect();
        Self::with_context(&before, &self.test, seq_len)
    }
}

/// The configured raw series and a dataset id derived from its content.
pub fn load_raw(cfg: &RunConfig) -> Result<(String, TimeSeries)> {
    match &cfg.data.path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let (_, s) = read_ett_from(bytes.as_slice(), &cfg.data.feature)
                .map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((format!("file:{name}:{}:{}", cfg.data.feature, &sha256_hex(&bytes)[..12]), s))
        }
        None => {
            let sc = SynthConfig::from(&cfg.data.synth);
            let s = synthesize(&sc)?;
            let json = serde_json::to_string(&cfg.data.synth).expect("synth settings serialise");
            Ok((format!("synth:{}", &sha256_hex(json.as_bytes())[..12]), s))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_missing() {
        let s = TimeSeries::from_options(&[Some(1.5), None, Some(-0.1), Some(1e-17)]);
        let mut buf = Vec::new();
        write_ett_to(&mut buf, synth_start(), &["LUFL"], &[&s]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("date,LUFL\n2016-07-01 00:00:00,1.5\n2016-07-01 01:00:00,\n"));
        let (stamps, back) = read_ett_from(buf.as_slice(), "LUFL").unwrap();
        assert_eq!(stamps[3], "2016-07-01 03:00:00");
        assert_eq!(back, s);
    }

    #[test]
    fn nan_cells_are_missing() {
        let text = "date,HUFL,LUFL\n2016-07-01 00:00:00,1,2\n2016-07-01 01:00:00,1,NaN\n";
        let (_, s) = read_ett_from(text.as_bytes(), "LUFL").unwrap();
        assert_eq!(s.observed(), &[true, false]);
    }

    #[test]
    fn errors_name_the_problem() {
        let text = "date,LUFL\n2016-07-01 00:00:00,x\n";
        let e = read_ett_from(text.as_bytes(), "LUFL").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        assert!(read_ett_from(text.as_bytes(), "OT").is_err());
        assert!(read_ett_from("date,LUFL\nyesterday,1\n".as_bytes(), "LUFL").is_err());
    }

    #[test]
    fn contexts_prepend_history() {
        let p = Prepared {
            id: String::new(),
            normalizer: Normalizer::identity(),
            train: vec![0.0, 1.0, 2.0],
            val: vec![3.0],
            test: vec![4.0, 5.0],
        };
        assert_eq!(p.val_context(2), vec![1.0, 2.0, 3.0]);
        assert_eq!(p.test_context(2), vec![2.0, 3.0, 4.0, 5.0]);
        assert_eq!(p.test_context(10).len(), 6);
    }
}
