//! Run configuration: JSON schema, validation and flag overrides.
//!
//! Precedence, lowest to highest: built-in defaults, the `--config` file,
//! command-line flags. A config file may also be a run manifest, in which
//! case its embedded config is used.

use std::path::{Path, PathBuf};

use mrcdm_core::datagen::SynthConfig;
use mrcdm_core::pipeline::{ModelConfig, Variant};
use mrcdm_core::preprocess::SplitSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub n_points: usize,
    pub seed: u64,
    pub target_mean: f64,
    pub target_std: f64,
    pub amp_daily: f64,
    pub amp_weekly: f64,
    pub trend_slope: f64,
    pub noise_std: f64,
    pub daytime_boost: f64,
    pub missing_rate: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self::from(&SynthConfig::default())
    }
}

impl From<&SynthConfig> for SynthSettings {
    fn from(c: &SynthConfig) -> Self {
        Self {
            n_points: c.n_points,
            seed: c.seed,
            target_mean: c.target_mean,
            target_std: c.target_std,
            amp_daily: c.amp_daily,
            amp_weekly: c.amp_weekly,
            trend_slope: c.trend_slope,
            noise_std: c.noise_std,
            daytime_boost: c.daytime_boost,
            missing_rate: c.missing_rate,
        }
    }
}

impl From<&SynthSettings> for SynthConfig {
    fn from(s: &SynthSettings) -> Self {
        SynthConfig {
            n_points: s.n_points,
            seed: s.seed,
            target_mean: s.target_mean,
            target_std: s.target_std,
            amp_daily: s.amp_daily,
            amp_weekly: s.amp_weekly,
            trend_slope: s.trend_slope,
            noise_std: s.noise_std,
            daytime_boost: s.daytime_boost,
            missing_rate: s.missing_rate,
        }
    }
}

/// Model hyperparameters other than variant, input length and seed, which
/// come from the run. Defaults are the desk profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden: usize,
    pub res_blocks: usize,
    pub groups: usize,
    pub time_dim: usize,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub precondition: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub train_stride: usize,
    pub n_samples: usize,
    pub recon_windows: usize,
    pub recon_steps: usize,
    pub recon_lr: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self::from(&ModelConfig::desk())
    }
}

impl From<&ModelConfig> for ModelSettings {
    fn from(c: &ModelConfig) -> Self {
        Self {
            hidden: c.hidden,
            res_blocks: c.res_blocks,
            groups: c.groups,
            time_dim: c.time_dim,
            diffusion_steps: c.diffusion_steps,
            beta_start: c.beta_start,
            beta_end: c.beta_end,
            precondition: c.precondition,
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            clip_norm: c.clip_norm,
            train_stride: c.train_stride,
            n_samples: c.n_samples,
            recon_windows: c.recon_windows,
            recon_steps: c.recon_steps,
            recon_lr: c.recon_lr,
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self, variant: Variant, seq_len: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            variant,
            seq_len,
            seed,
            hidden: self.hidden,
            res_blocks: self.res_blocks,
            groups: self.groups,
            time_dim: self.time_dim,
            diffusion_steps: self.diffusion_steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            precondition: self.precondition,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            clip_norm: self.clip_norm,
            train_stride: self.train_stride,
            n_samples: self.n_samples,
            recon_windows: self.recon_windows,
            recon_steps: self.recon_steps,
            recon_lr: self.recon_lr,
        }
    }
}

/// A dataset file, or a synthetic series when `path` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub path: Option<PathBuf>,
    pub synth: SynthSettings,
    /// Feature column read from an ETT-format file.
    pub feature: String,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for DataSettings {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            path: None,
            synth: SynthSettings::default(),
            feature: "LUFL".into(),
            train_frac: s.train,
            val_frac: s.val,
            test_frac: s.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSettings,
    pub seq_len: usize,
    pub horizon: usize,
    pub variant: String,
    /// Variants trained by `ablate`.
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    /// Horizons scored by `evaluate`.
    pub horizons: Vec<usize>,
    /// Input lengths trained by `sweep`.
    pub seq_lens: Vec<usize>,
    /// Baselines scored next to the model: `seasonal_naive`, `naive`, `arima`.
    pub baselines: Vec<String>,
    pub model: ModelSettings,
    pub out_dir: PathBuf,
    pub plot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSettings::default(),
            seq_len: 96,
            horizon: 96,
            variant: Variant::FullModel.name().into(),
            variants: Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
            seeds: vec![42, 43, 44],
            horizons: vec![24, 48, 96, 192],
            seq_lens: vec![48, 96, 192],
            baselines: vec!["seasonal_naive".into(), "naive".into(), "arima".into()],
            model: ModelSettings::default(),
            out_dir: PathBuf::from("runs/default"),
            plot: false,
        }
    }
}

pub const BASELINES: [&str; 3] = ["seasonal_naive", "naive", "arima"];

/// Command-line values that replace config fields when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub horizon: Option<usize>,
    pub seq_len: Option<usize>,
    pub out: Option<PathBuf>,
    pub plot: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        // a run manifest carries the config that produced it
        let v = match v.get("config") {
            Some(c) if v.get("command").is_some() => c.clone(),
            _ => v,
        };
        serde_json::from_value(v).map_err(|e| Error::config("<file>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(mut v) => {
                for (p, _) in v.iter_mut() {
                    if p == "<file>" {
                        *p = path.display().to_string();
                    }
                }
                Error::Config(v)
            }
            other => other,
        })
    }

    /// `--seed` narrows `seeds`, `--variant` narrows `variants`, `--horizon`
    /// narrows `horizons` and `--seq-len` narrows `seq_lens`.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(v) = &o.variant {
            self.variant = v.clone();
            self.variants = vec![v.clone()];
        }
        if let Some(h) = o.horizon {
            self.horizon = h;
            self.horizons = vec![h];
        }
        if let Some(l) = o.seq_len {
            self.seq_len = l;
            self.seq_lens = vec![l];
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        self.plot |= o.plot;
    }

    pub fn variant(&self) -> Result<Variant> {
        Variant::parse(&self.variant).ok_or_else(|| Error::config("variant", format!("unknown variant `{}`", self.variant)))
    }

    pub fn variant_list(&self) -> Result<Vec<Variant>> {
        self.variants
            .iter()
            .enumerate()
            .map(|(i, v)| Variant::parse(v).ok_or_else(|| Error::config(format!("variants[{i}]"), format!("unknown variant `{v}`"))))
            .collect()
    }

    pub fn split(&self) -> Result<SplitSpec> {
        Ok(SplitSpec::new(self.data.train_frac, self.data.val_frac, self.data.test_frac)?)
    }

    /// Every problem with a field path, so one run reports them all.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut need = |ok: bool, path: String, msg: String| {
            if !ok {
                out.push((path, msg));
            }
        };
        need(self.seq_len >= 1, "seq_len".into(), "must be positive".into());
        need(self.horizon >= 1, "horizon".into(), "must be positive".into());
        need(Variant::parse(&self.variant).is_some(), "variant".into(), format!("unknown variant `{}`", self.variant));
        for (i, v) in self.variants.iter().enumerate() {
            need(Variant::parse(v).is_some(), format!("variants[{i}]"), format!("unknown variant `{v}`"));
        }
        need(!self.seeds.is_empty(), "seeds".into(), "must list at least one seed".into());
        for (i, &h) in self.horizons.iter().enumerate() {
            need(h >= 1, format!("horizons[{i}]"), "must be positive".into());
        }
        for (i, &l) in self.seq_lens.iter().enumerate() {
            need(l >= 1, format!("seq_lens[{i}]"), "must be positive".into());
        }
        for (i, b) in self.baselines.iter().enumerate() {
            need(BASELINES.contains(&b.as_str()), format!("baselines[{i}]"), format!("unknown baseline `{b}`, expected one of {BASELINES:?}"));
        }
        if let Err(e) = SplitSpec::new(self.data.train_frac, self.data.val_frac, self.data.test_frac) {
            need(false, "data.train_frac/val_frac/test_frac".into(), e.to_string());
        }
        need(!self.data.feature.is_empty(), "data.feature".into(), "must name a column".into());
        if self.data.path.is_none() {
            if let Err(e) = SynthConfig::from(&self.data.synth).validate() {
                need(false, "data.synth".into(), e.to_string());
            }
        }
        let m = self.model.model_config(Variant::FullModel, self.seq_len.max(1), 0);
        for (name, msg) in m.problems() {
            if name != "seq_len" {
                need(false, format!("model.{name}"), msg);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Digest of everything that affects results; the output directory and
    /// plotting switch are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.plot = false;
        sha256_hex(serde_json::to_string(&c).expect("config serialises").as_bytes())
    }

    pub fn model_config(&self, variant: Variant, seq_len: usize, seed: u64) -> ModelConfig {
        self.model.model_config(variant, seq_len, seed)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn all_problems_reported_with_paths() {
        let text = r#"{"seq_len": 0, "variant": "Nope", "model": {"hidden": 10, "groups": 4, "lr": -1.0}, "baselines": ["prophet"]}"#;
        let c = RunConfig::from_json(text).unwrap();
        let paths: Vec<String> = c.problems().into_iter().map(|(p, _)| p).collect();
        for want in ["seq_len", "variant", "model.groups", "model.lr", "baselines[0]"] {
            assert!(paths.iter().any(|p| p == want), "missing {want} in {paths:?}");
        }
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"sequence": 3}"#), Err(Error::Config(_))));
    }

    #[test]
    fn flags_override_file() {
        let mut c = RunConfig::from_json(r#"{"seeds": [1, 2], "horizon": 24}"#).unwrap();
        c.apply(&Overrides { seed: Some(7), horizon: Some(48), variant: Some("NoTrend1".into()), ..Default::default() });
        assert_eq!(c.seeds, vec![7]);
        assert_eq!((c.horizon, c.horizons.clone()), (48, vec![48]));
        assert_eq!(c.variant().unwrap(), Variant::NoTrend1);
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let b = RunConfig { out_dir: "elsewhere".into(), plot: true, ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { horizon: 24, ..RunConfig::default() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn manifest_is_accepted_as_config() {
        let c = RunConfig { horizon: 48, ..RunConfig::default() };
        let m = serde_json::json!({ "command": "evaluate", "config": c });
        assert_eq!(RunConfig::from_json(&m.to_string()).unwrap(), c);
    }
}
