//! JSON checkpoints: the model config, the data normaliser and every named
//! tensor. Loading rebuilds the model from its config and then overwrites
//! parameters by name, so a checkpoint from a different architecture fails
//! with a shape or name error instead of loading silently.

use std::collections::BTreeMap;
use std::path::Path;

use mrcdm_core::pipeline::{Forecaster, ModelConfig, Variant};
use mrcdm_core::preprocess::Normalizer;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, ModelSettings};
use crate::error::{Error, Result};

pub const FORMAT: &str = "mrcdm-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub block: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub variant: String,
    pub seq_len: usize,
    pub seed: u64,
    pub model: ModelSettings,
    /// Digest of the serialised `(variant, seq_len, seed, model)`.
    pub model_hash: String,
    pub dataset_id: String,
    pub normalizer_mean: f64,
    pub normalizer_std: f64,
    pub layout: Vec<LayoutEntry>,
    pub losses: Vec<f64>,
    pub tensors: Vec<Tensor>,
}

fn model_hash(variant: &str, seq_len: usize, seed: u64, model: &ModelSettings) -> String {
    let v = serde_json::json!({ "variant": variant, "seq_len": seq_len, "seed": seed, "model": model });
    sha256_hex(v.to_string().as_bytes())
}

impl Checkpoint {
    pub fn capture(m: &Forecaster, normalizer: &Normalizer, dataset_id: &str) -> Self {
        let c = &m.config;
        let model = ModelSettings::from(c);
        Self {
            format: FORMAT.into(),
            variant: c.variant.name().into(),
            seq_len: c.seq_len,
            seed: c.seed,
            model_hash: model_hash(c.variant.name(), c.seq_len, c.seed, &model),
            model,
            dataset_id: dataset_id.into(),
            normalizer_mean: normalizer.mean,
            normalizer_std: normalizer.std,
            layout: m
                .encoder
                .layout()
                .into_iter()
                .map(|(b, r)| LayoutEntry { block: b.into(), start: r.start, end: r.end })
                .collect(),
            losses: m.losses.clone(),
            tensors: m
                .params()
                .into_iter()
                .map(|p| Tensor { name: p.name.clone(), shape: p.shape.clone(), values: p.value.clone() })
                .collect(),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let v = Variant::parse(&self.variant)
            .ok_or_else(|| Error::Data(format!("checkpoint names unknown variant `{}`", self.variant)))?;
        Ok(self.model.model_config(v, self.seq_len, self.seed))
    }

    pub fn normalizer(&self) -> Result<Normalizer> {
        Ok(Normalizer::new(self.normalizer_mean, self.normalizer_std)?)
    }

    /// Rebuild the model and load every tensor by name.
    pub fn restore(&self) -> Result<Forecaster> {
        if self.format != FORMAT {
            return Err(Error::Data(format!("unsupported checkpoint format `{}`", self.format)));
        }
        if self.model_hash != model_hash(&self.variant, self.seq_len, self.seed, &self.model) {
            return Err(Error::Data("checkpoint model hash does not match its config".into()));
        }
        let mut m = Forecaster::new(self.model_config()?)?;
        let mut by_name: BTreeMap<&str, &Tensor> = BTreeMap::new();
        for t in &self.tensors {
            if by_name.insert(&t.name, t).is_some() {
                return Err(Error::Data(format!("tensor `{}` appears twice", t.name)));
            }
        }
        let mut used = 0;
        for p in m.params_mut() {
            let t = by_name.get(p.name.as_str()).ok_or_else(|| Error::Data(format!("checkpoint lacks tensor `{}`", p.name)))?;
            if t.shape != p.shape || t.values.len() != p.value.len() {
                return Err(Error::Data(format!(
                    "tensor `{}` has shape {:?} with {} values, model expects {:?}",
                    p.name,
                    t.shape,
                    t.values.len(),
                    p.shape
                )));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("tensor `{}` holds non-finite values", p.name)));
            }
            p.value.copy_from_slice(&t.values);
            used += 1;
        }
        if used != by_name.len() {
            return Err(Error::Data(format!("checkpoint has {} tensors, model uses {used}", by_name.len())));
        }
        m.losses = self.losses.clone();
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}
