//! End-to-end forecaster: encode history and target blocks as fused images,
//! train the conditional denoiser, sample, and reconstruct.
//!
//! The model works on blocks of [`BLOCK`] samples. A history of `seq_len`
//! samples is left-padded with its first value to a whole number of blocks,
//! each block is encoded separately and the encodings are stacked along
//! channels to form the condition. Horizons up to one block are generated
//! in one pass and truncated; longer horizons are generated block by block,
//! feeding each forecast back into the history.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::decompose::{decompose_with, Component, TrendComponents, DEFAULT_WINDOWS};
use crate::diffusion::{
    make_linear_schedule, p_sample_loop, train_denoiser, Denoiser, DenoiserConfig, NoiseSchedule, TrainConfig,
    TrainingExample,
};
use crate::embed::{delay_embed, DEFAULT_DIM, DEFAULT_TAU};
use crate::error::{param, Error, Result};
use crate::fusion::{fuse, lift_channels, ChannelLift, ComponentLifts, FusedTensor};
use crate::image::TransformMeta;
use crate::nn::Param;
use crate::preprocess::make_windows;
use crate::preprocess::TimeSeries;
use crate::reconstruct::{invert_components_weighted, invert_single_weighted, Reconstructor};
use crate::rng::Rng;
use crate::stft::{stft, template_meta, StftParams};

/// Samples per encoded block.
pub const BLOCK: usize = 96;
/// Channels of one fully lifted block.
pub const FUSED_CHANNELS: usize = 35;

/// Samples before a block that its widest moving average can see.
pub const CONTEXT: usize = (DEFAULT_WINDOWS[2] - 1) / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    FullModel,
    NoDecomposition,
    UnconditionalDiffusion,
    NoImageFusion,
    NoTrend1,
    NoTrend3,
}

/// The switches a variant can flip. Every ablation differs from
/// [`Variant::FullModel`] in exactly one field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantFlags {
    pub decompose: bool,
    pub conditional: bool,
    pub lift: bool,
    pub drop: Option<Component>,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::FullModel,
        Variant::NoDecomposition,
        Variant::UnconditionalDiffusion,
        Variant::NoImageFusion,
        Variant::NoTrend1,
        Variant::NoTrend3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FullModel => "FullModel",
            Variant::NoDecomposition => "NoDecomposition",
            Variant::UnconditionalDiffusion => "UnconditionalDiffusion",
            Variant::NoImageFusion => "NoImageFusion",
            Variant::NoTrend1 => "NoTrend1",
            Variant::NoTrend3 => "NoTrend3",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub fn flags(self) -> VariantFlags {
        let full = VariantFlags { decompose: true, conditional: true, lift: true, drop: None };
        match self {
            Variant::FullModel => full,
            Variant::NoDecomposition => VariantFlags { decompose: false, ..full },
            Variant::UnconditionalDiffusion => VariantFlags { conditional: false, ..full },
            Variant::NoImageFusion => VariantFlags { lift: false, ..full },
            Variant::NoTrend1 => VariantFlags { drop: Some(Component::Trend1), ..full },
            Variant::NoTrend3 => VariantFlags { drop: Some(Component::Trend3), ..full },
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub seq_len: usize,
    pub hidden: usize,
    pub res_blocks: usize,
    pub groups: usize,
    pub time_dim: usize,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Skip-connected output, see [`Denoiser::precondition`].
    pub precondition: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Offset between consecutive training windows.
    pub train_stride: usize,
    /// Samples averaged into each point forecast.
    pub n_samples: usize,
    /// Training windows used to fit the reconstructor.
    pub recon_windows: usize,
    pub recon_steps: usize,
    pub recon_lr: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FullModel,
            seq_len: 96,
            hidden: 64,
            res_blocks: 4,
            groups: 8,
            time_dim: 64,
            diffusion_steps: 50,
            beta_start: 1e-4,
            beta_end: 0.2,
            precondition: true,
            epochs: 50,
            batch_size: 16,
            lr: 1e-3,
            clip_norm: 1.0,
            train_stride: 4,
            n_samples: 8,
            recon_windows: 32,
            recon_steps: 200,
            recon_lr: 1e-2,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// Reduced network and data budget that trains in about a minute on one
    /// CPU core. Optimiser settings are unchanged.
    pub fn desk() -> Self {
        Self {
            hidden: 16,
            res_blocks: 2,
            groups: 4,
            time_dim: 32,
            train_stride: 24,
            n_samples: 4,
            recon_windows: 12,
            ..Self::default()
        }
    }

    /// Every problem, not just the first.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut need = |ok: bool, name: &'static str, msg: String| {
            if !ok {
                out.push((name, msg));
            }
        };
        need(self.seq_len >= 1, "seq_len", format!("must be positive, got {}", self.seq_len));
        need(self.hidden >= 1, "hidden", format!("must be positive, got {}", self.hidden));
        need(
            self.groups >= 1 && self.hidden % self.groups.max(1) == 0,
            "groups",
            format!("must divide hidden ({}), got {}", self.hidden, self.groups),
        );
        need(self.time_dim >= 2 && self.time_dim % 2 == 0, "time_dim", format!("must be even and >= 2, got {}", self.time_dim));
        need(self.diffusion_steps >= 1, "diffusion_steps", format!("must be positive, got {}", self.diffusion_steps));
        need(
            self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0,
            "beta_start/beta_end",
            format!("need 0 < beta_start <= beta_end < 1, got {} and {}", self.beta_start, self.beta_end),
        );
        need(self.epochs >= 1, "epochs", format!("must be positive, got {}", self.epochs));
        need(self.batch_size >= 1, "batch_size", format!("must be positive, got {}", self.batch_size));
        need(self.lr > 0.0 && self.lr.is_finite(), "lr", format!("must be positive, got {}", self.lr));
        need(self.clip_norm > 0.0, "clip_norm", format!("must be positive, got {}", self.clip_norm));
        need(self.train_stride >= 1, "train_stride", format!("must be positive, got {}", self.train_stride));
        need(self.n_samples >= 1, "n_samples", format!("must be positive, got {}", self.n_samples));
        need(self.recon_lr > 0.0, "recon_lr", format!("must be positive, got {}", self.recon_lr));
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            None => Ok(()),
            Some((name, reason)) => Err(param(name, reason)),
        }
    }

    /// History blocks in the condition.
    pub fn history_blocks(&self) -> usize {
        self.seq_len.div_ceil(BLOCK)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_linear_schedule(self.diffusion_steps, self.beta_start, self.beta_end)
    }
}

/// Maps a block of samples to a fused tensor and back.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub flags: VariantFlags,
    pub lifts: Option<ComponentLifts>,
    /// 1→35 lift for the undecomposed series.
    pub series_lift: Option<ChannelLift>,
    template: FusedTensor,
}

impl Encoder {
    pub fn new(flags: VariantFlags, rng: &mut Rng) -> Result<Self> {
        let lifts = (flags.decompose && flags.lift).then(|| ComponentLifts::init(rng));
        let series_lift =
            (!flags.decompose && flags.lift).then(|| ChannelLift::identity_init("lift.series", 1, FUSED_CHANNELS, rng));
        let empty = FusedTensor { channels: 0, height: 0, width: 0, data: Vec::new(), blocks: Vec::new() };
        let mut enc = Self { flags, lifts, series_lift, template: empty };
        let mut t = enc.encode(&[0.0; BLOCK])?;
        for b in &mut t.blocks {
            if let TransformMeta::Stft(_) = b.meta {
                b.meta = TransformMeta::Stft(template_meta(BLOCK, &StftParams::default())?);
            }
        }
        t.data.iter_mut().for_each(|v| *v = 0.0);
        enc.template = t;
        Ok(enc)
    }

    pub fn channels(&self) -> usize {
        self.template.channels
    }

    pub fn cells(&self) -> usize {
        self.template.channels * self.template.plane()
    }

    pub fn cell_mask(&self) -> Vec<bool> {
        self.template.cell_mask()
    }

    /// Fused tensor of one block of exactly [`BLOCK`] samples, decomposed
    /// on its own.
    pub fn encode(&self, x: &[f64]) -> Result<FusedTensor> {
        self.encode_after(&[], x)
    }

    /// Fused tensor of a block that follows `context`. The moving averages
    /// reach back into the context instead of replicating the block's first
    /// sample, so the slow components continue smoothly from it.
    pub fn encode_after(&self, context: &[f64], x: &[f64]) -> Result<FusedTensor> {
        if x.len() != BLOCK {
            return Err(Error::Shape(format!("blocks hold {BLOCK} samples, got {}", x.len())));
        }
        if !self.flags.decompose {
            let img = delay_embed(x, DEFAULT_TAU, DEFAULT_DIM)?;
            let img = match &self.series_lift {
                Some(l) => lift_channels(&img, l)?,
                None => img,
            };
            return FusedTensor::stack(vec![(None, img)]);
        }
        let ctx = &context[context.len().saturating_sub(CONTEXT)..];
        let mut joined = Vec::with_capacity(ctx.len() + BLOCK);
        joined.extend_from_slice(ctx);
        joined.extend_from_slice(x);
        let c = decompose_with(&joined, DEFAULT_WINDOWS)?;
        let tail = |v: &[f64]| v[ctx.len()..].to_vec();
        let parts = [
            Some(delay_embed(&tail(&c.trend1), DEFAULT_TAU, DEFAULT_DIM)?),
            Some(delay_embed(&tail(&c.trend2), DEFAULT_TAU, DEFAULT_DIM)?),
            Some(stft(&tail(&c.trend3), &StftParams::default())?),
            Some(delay_embed(&tail(&c.residual), DEFAULT_TAU, DEFAULT_DIM)?),
        ];
        let mut f = fuse(parts, self.lifts.as_ref())?;
        if let Some(d) = self.flags.drop {
            f.zero_block(d);
        }
        Ok(f)
    }

    /// Stacked encodings of a history, left-padded to whole blocks. Each
    /// block is encoded after the samples before it.
    pub fn condition(&self, history: &[f64], blocks: usize) -> Result<Vec<f64>> {
        let total = blocks * BLOCK;
        if history.is_empty() || history.len() > total {
            return Err(Error::Shape(format!("history of {} samples does not fit {blocks} blocks", history.len())));
        }
        let mut padded = vec![history[0]; total - history.len()];
        padded.extend_from_slice(history);
        let mut out = Vec::with_capacity(blocks * self.cells());
        for b in 0..blocks {
            let start = b * BLOCK;
            out.extend_from_slice(&self.encode_after(&padded[..start], &padded[start..start + BLOCK])?.data);
        }
        Ok(out)
    }

    /// Channel range of each block, in layout order.
    pub fn layout(&self) -> Vec<(&'static str, core::ops::Range<usize>)> {
        self.template.blocks.iter().map(|b| (b.name(), b.range())).collect()
    }

    /// Wrap generated cells in the template layout.
    pub fn wrap(&self, data: Vec<f64>) -> Result<FusedTensor> {
        if data.len() != self.cells() {
            return Err(Error::Shape(format!("expected {} cells, got {}", self.cells(), data.len())));
        }
        let mut f = FusedTensor { data, ..self.template.clone() };
        f.apply_mask();
        Ok(f)
    }

    /// Component series of a generated block (decomposing variants only).
    /// `precision` weighs each channel row when collapsing the lifts.
    pub fn components(&self, data: Vec<f64>, precision: Option<&[f64]>) -> Result<TrendComponents> {
        invert_components_weighted(&self.wrap(data)?, self.lifts.as_ref(), precision)
    }

    /// Series of a generated block (undecomposed variant only).
    pub fn series(&self, data: Vec<f64>, precision: Option<&[f64]>) -> Result<Vec<f64>> {
        invert_single_weighted(&self.wrap(data)?, self.series_lift.as_ref(), precision)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        if let Some(l) = &self.lifts {
            for lift in &l.0 {
                v.push(&lift.weight);
                v.push(&lift.bias);
            }
        }
        if let Some(l) = &self.series_lift {
            v.push(&l.weight);
            v.push(&l.bias);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        if let Some(l) = &mut self.lifts {
            for lift in &mut l.0 {
                v.push(&mut lift.weight);
                v.push(&mut lift.bias);
            }
        }
        if let Some(l) = &mut self.series_lift {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v
    }
}

/// Smallest spread used when standardising a row of cells.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Affine standardisation of a fused block with one `(mean, std)` pair per
/// channel row, fitted on the valid cells of training targets. Spectrogram
/// rows are frequency bins whose magnitudes differ by orders of magnitude, so
/// a single global scale would leave most of them far from unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScaler {
    pub mean: Param,
    pub std: Param,
}

impl CellScaler {
    pub fn identity(channels: usize, height: usize) -> Self {
        Self {
            mean: Param::zeros("scale.mean", vec![channels, height]),
            std: Param::new("scale.std", vec![channels, height], vec![1.0; channels * height]),
        }
    }

    fn rows(&self) -> usize {
        self.mean.len()
    }

    pub fn fit(blocks: &[&[f64]], mask: &[bool], channels: usize, height: usize) -> Result<Self> {
        let mut s = Self::identity(channels, height);
        if blocks.is_empty() {
            return Ok(s);
        }
        let width = mask.len() / (channels * height);
        let mut sum = vec![0.0; channels * height];
        let mut sq = vec![0.0; channels * height];
        let mut count = vec![0usize; channels * height];
        for b in blocks {
            if b.len() != mask.len() {
                return Err(Error::Shape(format!("block has {} cells, mask {}", b.len(), mask.len())));
            }
            for (row, cells) in b.chunks(width).enumerate() {
                for (v, &ok) in cells.iter().zip(&mask[row * width..(row + 1) * width]) {
                    if ok {
                        sum[row] += v;
                        count[row] += 1;
                    }
                }
            }
        }
        for row in 0..channels * height {
            if count[row] > 0 {
                s.mean.value[row] = sum[row] / count[row] as f64;
            }
        }
        for b in blocks {
            for (row, cells) in b.chunks(width).enumerate() {
                let m = s.mean.value[row];
                for (v, &ok) in cells.iter().zip(&mask[row * width..(row + 1) * width]) {
                    if ok {
                        sq[row] += (v - m) * (v - m);
                    }
                }
            }
        }
        for row in 0..channels * height {
            if count[row] > 0 {
                s.std.value[row] = libm::sqrt(sq[row] / count[row] as f64).max(SCALE_FLOOR);
            }
        }
        Ok(s)
    }

    /// Inverse variance of each channel row. Generated cells carry roughly
    /// unit noise in standardised units, so this is the natural weight when
    /// collapsing lifted channels back to native ones.
    pub fn precision(&self) -> Vec<f64> {
        self.std.value.iter().map(|s| 1.0 / (s * s)).collect()
    }

    /// Standardise every block in `data` (a whole number of blocks).
    pub fn apply(&self, data: &mut [f64], mask: &[bool]) {
        self.map(data, mask, |v, m, s| (v - m) / s);
    }

    pub fn invert(&self, data: &mut [f64], mask: &[bool]) {
        self.map(data, mask, |v, m, s| v * s + m);
    }

    fn map(&self, data: &mut [f64], mask: &[bool], f: impl Fn(f64, f64, f64) -> f64) {
        let width = mask.len() / self.rows();
        for block in data.chunks_mut(mask.len()) {
            for (row, cells) in block.chunks_mut(width).enumerate() {
                let (m, s) = (self.mean.value[row], self.std.value[row]);
                for (v, &ok) in cells.iter_mut().zip(&mask[row * width..(row + 1) * width]) {
                    *v = if ok { f(*v, m, s) } else { 0.0 };
                }
            }
        }
    }
}

/// Progress callbacks during [`Forecaster::fit`].
pub trait Progress {
    fn epoch(&mut self, _epoch: usize, _loss: f64) {}
    fn stage(&mut self, _name: &str) {}
}

impl Progress for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub denoiser: Denoiser,
    pub reconstructor: Option<Reconstructor>,
    pub scaler: CellScaler,
    pub schedule: NoiseSchedule,
    /// Mean ε-loss per training epoch.
    pub losses: Vec<f64>,
}

const TAG_LIFT: u64 = 1;
const TAG_NET: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_RECON: u64 = 4;
const TAG_RECON_SAMPLES: u64 = 5;

impl Forecaster {
    /// Untrained model; construction is a pure function of the config.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let flags = config.variant.flags();
        let encoder = Encoder::new(flags, &mut rng.fork(TAG_LIFT))?;
        let ch = encoder.channels();
        let mut dc = DenoiserConfig::new(ch, ch * config.history_blocks());
        dc.hidden = config.hidden;
        dc.blocks = config.res_blocks;
        dc.groups = config.groups;
        dc.time_dim = config.time_dim;
        dc.unconditional = !flags.conditional;
        let schedule = config.schedule()?;
        let mut denoiser = Denoiser::new(dc, &mut rng.fork(TAG_NET));
        if config.precondition {
            denoiser.precondition(&schedule.alpha_bars);
        }
        let reconstructor = flags.decompose.then(|| Reconstructor::new(&mut rng.fork(TAG_RECON)));
        let scaler = CellScaler::identity(ch, crate::image::CANVAS);
        Ok(Self { config, encoder, denoiser, reconstructor, scaler, schedule, losses: Vec::new() })
    }

    fn cond_for(&self, history: &[f64]) -> Result<Option<Vec<f64>>> {
        if !self.encoder.flags.conditional {
            return Ok(None);
        }
        let h = &history[history.len().saturating_sub(self.config.seq_len)..];
        let mut c = self.encoder.condition(h, self.config.history_blocks())?;
        self.scaler.apply(&mut c, &self.encoder.cell_mask());
        Ok(Some(c))
    }

    /// Training pairs from a normalised series, standardised by the
    /// current scaler.
    pub fn examples(&self, series: &[f64], stride: usize) -> Result<Vec<TrainingExample>> {
        let windows = make_windows(&TimeSeries::new(series.to_vec()), self.config.seq_len, BLOCK, stride)?;
        let mask = self.encoder.cell_mask();
        windows
            .iter()
            .map(|w| {
                let mut x0 = self.encoder.encode_after(&w.history, &w.target)?.data;
                self.scaler.apply(&mut x0, &mask);
                Ok(TrainingExample { x0, cond: self.cond_for(&w.history)?.unwrap_or_default(), mask: mask.clone() })
            })
            .collect()
    }

    /// Fit the cell scaler on the target blocks of a normalised series.
    pub fn fit_scaler(&mut self, series: &[f64], stride: usize) -> Result<()> {
        let windows = make_windows(&TimeSeries::new(series.to_vec()), self.config.seq_len, BLOCK, stride)?;
        let targets = windows.iter().map(|w| Ok(self.encoder.encode_after(&w.history, &w.target)?.data)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        self.scaler = CellScaler::fit(&refs, &self.encoder.cell_mask(), self.encoder.channels(), crate::image::CANVAS)?;
        Ok(())
    }

    /// Train on a normalised training series. `val` is a normalised series
    /// whose first `seq_len` samples may overlap the end of training; it is
    /// only used to select reconstructor weights.
    pub fn fit(&mut self, train: &[f64], val: &[f64], progress: &mut dyn Progress) -> Result<()> {
        progress.stage("encode");
        self.fit_scaler(train, self.config.train_stride)?;
        let data = self.examples(train, self.config.train_stride)?;
        let cfg = TrainConfig {
            epochs: self.config.epochs,
            batch_size: self.config.batch_size,
            lr: self.config.lr,
            clip_norm: self.config.clip_norm,
            seed: Rng::new(self.config.seed).fork(TAG_TRAIN).next_u64(),
        };
        progress.stage("train");
        let losses = train_denoiser(&mut self.denoiser, &data, &self.schedule, &cfg, &mut |e, l| progress.epoch(e, l))?;
        self.losses = losses;
        drop(data);
        if self.reconstructor.is_some() && self.config.recon_steps > 0 {
            progress.stage("reconstructor");
            self.fit_reconstructor(train, val)?;
        }
        Ok(())
    }

    fn component_pairs(
        &self,
        series: &[f64],
        stride: usize,
        limit: usize,
        rng: &mut Rng,
    ) -> Result<Vec<(TrendComponents, Vec<f64>)>> {
        if series.len() < self.config.seq_len + BLOCK {
            return Ok(Vec::new());
        }
        let windows = make_windows(&TimeSeries::new(series.to_vec()), self.config.seq_len, BLOCK, stride)?;
        // Spread the chosen windows evenly over the series.
        let n = windows.len();
        let take = limit.min(n);
        (0..take)
            .map(|i| {
                let w = &windows[i * n / take];
                Ok((self.sample_components(&w.history, rng)?, w.target.clone()))
            })
            .collect()
    }

    fn fit_reconstructor(&mut self, train: &[f64], val: &[f64]) -> Result<()> {
        let mut rng = Rng::new(self.config.seed).fork(TAG_RECON_SAMPLES);
        let tr = self.component_pairs(train, BLOCK, self.config.recon_windows, &mut rng)?;
        // Overlapping validation windows: the selection is noisy with only a
        // handful of disjoint ones.
        let va = self.component_pairs(val, BLOCK / 4, usize::MAX, &mut rng)?;
        let (steps, lr) = (self.config.recon_steps, self.config.recon_lr);
        if let Some(r) = self.reconstructor.as_mut() {
            // Without validation windows, selection falls back to training loss.
            let val_set = if va.is_empty() { &tr } else { &va };
            r.fit(&tr, val_set, steps, lr);
        }
        Ok(())
    }

    fn sample_cells(&self, history: &[f64], rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        let cond = self.cond_for(history)?;
        let mask = self.encoder.cell_mask();
        (0..self.config.n_samples)
            .map(|_| {
                let mut x = p_sample_loop(self.encoder.cells(), cond.as_deref(), &self.schedule, &self.denoiser, rng)?;
                self.scaler.invert(&mut x, &mask);
                Ok(x)
            })
            .collect()
    }

    /// Mean component series over `n_samples` draws for the next block.
    pub fn sample_components(&self, history: &[f64], rng: &mut Rng) -> Result<TrendComponents> {
        let draws = self.sample_cells(history, rng)?;
        let prec = self.scaler.precision();
        let n = draws.len() as f64;
        let mut mean: Option<TrendComponents> = None;
        for d in draws {
            let c = self.encoder.components(d, Some(&prec))?;
            match mean.as_mut() {
                None => mean = Some(c),
                Some(m) => {
                    for comp in Component::ALL {
                        for (a, b) in m.get_mut(comp).iter_mut().zip(c.get(comp)) {
                            *a += b;
                        }
                    }
                }
            }
        }
        let mut m = mean.ok_or_else(|| Error::Input("no samples drawn".into()))?;
        for comp in Component::ALL {
            m.get_mut(comp).iter_mut().for_each(|v| *v /= n);
        }
        Ok(m)
    }

    /// Point forecast of the next block from a normalised history.
    pub fn forecast_block(&self, history: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        match &self.reconstructor {
            Some(r) => Ok(r.combine(&self.sample_components(history, rng)?).0),
            None => {
                let draws = self.sample_cells(history, rng)?;
                let prec = self.scaler.precision();
                let n = draws.len() as f64;
                let mut acc = vec![0.0; BLOCK];
                for d in draws {
                    for (a, v) in acc.iter_mut().zip(self.encoder.series(d, Some(&prec))?) {
                        *a += v;
                    }
                }
                acc.iter_mut().for_each(|v| *v /= n);
                Ok(acc)
            }
        }
    }

    /// Point forecast of `horizon` steps from a normalised history.
    pub fn forecast(&self, history: &[f64], horizon: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Err(Error::Input("empty history".into()));
        }
        if horizon == 0 {
            return Err(param("horizon", "must be positive"));
        }
        let mut ctx = history.to_vec();
        let mut out = Vec::with_capacity(horizon);
        while out.len() < horizon {
            let block = self.forecast_block(&ctx, rng)?;
            let need = (horizon - out.len()).min(BLOCK);
            out.extend_from_slice(&block[..need]);
            ctx.extend_from_slice(&block);
        }
        Ok(out)
    }

    /// Every parameter, in a fixed order with unique names.
    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.encoder.params();
        v.push(&self.scaler.mean);
        v.push(&self.scaler.std);
        v.extend(self.denoiser.params());
        if let Some(r) = &self.reconstructor {
            v.extend(r.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.encoder.params_mut();
        v.push(&mut self.scaler.mean);
        v.push(&mut self.scaler.std);
        v.extend(self.denoiser.params_mut());
        if let Some(r) = &mut self.reconstructor {
            v.extend(r.params_mut());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::adaptive_combine;
    use crate::reconstruct::{invert_components, invert_single};
    use crate::reconstruct::ScaleWeights;

    fn series(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        (0..n).map(|t| libm::sin(t as f64 * core::f64::consts::TAU / 24.0) + 0.1 * rng.normal()).collect()
    }

    fn tiny(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            hidden: 4,
            res_blocks: 1,
            groups: 2,
            time_dim: 8,
            diffusion_steps: 3,
            epochs: 1,
            train_stride: 48,
            n_samples: 2,
            recon_windows: 2,
            recon_steps: 10,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn each_variant_flips_one_flag() {
        let full = Variant::FullModel.flags();
        for v in &Variant::ALL[1..] {
            let f = v.flags();
            let changed = [f.decompose != full.decompose, f.conditional != full.conditional, f.lift != full.lift, f.drop != full.drop];
            assert_eq!(changed.iter().filter(|&&c| c).count(), 1, "{v}");
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()), Some(v));
            assert_eq!(Variant::parse(&v.name().to_ascii_lowercase()), Some(v));
        }
        assert_eq!(Variant::parse("nope"), None);
    }

    #[test]
    fn channel_counts() {
        let mut rng = Rng::new(0);
        let count = |v: Variant, rng: &mut Rng| Encoder::new(v.flags(), rng).unwrap().channels();
        assert_eq!(count(Variant::FullModel, &mut rng), 35);
        assert_eq!(count(Variant::NoDecomposition, &mut rng), 35);
        assert_eq!(count(Variant::NoImageFusion, &mut rng), 5);
        assert_eq!(count(Variant::NoTrend1, &mut rng), 35);
    }

    #[test]
    fn encode_then_decode_is_identity() {
        let x = series(BLOCK, 3);
        for v in [Variant::FullModel, Variant::NoImageFusion] {
            let enc = Encoder::new(v.flags(), &mut Rng::new(1)).unwrap();
            let f = enc.encode(&x).unwrap();
            let c = invert_components(&f, enc.lifts.as_ref()).unwrap();
            let y = adaptive_combine(&c, &ScaleWeights::uniform());
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-6, "{v}");
            }
        }
        let enc = Encoder::new(Variant::NoDecomposition.flags(), &mut Rng::new(1)).unwrap();
        let y = invert_single(&enc.encode(&x).unwrap(), enc.series_lift.as_ref()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn encoding_after_context() {
        let x = series(300, 7);
        let (ctx, block) = (&x[..204], &x[204..]);
        let enc = Encoder::new(Variant::FullModel.flags(), &mut Rng::new(1)).unwrap();
        let f = enc.encode_after(ctx, block).unwrap();
        let c = invert_components(&f, enc.lifts.as_ref()).unwrap();
        let whole = decompose_with(&x, DEFAULT_WINDOWS).unwrap();
        for comp in Component::ALL {
            let want = &whole.get(comp)[204..];
            assert!(c.get(comp).iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-9), "{}", comp.name());
        }
        let y = adaptive_combine(&c, &ScaleWeights::uniform());
        assert!(y.iter().zip(block).all(|(a, b)| (a - b).abs() < 1e-9));
        // only the last CONTEXT samples matter
        assert_eq!(f, enc.encode_after(&ctx[ctx.len() - CONTEXT..], block).unwrap());
        assert_eq!(enc.encode_after(&[], block).unwrap(), enc.encode(block).unwrap());
    }

    #[test]
    fn dropped_block_is_zero() {
        let enc = Encoder::new(Variant::NoTrend3.flags(), &mut Rng::new(1)).unwrap();
        let f = enc.encode(&series(BLOCK, 4)).unwrap();
        let b = f.block(Component::Trend3).unwrap();
        assert!(f.block_image(b).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn condition_pads_short_history() {
        let enc = Encoder::new(Variant::FullModel.flags(), &mut Rng::new(1)).unwrap();
        let h = series(48, 5);
        let c = enc.condition(&h, 1).unwrap();
        let mut padded = vec![h[0]; 48];
        padded.extend_from_slice(&h);
        assert_eq!(c, enc.encode(&padded).unwrap().data);
        assert_eq!(enc.condition(&series(192, 5), 2).unwrap().len(), 2 * enc.cells());
        assert!(enc.condition(&series(200, 5), 2).is_err());
    }

    #[test]
    fn scaler_round_trip_and_unit_rows() {
        let enc = Encoder::new(Variant::FullModel.flags(), &mut Rng::new(1)).unwrap();
        let mask = enc.cell_mask();
        let x = series(2000, 8);
        let blocks: Vec<Vec<f64>> = x.chunks(BLOCK).take(20).map(|b| enc.encode(b).unwrap().data).collect();
        let refs: Vec<&[f64]> = blocks.iter().map(Vec::as_slice).collect();
        let sc = CellScaler::fit(&refs, &mask, enc.channels(), 32).unwrap();
        let mut all: Vec<f64> = blocks.concat();
        sc.apply(&mut all, &mask);
        // Row 0 of channel 0 is a full delay-embedding row: mean 0, std 1.
        let width = 32;
        let row: Vec<f64> = all.chunks(mask.len()).flat_map(|b| b[..width].iter().zip(&mask[..width]).filter(|(_, &m)| m).map(|(v, _)| *v)).collect();
        let m = crate::stats::mean(&row);
        assert!(m.abs() < 1e-9);
        assert!((crate::stats::std_dev(&row) - 1.0).abs() < 1e-9);
        sc.invert(&mut all, &mask);
        for (a, b) in all.iter().zip(blocks.concat()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn history_blocks() {
        let b = |s| ModelConfig { seq_len: s, ..ModelConfig::default() }.history_blocks();
        assert_eq!((b(48), b(96), b(97), b(192)), (1, 1, 2, 2));
    }

    #[test]
    fn reports_all_config_problems() {
        let cfg = ModelConfig { hidden: 10, groups: 4, lr: 0.0, n_samples: 0, ..ModelConfig::default() };
        let names: Vec<_> = cfg.problems().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["groups", "lr", "n_samples"]);
        assert!(Forecaster::new(cfg).is_err());
    }

    #[test]
    fn smoke_all_variants() {
        let x = series(600, 6);
        for v in Variant::ALL {
            let mut m = Forecaster::new(tiny(v)).unwrap();
            m.fit(&x[..450], &x[354..], &mut ()).unwrap();
            assert_eq!(m.losses.len(), 1);
            let mut rng = Rng::new(9);
            for h in [24, 96, 150] {
                let f = m.forecast(&x[..96], h, &mut rng).unwrap();
                assert_eq!(f.len(), h);
                assert!(f.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = Forecaster::new(tiny(Variant::FullModel)).unwrap();
        let b = Forecaster::new(tiny(Variant::FullModel)).unwrap();
        assert_eq!(a, b);
        let names: Vec<&str> = a.params().iter().map(|p| p.name.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }
}
