//! Compact convolutional noise predictor.
//!
//! ```text
//! [x_k ‖ c] ─ conv3×3 ─ ResBlock ×N ─ GN ─ SiLU ─ conv1×1 ─ ε̂
//!                          ▲
//!  k ─ sinusoid(64) ─ Linear ─ SiLU ─┘ (per-block projection, added per channel)
//!
//! ResBlock: h + conv(SiLU(GN(conv(SiLU(GN(h))) + t))).
//! ```
//!
//! With [`Denoiser::precondition`] the prediction becomes
//! `√(1−ᾱ_k)·x_k + √ᾱ_k·out`, which is the noise estimate implied by a
//! velocity-style network output.
//!
//! All convolutions are stride 1 with "same" padding, so the canvas stays
//! 32×32 throughout. Without a condition the input slot is filled by a
//! learned null tensor of the same shape.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{silu, silu_backward, sinusoidal_embedding, Conv2d, ConvCache, GroupNorm, GroupNormCache, Linear, Param};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    /// Channels of the tensor being denoised.
    pub channels: usize,
    /// Channels of the condition tensor.
    pub cond_channels: usize,
    pub height: usize,
    pub width: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub groups: usize,
    pub time_dim: usize,
    /// Learned null condition instead of a supplied one.
    pub unconditional: bool,
}

impl DenoiserConfig {
    pub fn new(channels: usize, cond_channels: usize) -> Self {
        Self {
            channels,
            cond_channels,
            height: 32,
            width: 32,
            hidden: 64,
            blocks: 4,
            groups: 8,
            time_dim: 64,
            unconditional: false,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    time: Linear,
    norm2: GroupNorm,
    conv2: Conv2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    time_mlp: Linear,
    input: Conv2d,
    blocks: Vec<ResBlock>,
    out_norm: GroupNorm,
    output: Conv2d,
    null_cond: Option<Param>,
    /// Per-step `(c_skip, c_out)`; empty means the raw network output.
    precond: Vec<(f64, f64)>,
}

struct BlockCache {
    n1: GroupNormCache,
    a1: Vec<f64>,
    c1: ConvCache,
    n2: GroupNormCache,
    a2: Vec<f64>,
    c2: ConvCache,
}

/// Activations kept by [`Denoiser::forward_train`] for the backward pass.
pub struct ForwardCache {
    sinus: Vec<f64>,
    temb_pre: Vec<f64>,
    temb: Vec<f64>,
    input: ConvCache,
    blocks: Vec<BlockCache>,
    out_n: GroupNormCache,
    out_a: Vec<f64>,
    out_c: ConvCache,
    c_out: f64,
}

impl Denoiser {
    pub fn new(config: DenoiserConfig, rng: &mut Rng) -> Self {
        let c = config;
        let in_ch = c.channels + c.cond_channels;
        let time_mlp = Linear::new("time", c.time_dim, c.time_dim, rng);
        let input = Conv2d::new("input", in_ch, c.hidden, 3, rng);
        let blocks = (0..c.blocks)
            .map(|b| ResBlock {
                norm1: GroupNorm::new(&format!("block{b}.norm1"), c.groups, c.hidden),
                conv1: Conv2d::new(&format!("block{b}.conv1"), c.hidden, c.hidden, 3, rng),
                time: Linear::new(&format!("block{b}.time"), c.time_dim, c.hidden, rng),
                norm2: GroupNorm::new(&format!("block{b}.norm2"), c.groups, c.hidden),
                conv2: Conv2d::new(&format!("block{b}.conv2"), c.hidden, c.hidden, 3, rng),
            })
            .collect();
        let out_norm = GroupNorm::new("out.norm", c.groups, c.hidden);
        let output = Conv2d::new("output", c.hidden, c.channels, 1, rng);
        let null_cond = c
            .unconditional
            .then(|| Param::zeros("null_cond", vec![c.cond_channels, c.height, c.width]));
        Self { config, time_mlp, input, blocks, out_norm, output, null_cond, precond: Vec::new() }
    }

    /// Predict `ε̂ = √(1−ᾱ_k)·x_k + √ᾱ_k·F(x_k, k, c)`, so the network `F`
    /// regresses the unit-variance target `√ᾱ_k ε − √(1−ᾱ_k) x₀` instead of
    /// copying the noise through every channel.
    pub fn precondition(&mut self, alpha_bars: &[f64]) {
        self.precond = alpha_bars.iter().map(|&ab| (libm::sqrt(1.0 - ab), libm::sqrt(ab))).collect();
    }

    pub fn is_preconditioned(&self) -> bool {
        !self.precond.is_empty()
    }

    /// Every parameter, in a fixed order shared by the optimiser and checkpoints.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        v.extend(self.time_mlp.params_mut());
        v.extend(self.input.params_mut());
        for b in &mut self.blocks {
            v.extend(b.norm1.params_mut());
            v.extend(b.conv1.params_mut());
            v.extend(b.time.params_mut());
            v.extend(b.norm2.params_mut());
            v.extend(b.conv2.params_mut());
        }
        v.extend(self.out_norm.params_mut());
        v.extend(self.output.params_mut());
        if let Some(p) = &mut self.null_cond {
            v.push(p);
        }
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::new();
        v.extend(self.time_mlp.params());
        v.extend(self.input.params());
        for b in &self.blocks {
            v.extend(b.norm1.params());
            v.extend(b.conv1.params());
            v.extend(b.time.params());
            v.extend(b.norm2.params());
            v.extend(b.conv2.params());
        }
        v.extend(self.out_norm.params());
        v.extend(self.output.params());
        if let Some(p) = &self.null_cond {
            v.push(p);
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn check(&self, x: &[f64], cond: Option<&[f64]>) -> Result<()> {
        let c = &self.config;
        let p = c.pixels();
        if x.len() != c.channels * p {
            return Err(Error::Shape(format!("denoiser input has {} values, expected {}", x.len(), c.channels * p)));
        }
        match (cond, c.unconditional) {
            (Some(cv), false) if cv.len() != c.cond_channels * p => Err(Error::Shape(format!(
                "condition has {} values, expected {}",
                cv.len(),
                c.cond_channels * p
            ))),
            (None, false) if c.cond_channels > 0 => Err(Error::Shape("conditional denoiser called without a condition".into())),
            _ => Ok(()),
        }
    }

    fn assemble_input(&self, x: &[f64], cond: Option<&[f64]>) -> Vec<f64> {
        let mut input = Vec::with_capacity(x.len() + self.config.cond_channels * self.config.pixels());
        input.extend_from_slice(x);
        match (&self.null_cond, cond) {
            (Some(null), _) => input.extend_from_slice(&null.value),
            (None, Some(c)) => input.extend_from_slice(c),
            (None, None) => {}
        }
        input
    }

    /// Predict the noise in `x` at step `k`. The condition is ignored by an
    /// unconditional network.
    pub fn forward(&self, x: &[f64], k: usize, cond: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok(self.forward_train(x, k, cond)?.0)
    }

    pub fn forward_train(&self, x: &[f64], k: usize, cond: Option<&[f64]>) -> Result<(Vec<f64>, ForwardCache)> {
        self.check(x, cond)?;
        let c = &self.config;
        let (h, w, p) = (c.height, c.width, c.pixels());
        let sinus = sinusoidal_embedding(k, c.time_dim);
        let temb_pre = self.time_mlp.forward(&sinus);
        let temb = silu(&temb_pre);

        let input = self.assemble_input(x, cond);
        let (mut hcur, input_cache) = self.input.forward(&input, h, w);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (n1, n1c) = b.norm1.forward(&hcur, p);
            let s1 = silu(&n1);
            let (mut u, c1) = b.conv1.forward(&s1, h, w);
            let t = b.time.forward(&temb);
            for (ch, chunk) in u.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v += t[ch]);
            }
            let (n2, n2c) = b.norm2.forward(&u, p);
            let s2 = silu(&n2);
            let (v, c2) = b.conv2.forward(&s2, h, w);
            for (a, d) in hcur.iter_mut().zip(&v) {
                *a += d;
            }
            caches.push(BlockCache { n1: n1c, a1: n1, c1, n2: n2c, a2: n2, c2 });
        }
        let (on, onc) = self.out_norm.forward(&hcur, p);
        let os = silu(&on);
        let (mut out, oc) = self.output.forward(&os, h, w);
        let mut c_out = 1.0;
        if !self.precond.is_empty() {
            let (skip, scale) = *self.precond.get(k).ok_or_else(|| {
                Error::Shape(format!("step {k} outside the {}-step preconditioning table", self.precond.len()))
            })?;
            c_out = scale;
            for (o, xv) in out.iter_mut().zip(x) {
                *o = skip * xv + scale * *o;
            }
        }
        let cache = ForwardCache {
            sinus,
            temb_pre,
            temb,
            input: input_cache,
            blocks: caches,
            out_n: onc,
            out_a: on,
            out_c: oc,
            c_out,
        };
        Ok((out, cache))
    }

    /// Accumulate parameter gradients for the upstream gradient `d_out`.
    pub fn backward(&mut self, cache: &ForwardCache, d_out: &[f64]) {
        let c = self.config;
        let (h, w, p) = (c.height, c.width, c.pixels());
        let scaled: Vec<f64>;
        let d_out = if cache.c_out == 1.0 {
            d_out
        } else {
            scaled = d_out.iter().map(|d| d * cache.c_out).collect();
            &scaled
        };
        let mut ds = self.output.backward(&cache.out_c, d_out, h, w, true).unwrap_or_default();
        silu_backward(&cache.out_a, &mut ds);
        let mut dh = self.out_norm.backward(&cache.out_n, &ds, p);
        let mut dtemb = vec![0.0; c.time_dim];
        for (b, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let mut ds2 = b.conv2.backward(&bc.c2, &dh, h, w, true).unwrap_or_default();
            silu_backward(&bc.a2, &mut ds2);
            let du = b.norm2.backward(&bc.n2, &ds2, p);
            let dt: Vec<f64> = du.chunks(p).map(|ch| ch.iter().sum()).collect();
            for (acc, g) in dtemb.iter_mut().zip(b.time.backward(&cache.temb, &dt)) {
                *acc += g;
            }
            let mut ds1 = b.conv1.backward(&bc.c1, &du, h, w, true).unwrap_or_default();
            silu_backward(&bc.a1, &mut ds1);
            let dres = b.norm1.backward(&bc.n1, &ds1, p);
            for (a, g) in dh.iter_mut().zip(dres) {
                *a += g;
            }
        }
        let need_input_grad = self.null_cond.is_some();
        if let Some(din) = self.input.backward(&cache.input, &dh, h, w, need_input_grad) {
            if let Some(null) = &mut self.null_cond {
                let off = c.channels * p;
                for (g, d) in null.grad.iter_mut().zip(&din[off..]) {
                    *g += d;
                }
            }
        }
        silu_backward(&cache.temb_pre, &mut dtemb);
        self.time_mlp.backward(&cache.sinus, &dtemb);
    }
}
