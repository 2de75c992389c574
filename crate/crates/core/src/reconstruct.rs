//! Hierarchical reconstruction of a forecast from a generated fused tensor.
//!
//! Each block is collapsed to its native channels and inverted to a series.
//! The four component series are then pooled into one token each, refined
//! by single-head attention across scales (residual, zero-initialised output
//! projection), and mapped to softmax weights. The forecast is
//! `Σ_s 4·w_s·component_s`, so uniform weights give the plain component sum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::decompose::{Component, TrendComponents, DEFAULT_WINDOWS};
use crate::embed::delay_embed_invert;
use crate::error::{Error, Result};
use crate::fusion::{collapse_channels_weighted, ComponentLifts, FusedTensor};
use crate::image::{ImageTensor, TransformMeta};
use crate::nn::{Adam, AdamConfig, Linear, Param};
use crate::rng::Rng;
use crate::stft::istft;

/// Pooled bins per component series.
pub const POOL_BINS: usize = 16;
/// Token width.
pub const TOKEN_DIM: usize = 64;
const PATHS: usize = 4;

/// Invert one image according to its metadata.
pub fn invert_image(img: &ImageTensor) -> Result<Vec<f64>> {
    match img.meta {
        TransformMeta::DelayEmbedding(_) => delay_embed_invert(img),
        TransformMeta::Stft(_) => istft(img),
    }
}

/// Collapse lifted channels and invert every component block.
pub fn invert_components(fused: &FusedTensor, lifts: Option<&ComponentLifts>) -> Result<TrendComponents> {
    invert_components_weighted(fused, lifts, None)
}

/// Like [`invert_components`], collapsing each lift by weighted least squares
/// with one precision per fused channel row (`channels × height`).
pub fn invert_components_weighted(
    fused: &FusedTensor,
    lifts: Option<&ComponentLifts>,
    precision: Option<&[f64]>,
) -> Result<TrendComponents> {
    let mut parts: [Option<Vec<f64>>; 4] = Default::default();
    for c in Component::ALL {
        let b = fused.block(c).ok_or(Error::MissingComponent(c.name()))?;
        let img = fused.block_image(b);
        let native = match lifts {
            Some(l) => collapse_channels_weighted(&img, l.get(c), block_rows(precision, b.range(), img.height))?,
            None => img,
        };
        parts[c.index()] = Some(invert_image(&native)?);
    }
    let [a, b, c, d] = parts.map(|p| p.unwrap_or_default());
    TrendComponents::from_parts([a, b, c, d], DEFAULT_WINDOWS)
}

/// Softmax weights over the four component paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleWeights(pub [f64; PATHS]);

impl ScaleWeights {
    pub fn uniform() -> Self {
        ScaleWeights([0.25; PATHS])
    }

    pub fn from_logits(logits: &[f64; PATHS]) -> Self {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = logits.map(|l| libm::exp(l - m));
        let s: f64 = e.iter().sum();
        ScaleWeights(e.map(|v| v / s))
    }
}

/// `Σ_s 4·w_s·component_s`.
pub fn adaptive_combine(c: &TrendComponents, w: &ScaleWeights) -> Vec<f64> {
    (0..c.len())
        .map(|t| {
            Component::ALL
                .iter()
                .map(|&s| 4.0 * w.0[s.index()] * c.get(s)[t])
                .sum()
        })
        .collect()
}

/// Adaptive average pooling to `POOL_BINS` values.
fn pool(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..POOL_BINS)
        .map(|b| {
            let lo = b * n / POOL_BINS;
            let hi = ((b + 1) * n).div_ceil(POOL_BINS).max(lo + 1).min(n);
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Row-wise softmax of a `PATHS × PATHS` score matrix.
fn softmax_rows(s: &mut [[f64; PATHS]; PATHS]) {
    for row in s.iter_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - m);
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstructor {
    embed: Linear,
    position: Param,
    query: Linear,
    key: Linear,
    value: Linear,
    out_proj: Linear,
    head: Linear,
}

struct Trace {
    pooled: Vec<Vec<f64>>,
    tokens: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    attn: [[f64; PATHS]; PATHS],
    mixed: Vec<Vec<f64>>,
    refined: Vec<Vec<f64>>,
    weights: ScaleWeights,
}

/// Output of [`Reconstructor::attend`].
#[derive(Debug, Clone, PartialEq)]
pub struct Attended {
    pub refined: Vec<Vec<f64>>,
    /// Row-stochastic attention matrix.
    pub attention: [[f64; PATHS]; PATHS],
}

impl Reconstructor {
    /// Attention output projection and weight head start at zero, so a fresh
    /// reconstructor is the identity refinement with uniform weights.
    pub fn new(rng: &mut Rng) -> Self {
        let d = TOKEN_DIM;
        let position = (0..PATHS * d).map(|_| 0.02 * rng.normal()).collect();
        Self {
            embed: Linear::new("recon.embed", POOL_BINS, d, rng),
            position: Param::new("recon.position", vec![PATHS, d], position),
            query: Linear::new("recon.query", d, d, rng),
            key: Linear::new("recon.key", d, d, rng),
            value: Linear::new("recon.value", d, d, rng),
            out_proj: Linear::zeroed("recon.out_proj", d, d),
            head: Linear::zeroed("recon.head", d, PATHS),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        v.extend(self.embed.params_mut());
        v.push(&mut self.position);
        v.extend(self.query.params_mut());
        v.extend(self.key.params_mut());
        v.extend(self.value.params_mut());
        v.extend(self.out_proj.params_mut());
        v.extend(self.head.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::new();
        v.extend(self.embed.params());
        v.push(&self.position);
        v.extend(self.query.params());
        v.extend(self.key.params());
        v.extend(self.value.params());
        v.extend(self.out_proj.params());
        v.extend(self.head.params());
        v
    }

    /// One token per component: linear embedding of the pooled series plus a
    /// learned per-path offset.
    pub fn features(&self, c: &TrendComponents) -> Vec<Vec<f64>> {
        Component::ALL
            .iter()
            .map(|&s| {
                let mut t = self.embed.forward(&pool(c.get(s)));
                let off = s.index() * TOKEN_DIM;
                for (v, p) in t.iter_mut().zip(&self.position.value[off..off + TOKEN_DIM]) {
                    *v += p;
                }
                t
            })
            .collect()
    }

    /// Scaled dot-product attention across the four tokens with a residual
    /// connection.
    pub fn attend(&self, tokens: &[Vec<f64>]) -> Attended {
        let q: Vec<_> = tokens.iter().map(|t| self.query.forward(t)).collect();
        let k: Vec<_> = tokens.iter().map(|t| self.key.forward(t)).collect();
        let v: Vec<_> = tokens.iter().map(|t| self.value.forward(t)).collect();
        let attn = Self::scores(&q, &k);
        let refined = (0..PATHS)
            .map(|i| {
                let mixed = Self::mix(&attn[i], &v);
                let o = self.out_proj.forward(&mixed);
                tokens[i].iter().zip(&o).map(|(a, b)| a + b).collect()
            })
            .collect();
        Attended { refined, attention: attn }
    }

    fn scores(q: &[Vec<f64>], k: &[Vec<f64>]) -> [[f64; PATHS]; PATHS] {
        let scale = 1.0 / libm::sqrt(TOKEN_DIM as f64);
        let mut s = [[0.0; PATHS]; PATHS];
        for i in 0..PATHS {
            for j in 0..PATHS {
                s[i][j] = scale * q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        softmax_rows(&mut s);
        s
    }

    fn mix(row: &[f64; PATHS], v: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; TOKEN_DIM];
        for (a, vj) in row.iter().zip(v) {
            for (o, x) in out.iter_mut().zip(vj) {
                *o += a * x;
            }
        }
        out
    }

    pub fn weights(&self, refined: &[Vec<f64>]) -> ScaleWeights {
        let logits: [f64; PATHS] = core::array::from_fn(|s| self.head.forward(&refined[s])[s]);
        ScaleWeights::from_logits(&logits)
    }

    fn trace(&self, c: &TrendComponents) -> Trace {
        let pooled: Vec<_> = Component::ALL.iter().map(|&s| pool(c.get(s))).collect();
        let tokens = self.features(c);
        let q: Vec<_> = tokens.iter().map(|t| self.query.forward(t)).collect();
        let k: Vec<_> = tokens.iter().map(|t| self.key.forward(t)).collect();
        let v: Vec<_> = tokens.iter().map(|t| self.value.forward(t)).collect();
        let attn = Self::scores(&q, &k);
        let mixed: Vec<_> = (0..PATHS).map(|i| Self::mix(&attn[i], &v)).collect();
        let refined: Vec<Vec<f64>> = (0..PATHS)
            .map(|i| {
                let o = self.out_proj.forward(&mixed[i]);
                tokens[i].iter().zip(&o).map(|(a, b)| a + b).collect()
            })
            .collect();
        let weights = self.weights(&refined);
        Trace { pooled, tokens, q, k, v, attn, mixed, refined, weights }
    }

    /// Refine, weight and combine already inverted components.
    pub fn combine(&self, c: &TrendComponents) -> (Vec<f64>, ScaleWeights) {
        let w = self.trace(c).weights;
        (adaptive_combine(c, &w), w)
    }

    /// Full path from a fused tensor: invert, attend, weight, combine.
    pub fn reconstruct(&self, fused: &FusedTensor, lifts: Option<&ComponentLifts>) -> Result<(Vec<f64>, ScaleWeights)> {
        let comps = invert_components(fused, lifts)?;
        Ok(self.combine(&comps))
    }

    /// Gradient of `Σ_t (ŷ_t − y_t)² / T` with respect to every parameter,
    /// accumulated into `grad`. Returns the loss.
    fn accumulate(&mut self, c: &TrendComponents, target: &[f64]) -> f64 {
        let tr = self.trace(c);
        let pred = adaptive_combine(c, &tr.weights);
        let n = pred.len() as f64;
        let dy: Vec<f64> = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
        let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;

        let w = tr.weights.0;
        let dw: [f64; PATHS] = core::array::from_fn(|s| {
            4.0 * c.get(Component::ALL[s]).iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>()
        });
        let wdw: f64 = (0..PATHS).map(|s| w[s] * dw[s]).sum();
        let dlogit: [f64; PATHS] = core::array::from_fn(|s| w[s] * (dw[s] - wdw));

        let mut dtok = vec![vec![0.0; TOKEN_DIM]; PATHS];
        let mut dmixed = vec![vec![0.0; TOKEN_DIM]; PATHS];
        for s in 0..PATHS {
            let mut dhead = [0.0; PATHS];
            dhead[s] = dlogit[s];
            let dr = self.head.backward(&tr.refined[s], &dhead);
            for (a, g) in dtok[s].iter_mut().zip(&dr) {
                *a += g;
            }
            dmixed[s] = self.out_proj.backward(&tr.mixed[s], &dr);
        }
        let scale = 1.0 / libm::sqrt(TOKEN_DIM as f64);
        let mut dq = vec![vec![0.0; TOKEN_DIM]; PATHS];
        let mut dk = vec![vec![0.0; TOKEN_DIM]; PATHS];
        let mut dv = vec![vec![0.0; TOKEN_DIM]; PATHS];
        for i in 0..PATHS {
            let da: [f64; PATHS] =
                core::array::from_fn(|j| dmixed[i].iter().zip(&tr.v[j]).map(|(a, b)| a * b).sum::<f64>());
            for j in 0..PATHS {
                for (g, d) in dv[j].iter_mut().zip(&dmixed[i]) {
                    *g += tr.attn[i][j] * d;
                }
            }
            let dot: f64 = (0..PATHS).map(|j| tr.attn[i][j] * da[j]).sum();
            for j in 0..PATHS {
                let ds = tr.attn[i][j] * (da[j] - dot) * scale;
                for d in 0..TOKEN_DIM {
                    dq[i][d] += ds * tr.k[j][d];
                    dk[j][d] += ds * tr.q[i][d];
                }
            }
        }
        for s in 0..PATHS {
            let gq = self.query.backward(&tr.tokens[s], &dq[s]);
            let gk = self.key.backward(&tr.tokens[s], &dk[s]);
            let gv = self.value.backward(&tr.tokens[s], &dv[s]);
            for d in 0..TOKEN_DIM {
                dtok[s][d] += gq[d] + gk[d] + gv[d];
            }
            let off = s * TOKEN_DIM;
            for d in 0..TOKEN_DIM {
                self.position.grad[off + d] += dtok[s][d];
            }
            self.embed.backward(&tr.pooled[s], &dtok[s]);
        }
        loss
    }

    fn mean_loss(&self, data: &[(TrendComponents, Vec<f64>)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        data.iter()
            .map(|(c, y)| {
                let (p, _) = self.combine(c);
                p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
            })
            .sum::<f64>()
            / data.len() as f64
    }

    /// Full-batch Adam on the forecast MSE. Every `check_every` steps the
    /// validation loss is measured; the parameters with the lowest validation
    /// loss (including the untrained start) are kept. Returns that loss.
    pub fn fit(
        &mut self,
        train: &[(TrendComponents, Vec<f64>)],
        val: &[(TrendComponents, Vec<f64>)],
        steps: usize,
        lr: f64,
    ) -> f64 {
        let check_every = 10;
        let mut best = self.clone();
        let mut best_loss = self.mean_loss(val);
        if train.is_empty() {
            return best_loss;
        }
        let mut opt = Adam::new(AdamConfig { lr, ..AdamConfig::default() });
        for step in 1..=steps {
            for p in self.params_mut() {
                p.zero_grad();
            }
            for (c, y) in train {
                self.accumulate(c, y);
            }
            let inv = 1.0 / train.len() as f64;
            let mut params = self.params_mut();
            for p in params.iter_mut() {
                p.grad.iter_mut().for_each(|g| *g *= inv);
            }
            crate::nn::clip_grad_norm(&mut params, 1.0);
            opt.step(&mut params);
            if step % check_every == 0 {
                let l = self.mean_loss(val);
                if l < best_loss {
                    best_loss = l;
                    best = self.clone();
                }
            }
        }
        *self = best;
        best_loss
    }
}

/// Series from a single-block (undecomposed) fused tensor.
pub fn invert_single(fused: &FusedTensor, lift: Option<&crate::fusion::ChannelLift>) -> Result<Vec<f64>> {
    invert_single_weighted(fused, lift, None)
}

pub fn invert_single_weighted(
    fused: &FusedTensor,
    lift: Option<&crate::fusion::ChannelLift>,
    precision: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let b = fused.blocks.first().ok_or_else(|| Error::Meta(format!("fused tensor has no blocks")))?;
    let img = fused.block_image(b);
    let native = match lift {
        Some(l) => collapse_channels_weighted(&img, l, block_rows(precision, b.range(), img.height))?,
        None => img,
    };
    invert_image(&native)
}

fn block_rows(precision: Option<&[f64]>, channels: core::ops::Range<usize>, height: usize) -> Option<&[f64]> {
    precision.map(|p| &p[channels.start * height..channels.end * height])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{decompose_with, recompose};
    use crate::embed::delay_embed;
    use crate::fusion::fuse;
    use crate::stft::{stft, StftParams};

    fn encode(x: &[f64], lifts: &ComponentLifts) -> FusedTensor {
        let c = decompose_with(x, DEFAULT_WINDOWS).unwrap();
        let parts = [
            Some(delay_embed(&c.trend1, 3, 32).unwrap()),
            Some(delay_embed(&c.trend2, 3, 32).unwrap()),
            Some(stft(&c.trend3, &StftParams::default()).unwrap()),
            Some(delay_embed(&c.residual, 3, 32).unwrap()),
        ];
        fuse(parts, Some(lifts)).unwrap()
    }

    fn series(rng: &mut Rng) -> Vec<f64> {
        (0..96).map(|t| libm::sin(t as f64 / 4.0) + 0.3 * rng.normal()).collect()
    }

    #[test]
    fn components_round_trip() {
        let mut rng = Rng::new(1);
        let lifts = ComponentLifts::init(&mut rng);
        for _ in 0..20 {
            let x = series(&mut rng);
            let want = decompose_with(&x, DEFAULT_WINDOWS).unwrap();
            let got = invert_components(&encode(&x, &lifts), Some(&lifts)).unwrap();
            for c in Component::ALL {
                for (a, b) in got.get(c).iter().zip(want.get(c)) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_fused_gives_zero_components() {
        let mut rng = Rng::new(2);
        let lifts = ComponentLifts::init(&mut rng);
        let mut f = encode(&series(&mut rng), &lifts);
        f.data.iter_mut().for_each(|v| *v = 0.0);
        for b in &mut f.blocks {
            if let TransformMeta::Stft(m) = &mut b.meta {
                m.nyquist.iter_mut().for_each(|v| *v = 0.0);
                m.edges.iter_mut().for_each(|e| e.1 = 0.0);
            }
        }
        let c = invert_components(&f, Some(&lifts)).unwrap();
        for s in Component::ALL {
            assert!(c.get(s).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn combine_weights() {
        let mut rng = Rng::new(3);
        let c = decompose_with(&series(&mut rng), DEFAULT_WINDOWS).unwrap();
        let sum = recompose(&c);
        let uni = adaptive_combine(&c, &ScaleWeights::uniform());
        for (a, b) in uni.iter().zip(sum.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let hot = adaptive_combine(&c, &ScaleWeights([0.0, 0.0, 1.0, 0.0]));
        for (a, b) in hot.iter().zip(&c.trend3) {
            assert_eq!(*a, 4.0 * b);
        }
    }

    #[test]
    fn fresh_reconstructor_is_plain_sum() {
        let mut rng = Rng::new(4);
        let lifts = ComponentLifts::init(&mut rng);
        let r = Reconstructor::new(&mut rng);
        let x = series(&mut rng);
        let f = encode(&x, &lifts);
        let (y, w) = r.reconstruct(&f, Some(&lifts)).unwrap();
        assert_eq!(w, ScaleWeights::uniform());
        let plain = recompose(&invert_components(&f, Some(&lifts)).unwrap());
        assert_eq!(y, plain.values());
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-5);
        }
        let tokens = r.features(&invert_components(&f, Some(&lifts)).unwrap());
        let att = r.attend(&tokens);
        assert_eq!(att.refined, tokens);
        for row in att.attention {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = Rng::new(5);
        let mut r = Reconstructor::new(&mut rng);
        for p in r.params_mut() {
            for v in &mut p.value {
                *v += 0.1 * rng.normal();
            }
        }
        let c = decompose_with(&series(&mut rng), DEFAULT_WINDOWS).unwrap();
        let y: Vec<f64> = (0..96).map(|_| rng.normal()).collect();
        for p in r.params_mut() {
            p.zero_grad();
        }
        r.accumulate(&c, &y);
        let loss = |r: &Reconstructor| -> f64 {
            let (p, _) = r.combine(&c);
            p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 96.0
        };
        let n = r.params().len();
        for pi in 0..n {
            let len = r.params()[pi].len();
            for j in [0, len / 3, len - 1] {
                let analytic = r.params()[pi].grad[j];
                r.params_mut()[pi].value[j] += 1e-6;
                let lp = loss(&r);
                r.params_mut()[pi].value[j] -= 2e-6;
                let lm = loss(&r);
                r.params_mut()[pi].value[j] += 1e-6;
                let fd = (lp - lm) / 2e-6;
                let scale = analytic.abs().max(fd.abs()).max(1e-7);
                assert!((analytic - fd).abs() / scale < 1e-4, "{}[{j}] {analytic} vs {fd}", r.params()[pi].name);
            }
        }
    }

    #[test]
    fn fit_keeps_weights_on_simplex_and_never_worsens_validation() {
        let mut rng = Rng::new(6);
        let mut r = Reconstructor::new(&mut rng);
        let make = |rng: &mut Rng| {
            let x = series(rng);
            let mut c = decompose_with(&x, DEFAULT_WINDOWS).unwrap();
            // noisy residual path: best to shrink it
            for v in c.residual.iter_mut() {
                *v += rng.normal();
            }
            (c, x)
        };
        let train: Vec<_> = (0..8).map(|_| make(&mut rng)).collect();
        let val: Vec<_> = (0..4).map(|_| make(&mut rng)).collect();
        let before = r.mean_loss(&val);
        let after = r.fit(&train, &val, 60, 1e-2);
        assert!(after <= before);
        let (_, w) = r.combine(&val[0].0);
        assert!((w.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.0.iter().all(|&v| v >= 0.0));
    }
}
