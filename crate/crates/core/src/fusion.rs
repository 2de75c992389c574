//! Channel lifting and fused-tensor assembly.
//!
//! Each component image is lifted from its native channel count (1 for a
//! delay embedding, 2 for an STFT) to a wider block by a per-pixel linear
//! map, and the four blocks are concatenated in the fixed order
//! trend1 (0..7), trend2 (7..14), trend3 (14..28), residual (28..35).
//! Lifting is undone with the least-squares pseudo-inverse of the map.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::decompose::Component;
use crate::error::{param, Error, Result};
use crate::image::{ImageTensor, TransformMeta};
use crate::nn::Param;
use crate::rng::Rng;

/// Spread of the non-identity lift rows at initialisation.
pub const LIFT_INIT_STD: f64 = 0.02;

/// Lifted channels per native channel.
pub const LIFT_FACTOR: usize = 7;

/// Per-pixel linear map from `inputs` native channels to `outputs` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLift {
    /// `outputs × inputs`.
    pub weight: Param,
    pub bias: Param,
    pub inputs: usize,
    pub outputs: usize,
}

impl ChannelLift {
    /// Output channel `i < inputs` copies native channel `i`; the remaining
    /// rows are drawn from `N(0, 0.02²)`; biases start at zero.
    pub fn identity_init(name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        assert!(outputs >= inputs && inputs > 0);
        let mut w = vec![0.0; outputs * inputs];
        for o in 0..outputs {
            for i in 0..inputs {
                w[o * inputs + i] = if o < inputs {
                    if o == i { 1.0 } else { 0.0 }
                } else {
                    LIFT_INIT_STD * rng.normal()
                };
            }
        }
        Self {
            weight: Param::new(format!("{name}.weight"), vec![outputs, inputs], w),
            bias: Param::zeros(format!("{name}.bias"), vec![outputs]),
            inputs,
            outputs,
        }
    }

    /// `(WᵀPW)⁻¹` for diagonal output precisions `p` (all ones when `None`).
    fn gram_inverse(&self, p: Option<&[f64]>) -> Result<Vec<f64>> {
        let (ni, w) = (self.inputs, &self.weight.value);
        let mut g = vec![0.0; ni * ni];
        for o in 0..self.outputs {
            let po = p.map_or(1.0, |p| p[o]);
            for i in 0..ni {
                for j in 0..ni {
                    g[i * ni + j] += po * w[o * ni + i] * w[o * ni + j];
                }
            }
        }
        invert_small(&g, ni).ok_or_else(|| Error::Parameter {
            name: "lift",
            reason: String::from("lift weight is rank deficient"),
        })
    }

    /// `x = (WᵀPW)⁻¹ WᵀP (y − b)` for one pixel.
    fn solve_pixel(&self, gram_inv: &[f64], p: Option<&[f64]>, y: &[f64], out: &mut [f64]) {
        let (ni, w) = (self.inputs, &self.weight.value);
        let mut rhs = vec![0.0; ni];
        for o in 0..self.outputs {
            let r = p.map_or(1.0, |p| p[o]) * (y[o] - self.bias.value[o]);
            for i in 0..ni {
                rhs[i] += w[o * ni + i] * r;
            }
        }
        for i in 0..ni {
            out[i] = (0..ni).map(|j| gram_inv[i * ni + j] * rhs[j]).sum();
        }
    }
}

/// Gauss-Jordan inverse of a small dense matrix; `None` when singular.
fn invert_small(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| libm::fabs(m[x * n + col]).total_cmp(&libm::fabs(m[y * n + col])))?;
        if libm::fabs(m[piv * n + col]) < 1e-300 {
            return None;
        }
        for k in 0..n {
            m.swap(col * n + k, piv * n + k);
            inv.swap(col * n + k, piv * n + k);
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                for k in 0..n {
                    m[r * n + k] -= f * m[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    Some(inv)
}

pub fn lift_channels(img: &ImageTensor, lift: &ChannelLift) -> Result<ImageTensor> {
    img.check_shape()?;
    if img.channels != lift.inputs {
        return Err(Error::Shape(format!(
            "lift expects {} native channels, image has {}",
            lift.inputs, img.channels
        )));
    }
    let p = img.plane();
    let mut out = ImageTensor::zeros(lift.outputs, img.height, img.width, img.mask.clone(), img.meta.clone());
    for o in 0..lift.outputs {
        let b = lift.bias.value[o];
        for px in 0..p {
            if !img.mask[px] {
                continue;
            }
            let mut v = b;
            for i in 0..lift.inputs {
                v += lift.weight.value[o * lift.inputs + i] * img.data[i * p + px];
            }
            out.data[o * p + px] = v;
        }
    }
    Ok(out)
}

/// Least-squares recovery of the native channels from a lifted image.
pub fn collapse_channels(img: &ImageTensor, lift: &ChannelLift) -> Result<ImageTensor> {
    collapse_channels_weighted(img, lift, None)
}

/// Weighted least-squares recovery. `precision` holds one weight per lifted
/// channel row (`outputs × height`), typically the inverse noise variance of
/// that row; `None` weighs every channel equally.
pub fn collapse_channels_weighted(img: &ImageTensor, lift: &ChannelLift, precision: Option<&[f64]>) -> Result<ImageTensor> {
    img.check_shape()?;
    if img.channels != lift.outputs {
        return Err(Error::Shape(format!(
            "lift produces {} channels, image has {}",
            lift.outputs, img.channels
        )));
    }
    if let Some(p) = precision {
        if p.len() != lift.outputs * img.height {
            return Err(Error::Shape(format!("expected {} precisions, got {}", lift.outputs * img.height, p.len())));
        }
    }
    let p = img.plane();
    let mut out = ImageTensor::zeros(lift.inputs, img.height, img.width, img.mask.clone(), img.meta.clone());
    let mut y = vec![0.0; lift.outputs];
    let mut x = vec![0.0; lift.inputs];
    let mut row_p = vec![0.0; lift.outputs];
    let mut gi = lift.gram_inverse(None)?;
    for r in 0..img.height {
        if let Some(prec) = precision {
            for o in 0..lift.outputs {
                row_p[o] = prec[o * img.height + r];
            }
            gi = lift.gram_inverse(Some(&row_p))?;
        }
        let rp = precision.map(|_| row_p.as_slice());
        for px in r * img.width..(r + 1) * img.width {
            if !img.mask[px] {
                continue;
            }
            for o in 0..lift.outputs {
                y[o] = img.data[o * p + px];
            }
            lift.solve_pixel(&gi, rp, &y, &mut x);
            for i in 0..lift.inputs {
                out.data[i * p + px] = x[i];
            }
        }
    }
    Ok(out)
}

/// One contiguous channel range of a fused tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// `None` for an undecomposed series.
    pub component: Option<Component>,
    pub start: usize,
    pub channels: usize,
    pub mask: Vec<bool>,
    pub meta: TransformMeta,
}

impl Block {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.start..self.start + self.channels
    }

    pub fn name(&self) -> &'static str {
        self.component.map_or("series", Component::name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl FusedTensor {
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Per-cell validity (`channels × pixels`), taken from each block's mask.
    pub fn cell_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.channels * self.plane()];
        for b in &self.blocks {
            for c in b.range() {
                m[c * self.plane()..(c + 1) * self.plane()].copy_from_slice(&b.mask);
            }
        }
        m
    }

    pub fn block(&self, component: Component) -> Option<&Block> {
        self.blocks.iter().find(|b| b.component == Some(component))
    }

    pub fn block_image(&self, b: &Block) -> ImageTensor {
        let p = self.plane();
        ImageTensor {
            channels: b.channels,
            height: self.height,
            width: self.width,
            data: self.data[b.start * p..(b.start + b.channels) * p].to_vec(),
            mask: b.mask.clone(),
            meta: b.meta.clone(),
        }
    }

    /// Zero a component's channel range (trend-removal ablations).
    pub fn zero_block(&mut self, component: Component) {
        let p = self.plane();
        if let Some(b) = self.block(component).cloned() {
            self.data[b.start * p..(b.start + b.channels) * p].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Zero every cell outside its block's mask.
    pub fn apply_mask(&mut self) {
        let m = self.cell_mask();
        for (v, ok) in self.data.iter_mut().zip(m) {
            if !ok {
                *v = 0.0;
            }
        }
    }

    /// Stack images along channels, in order, as one block each.
    pub fn stack(parts: Vec<(Option<Component>, ImageTensor)>) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(param("parts", "nothing to stack"));
        };
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut blocks = Vec::new();
        let mut start = 0;
        for (component, img) in parts {
            img.check_shape()?;
            if img.height != h || img.width != w {
                return Err(Error::Shape(format!("{}: canvas {}x{} differs from {h}x{w}", component.map_or("series", Component::name), img.height, img.width)));
            }
            data.extend_from_slice(&img.data);
            blocks.push(Block { component, start, channels: img.channels, mask: img.mask, meta: img.meta });
            start += img.channels;
        }
        Ok(Self { channels: start, height: h, width: w, data, blocks })
    }
}

/// Lifts for the four components, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLifts(pub [ChannelLift; 4]);

impl ComponentLifts {
    /// 1→7 lifts for the delay-embedded bands, 2→14 for the spectrogram.
    pub fn init(rng: &mut Rng) -> Self {
        ComponentLifts(Component::ALL.map(|c| {
            let native = if c == Component::Trend3 { 2 } else { 1 };
            ChannelLift::identity_init(&format!("lift.{}", c.name()), native, native * LIFT_FACTOR, rng)
        }))
    }

    pub fn get(&self, c: Component) -> &ChannelLift {
        &self.0[c.index()]
    }
}

/// Lift each component (when `lifts` is given) and concatenate in layout
/// order. Without lifts the native channels are concatenated (1+1+2+1).
pub fn fuse(parts: [Option<ImageTensor>; 4], lifts: Option<&ComponentLifts>) -> Result<FusedTensor> {
    let mut stacked = Vec::with_capacity(4);
    for (c, img) in Component::ALL.into_iter().zip(parts) {
        let img = img.ok_or(Error::MissingComponent(c.name()))?;
        let img = match lifts {
            Some(l) => lift_channels(&img, l.get(c))?,
            None => img,
        };
        stacked.push((Some(c), img));
    }
    FusedTensor::stack(stacked)
}

/// Slice a fused tensor back into its per-block images (still lifted).
pub fn defuse(fused: &FusedTensor) -> Vec<ImageTensor> {
    fused.blocks.iter().map(|b| fused.block_image(b)).collect()
}
