//! Short-time Fourier transform onto the 32×32 canvas and its exact inverse.
//!
//! Frames of `n_fft = 64` samples advance by `hop = 16` with no centre
//! padding, are multiplied by a periodic Hann window and transformed with a
//! direct DFT. Bins `0..32` fill rows 0..32 of two channels (real, imaginary);
//! the Nyquist bin (32, purely real for real input) is kept in the metadata.
//! Frames fill columns left to right; unused columns are masked zeros.
//!
//! The inverse is windowed overlap-add divided by `Σ w²`. Where that sum is
//! below [`EDGE_FLOOR`] (the first and last few samples, seen only through
//! the tapering end of one frame) values come from the metadata, or from the
//! nearest reliable sample when the metadata carries none.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{param, Error, Result};
use crate::image::{ImageTensor, StftMeta, TransformMeta, CANVAS};

/// Minimum summed squared window for a sample to be read from overlap-add.
pub const EDGE_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        Self { n_fft: 64, hop: 16 }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft != 2 * CANVAS {
            return Err(param("n_fft", format!("must be {} to fill {CANVAS} frequency rows", 2 * CANVAS)));
        }
        if self.hop == 0 || self.n_fft % self.hop != 0 {
            return Err(param("hop", "must divide n_fft"));
        }
        Ok(())
    }

    pub fn frames(&self, len: usize) -> Result<usize> {
        if len < self.n_fft {
            return Err(Error::Input(format!("series length {len} is shorter than n_fft {}", self.n_fft)));
        }
        let f = (len - self.n_fft) / self.hop + 1;
        if f > CANVAS {
            return Err(Error::Input(format!(
                "series of length {len} needs {f} frames but the canvas holds {CANVAS}; split the series into chunks"
            )));
        }
        Ok(f)
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64)).collect()
}

/// Summed squared window at every sample covered by `frames` frames.
pub fn window_power(len: usize, p: &StftParams, frames: usize) -> Vec<f64> {
    let w = hann(p.n_fft);
    let mut acc = vec![0.0; len];
    for f in 0..frames {
        for (i, wi) in w.iter().enumerate() {
            acc[f * p.hop + i] += wi * wi;
        }
    }
    acc
}

/// Twiddle table `(cos, sin)` of `2πm/n` for `m = 0..n`.
struct Twiddles {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Twiddles {
    fn new(n: usize) -> Self {
        let cos = (0..n).map(|m| libm::cos(2.0 * PI * m as f64 / n as f64)).collect();
        let sin = (0..n).map(|m| libm::sin(2.0 * PI * m as f64 / n as f64)).collect();
        Self { n, cos, sin }
    }

    /// `X_k = Σ x_n e^{−2πikn/N}` for `k = 0..=N/2`.
    fn forward(&self, x: &[f64]) -> Vec<(f64, f64)> {
        (0..=self.n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    let m = (k * i) % self.n;
                    re += v * self.cos[m];
                    im -= v * self.sin[m];
                }
                (re, im)
            })
            .collect()
    }

    /// Real inverse from the half spectrum `k = 0..=N/2`.
    fn inverse(&self, spec: &[(f64, f64)], out: &mut [f64]) {
        let half = self.n / 2;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = spec[0].0;
            // Nyquist term: e^{iπn} = (−1)^n
            acc += if i % 2 == 0 { spec[half].0 } else { -spec[half].0 };
            for (k, &(re, im)) in spec.iter().enumerate().take(half).skip(1) {
                let m = (k * i) % self.n;
                acc += 2.0 * (re * self.cos[m] - im * self.sin[m]);
            }
            *o = acc / self.n as f64;
        }
    }
}

pub fn stft(x: &[f64], p: &StftParams) -> Result<ImageTensor> {
    p.validate()?;
    let frames = p.frames(x.len())?;
    let w = hann(p.n_fft);
    let tw = Twiddles::new(p.n_fft);
    let mut mask = vec![false; CANVAS * CANVAS];
    for row in 0..CANVAS {
        for col in 0..frames {
            mask[row * CANVAS + col] = true;
        }
    }
    let mut nyquist = Vec::with_capacity(frames);
    let mut frame = vec![0.0; p.n_fft];
    let mut data = vec![0.0; 2 * CANVAS * CANVAS];
    for f in 0..frames {
        let s = f * p.hop;
        for i in 0..p.n_fft {
            frame[i] = x[s + i] * w[i];
        }
        let spec = tw.forward(&frame);
        for (k, &(re, im)) in spec.iter().enumerate().take(CANVAS) {
            data[k * CANVAS + f] = re;
            data[CANVAS * CANVAS + k * CANVAS + f] = im;
        }
        nyquist.push(spec[CANVAS].0);
    }
    let power = window_power(x.len(), p, frames);
    let edges = power
        .iter()
        .enumerate()
        .filter(|(_, &pw)| pw < EDGE_FLOOR)
        .map(|(t, _)| (t, x[t]))
        .collect();
    let meta = StftMeta { len: x.len(), n_fft: p.n_fft, hop: p.hop, frames, nyquist, edges };
    Ok(ImageTensor { channels: 2, height: CANVAS, width: CANVAS, data, mask, meta: TransformMeta::Stft(meta) })
}

/// Metadata for inverting a generated spectrogram of a length-`len` series:
/// zero Nyquist row and no stored edge samples.
pub fn template_meta(len: usize, p: &StftParams) -> Result<StftMeta> {
    p.validate()?;
    let frames = p.frames(len)?;
    Ok(StftMeta { len, n_fft: p.n_fft, hop: p.hop, frames, nyquist: vec![0.0; frames], edges: Vec::new() })
}

/// Inverse transform. Reads channels 0 (real) and 1 (imaginary).
pub fn istft(img: &ImageTensor) -> Result<Vec<f64>> {
    img.check_shape()?;
    let meta = match &img.meta {
        TransformMeta::Stft(m) => m,
        other => return Err(Error::Meta(format!("expected STFT meta, found {}", other.kind()))),
    };
    if img.channels < 2 {
        return Err(Error::Meta("STFT tensor needs real and imaginary channels".into()));
    }
    let p = StftParams { n_fft: meta.n_fft, hop: meta.hop };
    p.validate()?;
    if p.frames(meta.len)? != meta.frames || meta.nyquist.len() != meta.frames || meta.frames > img.width {
        return Err(Error::Meta("STFT meta is inconsistent with its series length".into()));
    }
    let w = hann(p.n_fft);
    let tw = Twiddles::new(p.n_fft);
    let mut acc = vec![0.0; meta.len];
    let mut frame = vec![0.0; p.n_fft];
    let mut spec = vec![(0.0, 0.0); CANVAS + 1];
    for f in 0..meta.frames {
        for (k, s) in spec.iter_mut().enumerate().take(CANVAS) {
            *s = (img.get(0, k, f), img.get(1, k, f));
        }
        spec[CANVAS] = (meta.nyquist[f], 0.0);
        tw.inverse(&spec, &mut frame);
        let s = f * p.hop;
        for i in 0..p.n_fft {
            acc[s + i] += frame[i] * w[i];
        }
    }
    let power = window_power(meta.len, &p, meta.frames);
    let mut out = vec![0.0; meta.len];
    let mut reliable = vec![false; meta.len];
    for t in 0..meta.len {
        if power[t] >= EDGE_FLOOR {
            out[t] = acc[t] / power[t];
            reliable[t] = true;
        }
    }
    if meta.edges.is_empty() {
        fill_from_nearest(&mut out, &reliable);
    } else {
        for &(t, v) in &meta.edges {
            if t >= meta.len || reliable[t] {
                return Err(Error::Meta(format!("stored edge sample {t} is not an edge")));
            }
            out[t] = v;
            reliable[t] = true;
        }
        if reliable.iter().any(|r| !r) {
            return Err(Error::Meta("stored edge samples do not cover every low-power sample".into()));
        }
    }
    Ok(out)
}

fn fill_from_nearest(out: &mut [f64], reliable: &[bool]) {
    let Some(first) = reliable.iter().position(|&r| r) else { return };
    let last = reliable.iter().rposition(|&r| r).unwrap_or(first);
    for t in 0..first {
        out[t] = out[first];
    }
    for t in last + 1..out.len() {
        out[t] = out[last];
    }
}

/// `Σ|X_k|²/N` over the full two-sided spectrum of every frame, counting the
/// Nyquist bin from the metadata. By Parseval this equals the energy of the
/// windowed frames.
pub fn spectral_energy(img: &ImageTensor) -> Result<f64> {
    let TransformMeta::Stft(meta) = &img.meta else {
        return Err(Error::Meta("expected STFT meta".into()));
    };
    let mut e = 0.0;
    for f in 0..meta.frames {
        for k in 0..CANVAS {
            let (re, im) = (img.get(0, k, f), img.get(1, k, f));
            let weight = if k == 0 { 1.0 } else { 2.0 };
            e += weight * (re * re + im * im);
        }
        e += meta.nyquist[f] * meta.nyquist[f];
    }
    Ok(e / meta.n_fft as f64)
}
