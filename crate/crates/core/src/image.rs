//! Channel-major image tensors with a shared spatial validity mask.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Canvas side length shared by both transforms.
pub const CANVAS: usize = 32;

/// How a tensor was produced from a series, with everything needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformMeta {
    DelayEmbedding(DelayMeta),
    Stft(StftMeta),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayMeta {
    pub len: usize,
    pub tau: usize,
    pub dim: usize,
    /// First series index encoded by each valid column.
    pub column_starts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftMeta {
    pub len: usize,
    pub n_fft: usize,
    pub hop: usize,
    pub frames: usize,
    /// Real part of the dropped Nyquist bin, one per frame (its imaginary part is zero for real input).
    pub nyquist: Vec<f64>,
    /// Samples whose summed squared window falls below the reliability floor,
    /// stored verbatim. Empty for generated tensors, in which case they are
    /// filled from the nearest reliable samples.
    pub edges: Vec<(usize, f64)>,
}

impl TransformMeta {
    pub fn source_len(&self) -> usize {
        match self {
            TransformMeta::DelayEmbedding(m) => m.len,
            TransformMeta::Stft(m) => m.len,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TransformMeta::DelayEmbedding(_) => "delay",
            TransformMeta::Stft(_) => "stft",
        }
    }

    /// Number of channels the transform produces before any lifting.
    pub fn native_channels(&self) -> usize {
        match self {
            TransformMeta::DelayEmbedding(_) => 1,
            TransformMeta::Stft(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `channels × height × width`, row-major within a channel.
    pub data: Vec<f64>,
    /// `height × width`; false on padding cells, which hold exactly zero.
    pub mask: Vec<bool>,
    pub meta: TransformMeta,
}

impl ImageTensor {
    pub fn zeros(channels: usize, height: usize, width: usize, mask: Vec<bool>, meta: TransformMeta) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width], mask, meta }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f64) {
        self.data[(c * self.height + row) * self.width + col] = v;
    }

    pub fn valid_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Force padding cells back to zero.
    pub fn apply_mask(&mut self) {
        let p = self.plane();
        for c in 0..self.channels {
            for (i, &m) in self.mask.iter().enumerate() {
                if !m {
                    self.data[c * p + i] = 0.0;
                }
            }
        }
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        if self.data.len() != self.channels * self.plane() || self.mask.len() != self.plane() {
            return Err(Error::Shape(format!(
                "tensor {}x{}x{} has {} values and {} mask cells",
                self.channels,
                self.height,
                self.width,
                self.data.len(),
                self.mask.len()
            )));
        }
        Ok(())
    }
}
