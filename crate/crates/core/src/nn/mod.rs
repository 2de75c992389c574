//! Minimal layers with explicit forward caches and hand-written backward
//! passes. Activations are single samples laid out `channels × pixels`.

mod adam;
mod conv;
mod gemm;
mod linear;
mod norm;
mod param;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use conv::{Conv2d, ConvCache};
pub use gemm::matmul;
pub use linear::Linear;
pub use norm::{GroupNorm, GroupNormCache};
pub use param::Param;

#[cfg(feature = "std")]
#[inline]
fn exp(x: f64) -> f64 {
    extern crate std;
    x.exp()
}

#[cfg(not(feature = "std"))]
#[inline]
fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

pub fn silu(x: &[f64]) -> alloc::vec::Vec<f64> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// `dx = dy · silu'(x)`, written into `dy`.
pub fn silu_backward(x: &[f64], dy: &mut [f64]) {
    for (g, &v) in dy.iter_mut().zip(x) {
        let s = sigmoid(v);
        *g *= s * (1.0 + v * (1.0 - s));
    }
}

/// Transformer-style sinusoidal embedding of a diffusion step.
pub fn sinusoidal_embedding(step: usize, dim: usize) -> alloc::vec::Vec<f64> {
    let half = dim / 2;
    let mut out = alloc::vec![0.0; dim];
    for i in 0..half {
        let freq = libm::exp(-libm::log(10_000.0) * i as f64 / half as f64);
        let a = step as f64 * freq;
        out[i] = libm::sin(a);
        out[half + i] = libm::cos(a);
    }
    out
}
