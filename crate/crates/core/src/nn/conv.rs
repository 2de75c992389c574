use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::gemm::gemm;
use super::Param;
use crate::rng::Rng;

/// Stride-1 "same" convolution with a square odd kernel (1×1 or 3×3).
///
/// The input is zero-padded once and each kernel tap becomes one GEMM over a
/// shifted view of the padded planes. Outputs are produced in a "wide"
/// layout whose rows are `w + 2r` long; the extra columns are discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

/// What the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    /// Padded input planes, `cin × stride`.
    padded: Vec<f64>,
}

/// Geometry of the padded, wide layout.
#[derive(Clone, Copy)]
struct Wide {
    r: usize,
    /// Padded row length.
    wp: usize,
    /// Distance between padded planes; leaves room for the largest shift.
    stride: usize,
    /// Length of one wide output plane.
    span: usize,
}

impl Conv2d {
    /// Fan-in scaled uniform init, `U(−1/√fan_in, 1/√fan_in)` with `fan_in = cin·k²`.
    pub fn new(name: &str, cin: usize, cout: usize, kernel: usize, rng: &mut Rng) -> Self {
        assert!(kernel % 2 == 1);
        let fan_in = cin * kernel * kernel;
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let w = (0..cout * fan_in).map(|_| rng.uniform_range(-bound, bound)).collect();
        let b = (0..cout).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self {
            weight: Param::new(format!("{name}.weight"), vec![cout, cin, kernel, kernel], w),
            bias: Param::new(format!("{name}.bias"), vec![cout], b),
            cin,
            cout,
            kernel,
        }
    }

    fn wide(&self, h: usize, w: usize) -> Wide {
        let r = self.kernel / 2;
        let wp = w + 2 * r;
        Wide { r, wp, stride: (h + 2 * r) * wp + 2 * r, span: h * wp }
    }

    fn pad(&self, x: &[f64], h: usize, w: usize, g: Wide) -> Vec<f64> {
        let mut out = vec![0.0; self.cin * g.stride];
        for c in 0..self.cin {
            for y in 0..h {
                let dst = c * g.stride + (y + g.r) * g.wp + g.r;
                out[dst..dst + w].copy_from_slice(&x[(c * h + y) * w..(c * h + y + 1) * w]);
            }
        }
        out
    }

    /// Offset of kernel tap `t` in the padded plane.
    fn tap_offset(&self, t: usize, g: Wide) -> usize {
        (t / self.kernel) * g.wp + t % self.kernel
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> (Vec<f64>, ConvCache) {
        debug_assert_eq!(x.len(), self.cin * h * w);
        let g = self.wide(h, w);
        let kk = self.kernel * self.kernel;
        let padded = self.pad(x, h, w, g);
        let mut wide = vec![0.0; self.cout * g.span];
        for t in 0..kk {
            let off = self.tap_offset(t, g);
            // wide (cout × span) += W_t (cout × cin) · view_t (cin × span)
            gemm(
                self.cout,
                self.cin,
                g.span,
                (&self.weight.value[t..], self.cin * kk, kk),
                (&padded[off..], g.stride, 1),
                (&mut wide, g.span, 1),
                1.0,
            );
        }
        let mut y = vec![0.0; self.cout * h * w];
        for o in 0..self.cout {
            let b = self.bias.value[o];
            for yy in 0..h {
                let src = &wide[o * g.span + yy * g.wp..o * g.span + yy * g.wp + w];
                for (d, s) in y[(o * h + yy) * w..(o * h + yy + 1) * w].iter_mut().zip(src) {
                    *d = s + b;
                }
            }
        }
        (y, ConvCache { padded })
    }

    /// Forward without keeping the padded input.
    pub fn infer(&self, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        self.forward(x, h, w).0
    }

    /// Accumulates parameter gradients; returns `dx` when `need_dx`.
    pub fn backward(&mut self, cache: &ConvCache, dy: &[f64], h: usize, w: usize, need_dx: bool) -> Option<Vec<f64>> {
        let g = self.wide(h, w);
        let kk = self.kernel * self.kernel;
        let p = h * w;
        for (o, chunk) in dy.chunks(p).enumerate() {
            self.bias.grad[o] += chunk.iter().sum::<f64>();
        }
        // Extra wide columns stay zero so they contribute nothing below.
        let mut dwide = vec![0.0; self.cout * g.span];
        for o in 0..self.cout {
            for yy in 0..h {
                let dst = o * g.span + yy * g.wp;
                dwide[dst..dst + w].copy_from_slice(&dy[(o * h + yy) * w..(o * h + yy + 1) * w]);
            }
        }
        let mut dpad = if need_dx { vec![0.0; self.cin * g.stride] } else { Vec::new() };
        for t in 0..kk {
            let off = self.tap_offset(t, g);
            // dW_t (cout × cin) += dwide (cout × span) · view_tᵀ (span × cin)
            gemm(
                self.cout,
                g.span,
                self.cin,
                (&dwide, g.span, 1),
                (&cache.padded[off..], 1, g.stride),
                (&mut self.weight.grad[t..], self.cin * kk, kk),
                1.0,
            );
            if need_dx {
                // view_t (cin × span) += W_tᵀ (cin × cout) · dwide (cout × span)
                gemm(
                    self.cin,
                    self.cout,
                    g.span,
                    (&self.weight.value[t..], kk, self.cin * kk),
                    (&dwide, g.span, 1),
                    (&mut dpad[off..], g.stride, 1),
                    1.0,
                );
            }
        }
        if !need_dx {
            return None;
        }
        let mut dx = vec![0.0; self.cin * p];
        for c in 0..self.cin {
            for y in 0..h {
                let src = c * g.stride + (y + g.r) * g.wp + g.r;
                dx[(c * h + y) * w..(c * h + y + 1) * w].copy_from_slice(&dpad[src..src + w]);
            }
        }
        Some(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}
