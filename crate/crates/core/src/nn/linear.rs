use alloc::format;
use alloc::vec::Vec;

use super::Param;
use crate::rng::Rng;

/// Dense layer `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Fan-in scaled uniform init, `U(−1/√in, 1/√in)`.
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let w = (0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        let b = (0..fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self {
            weight: Param::new(format!("{name}.weight"), alloc::vec![fan_out, fan_in], w),
            bias: Param::new(format!("{name}.bias"), alloc::vec![fan_out], b),
            fan_in,
            fan_out,
        }
    }

    pub fn zeroed(name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Param::zeros(format!("{name}.weight"), alloc::vec![fan_out, fan_in]),
            bias: Param::zeros(format!("{name}.bias"), alloc::vec![fan_out]),
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.fan_out)
            .map(|o| {
                let row = &self.weight.value[o * self.fan_in..(o + 1) * self.fan_in];
                self.bias.value[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut dx = alloc::vec![0.0; self.fan_in];
        for o in 0..self.fan_out {
            let g = dy[o];
            self.bias.grad[o] += g;
            let row = o * self.fan_in;
            for i in 0..self.fan_in {
                self.weight.grad[row + i] += g * x[i];
                dx[i] += g * self.weight.value[row + i];
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}
