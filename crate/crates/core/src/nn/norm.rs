use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Param;

const EPS: f64 = 1e-5;

/// Group normalisation over `(channels/groups) × pixels` slices with a
/// per-channel affine.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm {
    pub gamma: Param,
    pub beta: Param,
    pub groups: usize,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct GroupNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl GroupNorm {
    pub fn new(name: &str, groups: usize, channels: usize) -> Self {
        assert!(groups > 0 && channels % groups == 0, "channels must divide into groups");
        Self {
            gamma: Param::new(format!("{name}.gamma"), vec![channels], vec![1.0; channels]),
            beta: Param::zeros(format!("{name}.beta"), vec![channels]),
            groups,
            channels,
        }
    }

    pub fn forward(&self, x: &[f64], pixels: usize) -> (Vec<f64>, GroupNormCache) {
        let per = self.channels / self.groups;
        let n = per * pixels;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; self.groups];
        for g in 0..self.groups {
            let seg = &x[g * n..(g + 1) * n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / libm::sqrt(var + EPS);
            inv_std[g] = is;
            for c in g * per..(g + 1) * per {
                let (gamma, beta) = (self.gamma.value[c], self.beta.value[c]);
                let r = c * pixels..(c + 1) * pixels;
                for ((xh, yv), &xv) in xhat[r.clone()].iter_mut().zip(&mut y[r.clone()]).zip(&x[r]) {
                    *xh = (xv - mean) * is;
                    *yv = gamma * *xh + beta;
                }
            }
        }
        (y, GroupNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &GroupNormCache, dy: &[f64], pixels: usize) -> Vec<f64> {
        let per = self.channels / self.groups;
        let n = per * pixels;
        let mut dx = vec![0.0; dy.len()];
        for g in 0..self.groups {
            let mut sum_d = 0.0;
            let mut sum_dx = 0.0;
            for c in g * per..(g + 1) * per {
                let r = c * pixels..(c + 1) * pixels;
                let (mut dg, mut db) = (0.0, 0.0);
                for (&d, &xh) in dy[r.clone()].iter().zip(&cache.xhat[r]) {
                    dg += d * xh;
                    db += d;
                }
                self.gamma.grad[c] += dg;
                self.beta.grad[c] += db;
                let gamma = self.gamma.value[c];
                sum_d += gamma * db;
                sum_dx += gamma * dg;
            }
            let k = cache.inv_std[g] / n as f64;
            for c in g * per..(g + 1) * per {
                let gamma = self.gamma.value[c];
                let r = c * pixels..(c + 1) * pixels;
                for ((o, &d), &xh) in dx[r.clone()].iter_mut().zip(&dy[r.clone()]).zip(&cache.xhat[r]) {
                    *o = k * (n as f64 * d * gamma - sum_d - xh * sum_dx);
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.gamma, &self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn backward_matches_finite_difference() {
        let mut rng = Rng::new(1);
        let mut gn = GroupNorm::new("gn", 2, 4);
        for v in gn.gamma.value.iter_mut().chain(gn.beta.value.iter_mut()) {
            *v = rng.normal();
        }
        let px = 6;
        let x: Vec<f64> = (0..4 * px).map(|_| rng.normal()).collect();
        let g: Vec<f64> = (0..4 * px).map(|_| rng.normal()).collect();
        let loss = |gn: &GroupNorm, x: &[f64]| -> f64 { gn.forward(x, px).0.iter().zip(&g).map(|(a, b)| a * b).sum() };
        let (_, cache) = gn.forward(&x, px);
        let dx = gn.backward(&cache, &g, px);
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            let fd = (loss(&gn, &xp) - loss(&gn, &xm)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-6);
        }
    }
}
